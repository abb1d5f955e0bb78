#pragma once

#include <stdexcept>
#include <string>

namespace plc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unsupported or malformed container (WAV header, checkpoint manifest).
class FormatError : public Error {
 public:
  FormatError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Tensor or sequence dimensions that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A signal too short for the requested analysis.
class LengthError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

/// A configuration value or argument outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Checkpoint blob and manifest disagree.
class CorruptionError : public Error {
 public:
  CorruptionError(const std::string& tensor, const std::string& what)
      : Error(tensor + ": " + what), tensor_(tensor) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

/// Invalid numeric domain (zero-norm vectors, empty distributions).
class MathError : public Error {
 public:
  using Error::Error;
};

/// A packet trace that does not cover the audio it is applied to.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// Protocol violations in a streaming session.
class SessionError : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace plc
