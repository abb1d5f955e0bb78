#pragma once

// Checkpoint directory: manifest.json describing every tensor plus a single
// params.bin blob of little-endian float32 values.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "plc/nn.hpp"

namespace plc {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct Checkpoint {
  std::string stage;  // "contrastive" or "adversarial"
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> frozen;
  nlohmann::json config = nlohmann::json::object();
  /// Model (and discriminator) parameters, in module walk order.
  NamedTensors parameters;
  /// Optimizer moments, keyed by optimizer name then moment name.
  std::vector<std::pair<std::string, NamedTensors>> optimizers;
  std::vector<std::pair<std::string, std::uint64_t>> optimizer_steps;
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kBlobName = "params.bin";

NamedTensors snapshot(const std::vector<NamedParameter>& params);

/// Writes manifest.json and params.bin into `dir` (created if needed).
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
/// Throws ConfigError when the directory or manifest is missing and
/// CorruptionError naming the first tensor that disagrees with the blob.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Copies stored values into `params`. Every parameter must be present with
/// the same shape unless `allow_missing`; extra stored tensors are ignored.
void restore(const NamedTensors& stored, const std::vector<NamedParameter>& params, bool allow_missing = false);

}  // namespace plc
