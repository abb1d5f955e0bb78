#pragma once

// Waveform I/O and the frame-level spectral representation fed to the
// encoders: 20 ms square-root-Hann windows every 10 ms, causally aligned.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "plc/tensor.hpp"

namespace plc::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kWindow = 320;
inline constexpr std::size_t kHop = 160;
inline constexpr std::size_t kFftSize = 320;
inline constexpr std::size_t kBins = kFftSize / 2 + 1;
/// Left padding that makes frame t depend only on samples [0, t*hop + hop).
inline constexpr std::size_t kLeftPad = kWindow - kHop;

/// Mono PCM audio at 16 kHz with samples nominally in [-1, 1].
struct AudioClip {
  std::vector<Real> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  /// Throws ParameterError on a foreign sample rate or non-finite samples.
  void validate() const;
};

AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Parses an in-memory RIFF/WAVE image (same rules as read_wav).
AudioClip parse_wav(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);

/// Rounds to PCM16 (x * 32768, clamped).
std::int16_t to_pcm16(Real sample) noexcept;
Real from_pcm16(std::int16_t sample) noexcept;

using Complex = std::complex<Real>;

struct ComplexSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = kBins;
  std::vector<Complex> values;  // frame-major

  Complex& at(std::size_t t, std::size_t f) { return values[t * bins + f]; }
  const Complex& at(std::size_t t, std::size_t f) const { return values[t * bins + f]; }
};

/// Channel 0 holds |X|^p cos(arg X), channel 1 holds |X|^p sin(arg X).
struct CompressedSpectrogram {
  Real exponent = 0.3;
  Tensor data;  // (2, frames, bins)

  std::size_t frames() const { return data.dim(1); }
  std::size_t bins() const { return data.dim(2); }
};

/// Periodic square-root Hann window of length n.
std::vector<Real> sqrt_hann(std::size_t n);

/// ceil(samples / hop).
std::size_t frame_count(std::size_t samples) noexcept;

/// DFT of one analysis frame of kWindow samples (window applied here).
void analyze_frame(std::span<const Real> frame, std::span<Complex> bins);

ComplexSpectrogram stft(const AudioClip& clip);

/// Windowed overlap-add in padded coordinates: length (T-1)*hop + window,
/// where index i corresponds to original sample i - kLeftPad.
std::vector<Real> overlap_add(const ComplexSpectrogram& spec);

/// Inverse of stft in original coordinates, truncated to `length` samples
/// (default T*hop). Exact except for the final hop, which only one frame covers.
AudioClip istft(const ComplexSpectrogram& spec, std::size_t length = 0);

CompressedSpectrogram power_compress(const ComplexSpectrogram& spec, Real exponent);
ComplexSpectrogram power_expand(const CompressedSpectrogram& cspec);

}  // namespace plc::audio
