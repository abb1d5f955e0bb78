#pragma once

// Differentiable spectral operations on waveforms used by the training
// losses, and the triangular mel filterbank shared with the metrics.

#include <vector>

#include "plc/autograd.hpp"

namespace plc::spectral {

/// Framing of a causal short-time transform: frame t covers padded samples
/// [t*hop, t*hop + fft_size) after `left_pad` zeros are prepended; there are
/// ceil(len / hop) frames and the tail is zero-padded.
struct Framing {
  std::size_t fft_size = 320;
  std::size_t hop = 160;
  std::size_t left_pad = 160;
  std::vector<Real> window;

  std::size_t bins() const noexcept { return fft_size / 2 + 1; }
  std::size_t frames(std::size_t samples) const noexcept { return (samples + hop - 1) / hop; }

  /// The model front end: sqrt-Hann 320/160 with 160 samples of left padding.
  static Framing model();
  /// Periodic Hann window of `fft_size`, hop fft_size/4, left pad fft_size - hop.
  static Framing hann(std::size_t fft_size);
};

std::vector<Real> hann_window(std::size_t n);

/// Waveforms (B, 1, L) or (B, L) -> (B, 2, T, F) with real and imaginary parts.
Var stft(const Var& wave, const Framing& framing);

/// (B, 2, T, F) -> same shape scaled to magnitude (|X|^2 + eps)^(p/2) along
/// the original phase.
Var power_compress(const Var& spec, Real exponent, Real eps = 1e-8);

/// (B, 2, T, F) -> (B, T, F) sqrt(re^2 + im^2 + eps).
Var magnitude(const Var& spec, Real eps = 1e-8);

/// (B, T, F) x filterbank (M, F) -> (B, T, M).
Var mel_project(const Var& mag, const Tensor& filterbank);

/// log(max(x, floor)); zero gradient where clamped.
Var log_clamped(const Var& x, Real floor);

double hz_to_mel(double hz) noexcept;
double mel_to_hz(double mel) noexcept;

/// HTK-scale triangular filters (M, fft_size/2 + 1) between fmin and fmax,
/// each peaking at 1 on its centre frequency.
Tensor mel_filterbank(std::size_t mels, std::size_t fft_size, double sample_rate, double fmin, double fmax);

}  // namespace plc::spectral
