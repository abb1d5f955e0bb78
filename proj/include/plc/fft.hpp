#pragma once

#include <complex>
#include <span>

#include "plc/tensor.hpp"

namespace plc::fft {

using Complex = std::complex<Real>;

/// Forward real DFT of in.size() samples into in.size()/2 + 1 bins,
/// X[f] = sum_n x[n] exp(-2 pi i f n / N).
void rfft(std::span<const Real> in, std::span<Complex> out);

/// Unnormalised inverse of rfft: out[n] = sum over the Hermitian-completed
/// spectrum of X[f] exp(2 pi i f n / N). Imaginary parts of the DC and
/// Nyquist bins are ignored.
void irfft(std::span<const Complex> in, std::span<Real> out);

}  // namespace plc::fft
