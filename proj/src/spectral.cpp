#include "plc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "plc/audio.hpp"
#include "plc/errors.hpp"
#include "plc/fft.hpp"

namespace plc::spectral {

Framing Framing::model() {
  Framing f;
  f.fft_size = audio::kFftSize;
  f.hop = audio::kHop;
  f.left_pad = audio::kLeftPad;
  f.window = audio::sqrt_hann(audio::kWindow);
  return f;
}

Framing Framing::hann(std::size_t fft_size) {
  Framing f;
  f.fft_size = fft_size;
  f.hop = fft_size / 4;
  f.left_pad = fft_size - f.hop;
  f.window = hann_window(fft_size);
  return f;
}

std::vector<Real> hann_window(std::size_t n) {
  std::vector<Real> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * Real(i) / Real(n));
  return w;
}

Var stft(const Var& wave, const Framing& framing) {
  const Shape& s = wave.shape();
  if (!((s.size() == 3 && s[1] == 1) || s.size() == 2)) throw ShapeError("stft expects (B, 1, L) or (B, L)");
  if (framing.window.size() != framing.fft_size || framing.hop == 0) throw ShapeError("stft: inconsistent framing");
  const std::size_t B = s[0], L = s.back(), N = framing.fft_size, F = framing.bins();
  if (L == 0) throw ShapeError("stft of an empty waveform");
  const std::size_t T = framing.frames(L);
  const auto sample = [hop = framing.hop, pad = framing.left_pad](std::size_t t, std::size_t i) -> std::ptrdiff_t {
    return std::ptrdiff_t(t * hop + i) - std::ptrdiff_t(pad);
  };

  Tensor out({B, 2, T, F});
  std::vector<Real> frame(N);
  std::vector<fft::Complex> bins(F);
  for (std::size_t b = 0; b < B; ++b) {
    const Real* x = wave.value().data() + b * L;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < N; ++i) {
        const auto n = sample(t, i);
        frame[i] = (n >= 0 && n < std::ptrdiff_t(L)) ? x[n] * framing.window[i] : 0.0;
      }
      fft::rfft(frame, bins);
      for (std::size_t f = 0; f < F; ++f) {
        out[((b * 2 + 0) * T + t) * F + f] = bins[f].real();
        out[((b * 2 + 1) * T + t) * F + f] = bins[f].imag();
      }
    }
  }
  return make_result(std::move(out), {wave}, [wave, framing, B, L, N, F, T, sample](const Node& self) {
    Tensor* g = grad_target(wave);
    if (!g) return;
    // Adjoint of the windowed real DFT: Re(sum_f G_f e^{+i 2 pi f n / N}),
    // computed with the Hermitian inverse after halving interior bins.
    std::vector<fft::Complex> spec(F);
    std::vector<Real> frame(N);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < F; ++f) {
          const Real re = self.grad[((b * 2 + 0) * T + t) * F + f];
          const Real im = self.grad[((b * 2 + 1) * T + t) * F + f];
          const bool edge = f == 0 || (N % 2 == 0 && f == N / 2);
          spec[f] = edge ? fft::Complex(re, 0) : fft::Complex(0.5 * re, 0.5 * im);
        }
        fft::irfft(spec, frame);
        for (std::size_t i = 0; i < N; ++i) {
          const auto n = sample(t, i);
          if (n >= 0 && n < std::ptrdiff_t(L)) (*g)[b * L + n] += frame[i] * framing.window[i];
        }
      }
    }
  });
}

namespace {

void require_spec(const Var& spec, const char* what) {
  if (spec.shape().size() != 4 || spec.dim(1) != 2) throw ShapeError(std::string(what) + " expects (B, 2, T, F)");
}

}  // namespace

Var power_compress(const Var& spec, Real exponent, Real eps) {
  require_spec(spec, "power_compress");
  if (!(exponent > 0 && exponent <= 1)) throw ParameterError("compression exponent must lie in (0, 1]");
  const std::size_t B = spec.dim(0), P = spec.dim(2) * spec.dim(3);
  Tensor out(spec.shape());
  const Tensor& x = spec.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < P; ++i) {
      const Real re = x[(b * 2) * P + i], im = x[(b * 2 + 1) * P + i];
      const Real m2 = re * re + im * im + eps;
      const Real gain = std::pow(m2, 0.5 * (exponent - 1));
      out[(b * 2) * P + i] = re * gain;
      out[(b * 2 + 1) * P + i] = im * gain;
    }
  return make_result(std::move(out), {spec}, [spec, exponent, eps, B, P](const Node& self) {
    Tensor* g = grad_target(spec);
    if (!g) return;
    const Tensor& x = spec.value();
    const Real k = exponent - 1;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < P; ++i) {
        const Real re = x[(b * 2) * P + i], im = x[(b * 2 + 1) * P + i];
        const Real m2 = re * re + im * im + eps;
        const Real gain = std::pow(m2, 0.5 * k);
        // d(re*gain)/dre = gain + k re^2 gain / m2, cross terms k re im gain / m2.
        const Real c = k * gain / m2;
        const Real gr = self.grad[(b * 2) * P + i], gi = self.grad[(b * 2 + 1) * P + i];
        (*g)[(b * 2) * P + i] += gr * (gain + c * re * re) + gi * c * re * im;
        (*g)[(b * 2 + 1) * P + i] += gi * (gain + c * im * im) + gr * c * re * im;
      }
  });
}

Var magnitude(const Var& spec, Real eps) {
  require_spec(spec, "magnitude");
  const std::size_t B = spec.dim(0), T = spec.dim(2), F = spec.dim(3), P = T * F;
  Tensor out({B, T, F});
  const Tensor& x = spec.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < P; ++i) {
      const Real re = x[(b * 2) * P + i], im = x[(b * 2 + 1) * P + i];
      out[b * P + i] = std::sqrt(re * re + im * im + eps);
    }
  Tensor mag = out;
  return make_result(std::move(out), {spec}, [spec, mag = std::move(mag), B, P](const Node& self) {
    Tensor* g = grad_target(spec);
    if (!g) return;
    const Tensor& x = spec.value();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < P; ++i) {
        const Real s = self.grad[b * P + i] / mag[b * P + i];
        (*g)[(b * 2) * P + i] += s * x[(b * 2) * P + i];
        (*g)[(b * 2 + 1) * P + i] += s * x[(b * 2 + 1) * P + i];
      }
  });
}

Var mel_project(const Var& mag, const Tensor& filterbank) {
  if (mag.shape().size() != 3 || filterbank.rank() != 2 || filterbank.dim(1) != mag.dim(2)) {
    throw ShapeError("mel_project: magnitudes " + shape_str(mag.shape()) + " with filterbank " +
                     shape_str(filterbank.shape()));
  }
  const std::size_t R = mag.dim(0) * mag.dim(1), F = mag.dim(2), M = filterbank.dim(0);
  Tensor out({mag.dim(0), mag.dim(1), M});
  const Tensor& x = mag.value();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t m = 0; m < M; ++m) {
      Real acc = 0;
      for (std::size_t f = 0; f < F; ++f) acc += filterbank[m * F + f] * x[r * F + f];
      out[r * M + m] = acc;
    }
  return make_result(std::move(out), {mag}, [mag, filterbank, R, F, M](const Node& self) {
    Tensor* g = grad_target(mag);
    if (!g) return;
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t m = 0; m < M; ++m) {
        const Real gy = self.grad[r * M + m];
        if (gy == 0) continue;
        for (std::size_t f = 0; f < F; ++f) (*g)[r * F + f] += gy * filterbank[m * F + f];
      }
  });
}

Var log_clamped(const Var& x, Real floor) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(x.value()[i], floor));
  return make_result(std::move(out), {x}, [x, floor](const Node& self) {
    Tensor* g = grad_target(x);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) {
      if (x.value()[i] > floor) (*g)[i] += self.grad[i] / x.value()[i];
    }
  });
}

double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(std::size_t mels, std::size_t fft_size, double sample_rate, double fmin, double fmax) {
  if (mels == 0 || fft_size < 2 || !(fmax > fmin) || fmin < 0) throw ParameterError("mel_filterbank: bad geometry");
  const std::size_t F = fft_size / 2 + 1;
  std::vector<double> edges(mels + 2);
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_to_hz(lo + (hi - lo) * double(i) / double(mels + 1));
  Tensor fb({mels, F});
  for (std::size_t m = 0; m < mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (std::size_t f = 0; f < F; ++f) {
      const double hz = double(f) * sample_rate / double(fft_size);
      double w = 0;
      if (hz > left && hz <= centre) w = (hz - left) / (centre - left);
      else if (hz > centre && hz < right) w = (right - hz) / (right - centre);
      fb[m * F + f] = w;
    }
  }
  return fb;
}

}  // namespace plc::spectral
