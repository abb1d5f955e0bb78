#pragma once

// Differentiable tensor operations. Layout conventions: frame-rate features are
// (batch, channels, frames); spectrogram-like maps are (batch, channels,
// frames, bins); waveforms inside the network are (batch, channels, samples).

#include <vector>

#include "plc/autograd.hpp"

namespace plc {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real factor);

Var sum(const Var& a);
Var mean(const Var& a);
/// mean((a - target)^2)
Var mean_square_dev(const Var& a, Real target);
Var mse(const Var& a, const Var& b);
/// mean(|a - b|)
Var l1(const Var& a, const Var& b);

Var tanh(const Var& a);
Var leaky_relu(const Var& a, Real slope);
/// Per-channel PReLU; alpha has shape (C) and x is (B, C, ...).
Var prelu(const Var& x, const Var& alpha);
/// Normalises (B, C, T) over C at every (b, t), then applies gain/bias (C).
Var layer_norm_channels(const Var& x, const Var& gain, const Var& bias, Real eps = 1e-5);

Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t count);
Var reshape(const Var& x, Shape shape);

/// (B, C, T, F) -> (B, C*F, T) with row index c*F + f.
Var fold_frequency(const Var& x);
/// Inverse of fold_frequency.
Var unfold_frequency(const Var& x, std::size_t channels);

/// Multiplies (B, C, T) by a constant per-frame factor keep (B, T).
Var mask_frames(const Var& x, const Tensor& keep);

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
};
/// x (B, Cin, L), w (Cout, Cin/groups, K), bias (Cout) or undefined.
Var conv1d(const Var& x, const Var& w, const Var& bias, const Conv1dOptions& opt);

struct Conv2dOptions {
  std::size_t pad_t_left = 0;
  std::size_t stride_f = 1;
  std::size_t pad_f_left = 0;
  std::size_t pad_f_right = 0;
};
/// x (B, Cin, T, F), w (Cout, Cin, KT, KF); unit stride along time.
Var conv2d(const Var& x, const Var& w, const Var& bias, const Conv2dOptions& opt);

/// Repeats every sample `factor` times along the last axis of (B, C, L).
Var upsample_nearest(const Var& x, std::size_t factor);
/// Average pooling with zero padding counted in the denominator.
Var avg_pool1d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad);
/// (B, C, L) -> (B*period, C, ceil(L/period)); reflect-pads L to a multiple of
/// period and places phase j of item b at batch index b*period + j.
Var period_fold(const Var& x, std::size_t period);

/// Grouped attention over a causal window of `window` past frames plus the
/// current one. q is (B, C, Tq); k, v are (B, C, past + Tq); key_valid
/// (B, past + Tq) marks usable keys. When `weights` is given it receives the
/// (B, G, Tq, window + 1) attention weights, slot s addressing key
/// t + past - window + s.
Var windowed_attention(const Var& q, const Var& k, const Var& v, const Tensor& key_valid, std::size_t groups,
                       std::size_t window, std::size_t past = 0, Tensor* weights = nullptr);

}  // namespace plc
