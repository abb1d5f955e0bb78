#pragma once

// Compute kernels behind the differentiable ops. Every kernel has an
// OpenMP-parallel implementation (namespace plc::kernels) and a plain serial
// implementation (plc::kernels::reference) that the tests and the benchmark
// compare against. Parallel kernels partition work by output rows, so results
// do not depend on the thread count.

#include <cstddef>

#include "plc/tensor.hpp"

namespace plc::kernels {

struct Conv1dGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t in_length = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;

  std::size_t out_length() const noexcept;
  /// Throws ShapeError on inconsistent channel/group counts.
  void validate() const;
};

// x: (B, Cin, Lin), w: (Cout, Cin/groups, K), y: (B, Cout, Lout).
void conv1d_forward(const Conv1dGeometry& g, const Real* x, const Real* w, const Real* bias, Real* y);
// Accumulates into gx.
void conv1d_backward_input(const Conv1dGeometry& g, const Real* gy, const Real* w, Real* gx);
// Accumulates into gw and (when non-null) gb.
void conv1d_backward_weight(const Conv1dGeometry& g, const Real* gy, const Real* x, Real* gw, Real* gb);

/// Convolution over (time, frequency) with unit time stride and left-only
/// time padding, i.e. causal along time.
struct Conv2dGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t kernel_t = 1;
  std::size_t kernel_f = 1;
  std::size_t pad_t_left = 0;
  std::size_t stride_f = 1;
  std::size_t pad_f_left = 0;
  std::size_t pad_f_right = 0;

  std::size_t out_frames() const noexcept;
  std::size_t out_bins() const noexcept;
  void validate() const;
};

// x: (B, Cin, T, F), w: (Cout, Cin, KT, KF), y: (B, Cout, Tout, Fout).
void conv2d_forward(const Conv2dGeometry& g, const Real* x, const Real* w, const Real* bias, Real* y);
void conv2d_backward_input(const Conv2dGeometry& g, const Real* gy, const Real* w, Real* gx);
void conv2d_backward_weight(const Conv2dGeometry& g, const Real* gy, const Real* x, Real* gw, Real* gb);

/// Grouped scaled-dot-product attention over a causal sliding window.
/// Queries cover frames [past, past + queries) of a key sequence of length
/// past + queries; query i sees keys j with i + past - window <= j <= i + past
/// and key_valid[j] != 0. Rows with no visible key produce zeros.
struct AttentionGeometry {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t groups = 1;
  std::size_t queries = 0;
  std::size_t past = 0;
  std::size_t window = 1;

  std::size_t keys() const noexcept { return past + queries; }
  std::size_t head_dim() const noexcept { return channels / groups; }
  /// Number of weight slots per (batch, group, query).
  std::size_t span() const noexcept { return window + 1; }
  void validate() const;
};

// q: (B, C, Tq); k, v: (B, C, Tk); key_valid: (B, Tk);
// y: (B, C, Tq); weights: (B, G, Tq, window + 1), slot s <-> key i + past - window + s.
void attention_forward(const AttentionGeometry& g, const Real* q, const Real* k, const Real* v,
                       const Real* key_valid, Real* y, Real* weights);
// Accumulates into gq, gk, gv (each may be null).
void attention_backward(const AttentionGeometry& g, const Real* gy, const Real* q, const Real* k,
                        const Real* v, const Real* weights, Real* gq, Real* gk, Real* gv);

/// Deterministic dot product with a fixed 8-lane accumulation order.
Real dot(const Real* a, const Real* b, std::size_t n) noexcept;

/// Sets the worker count used by the parallel kernels; 0 means one worker.
void set_num_workers(int workers);
int num_workers() noexcept;

namespace reference {

void conv1d_forward(const Conv1dGeometry& g, const Real* x, const Real* w, const Real* bias, Real* y);
void conv1d_backward_input(const Conv1dGeometry& g, const Real* gy, const Real* w, Real* gx);
void conv1d_backward_weight(const Conv1dGeometry& g, const Real* gy, const Real* x, Real* gw, Real* gb);

void conv2d_forward(const Conv2dGeometry& g, const Real* x, const Real* w, const Real* bias, Real* y);
void conv2d_backward_input(const Conv2dGeometry& g, const Real* gy, const Real* w, Real* gx);
void conv2d_backward_weight(const Conv2dGeometry& g, const Real* gy, const Real* x, Real* gw, Real* gb);

void attention_forward(const AttentionGeometry& g, const Real* q, const Real* k, const Real* v,
                       const Real* key_valid, Real* y, Real* weights);
void attention_backward(const AttentionGeometry& g, const Real* gy, const Real* q, const Real* k,
                        const Real* v, const Real* weights, Real* gq, Real* gk, Real* gv);

}  // namespace reference

}  // namespace plc::kernels
