#include "plc/kernels.hpp"

#include <cblas.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "plc/errors.hpp"

namespace plc::kernels {

namespace {

using Index = std::ptrdiff_t;

// The parallel kernels own the threading; BLAS calls stay on the caller's thread.
const bool kSingleThreadedBlas = (openblas_set_num_threads(1), true);

inline void axpy(Real a, const Real* __restrict x, Real* __restrict y, Index n) {
  for (Index i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

Real dot(const Real* a, const Real* b, std::size_t n) noexcept {
  Real acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  for (; i < n; ++i) acc[i & 7] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

void set_num_workers(int workers) {
  omp_set_num_threads(std::max(1, workers));
  openblas_set_num_threads(1);
}
int num_workers() noexcept { return omp_get_max_threads(); }

// ---------------------------------------------------------------------------
// conv1d

std::size_t Conv1dGeometry::out_length() const noexcept {
  const std::size_t padded = in_length + pad_left + pad_right;
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (padded < span || stride == 0) return 0;
  return (padded - span) / stride + 1;
}

void Conv1dGeometry::validate() const {
  if (groups == 0 || in_channels % groups || out_channels % groups) {
    throw ShapeError("conv1d channels " + std::to_string(in_channels) + "->" + std::to_string(out_channels) +
                     " not divisible by groups " + std::to_string(groups));
  }
  if (kernel == 0 || stride == 0 || dilation == 0) throw ShapeError("conv1d kernel/stride/dilation must be >= 1");
  if (out_length() == 0) {
    throw ShapeError("conv1d input length " + std::to_string(in_length) + " shorter than receptive field");
  }
}

// The parallel convolutions lower each (batch, group) slice to a matrix
// product over an unfolded input ("columns"): rows index (input channel, tap),
// columns index output positions. The output axis is processed in chunks so
// the unfolded buffer stays bounded. BLAS runs single-threaded; the OpenMP
// partition is over slices whose outputs do not overlap.
constexpr Index kColumnBudget = Index{1} << 18;

inline Index chunk_columns(Index rows, Index total) {
  return std::clamp<Index>(kColumnBudget / std::max<Index>(rows, 1), 1, std::max<Index>(total, 1));
}

inline void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, Real alpha, const Real* a, Index lda,
                 const Real* b, Index ldb, Real beta, Real* c, Index ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<blasint>(m), static_cast<blasint>(n), static_cast<blasint>(k), alpha, a,
              static_cast<blasint>(lda), b, static_cast<blasint>(ldb), beta, c, static_cast<blasint>(ldc));
}

struct Conv1dLowering {
  Index cin_g, K, S, D, P, Lin;

  bool direct() const { return K == 1 && S == 1 && P == 0; }
  Index rows() const { return cin_g * K; }

  // col(cl * K + k, o - o0) = x(cl, o * S + k * D - P) for o in [o0, o1).
  void unfold(const Real* x, Index o0, Index o1, Real* col) const {
    const Index n = o1 - o0;
    for (Index cl = 0; cl < cin_g; ++cl) {
      const Real* xr = x + cl * Lin;
      for (Index k = 0; k < K; ++k) {
        Real* cr = col + (cl * K + k) * n;
        const Index off = k * D - P;
        for (Index o = o0; o < o1; ++o) {
          const Index i = o * S + off;
          cr[o - o0] = (i >= 0 && i < Lin) ? xr[i] : Real{0};
        }
      }
    }
  }

  void fold(const Real* col, Index o0, Index o1, Real* gx) const {
    const Index n = o1 - o0;
    for (Index cl = 0; cl < cin_g; ++cl) {
      Real* gr = gx + cl * Lin;
      for (Index k = 0; k < K; ++k) {
        const Real* cr = col + (cl * K + k) * n;
        const Index off = k * D - P;
        for (Index o = o0; o < o1; ++o) {
          const Index i = o * S + off;
          if (i >= 0 && i < Lin) gr[i] += cr[o - o0];
        }
      }
    }
  }
};

void conv1d_forward(const Conv1dGeometry& g, const Real* x, const Real* w, const Real* bias, Real* y) {
  const Index B = g.batch, Cin = g.in_channels, Cout = g.out_channels, G = g.groups;
  const Index Lout = g.out_length();
  const Conv1dLowering low{Cin / G, Index(g.kernel), Index(g.stride), Index(g.dilation), Index(g.pad_left),
                           Index(g.in_length)};
  const Index cout_g = Cout / G, rows = low.rows(), chunk = chunk_columns(rows, Lout);
#pragma omp parallel
  {
    std::vector<Real> col(low.direct() ? 0 : static_cast<std::size_t>(rows * chunk));
#pragma omp for collapse(2) schedule(static)
    for (Index b = 0; b < B; ++b) {
      for (Index grp = 0; grp < G; ++grp) {
        const Real* xs = x + (b * Cin + grp * low.cin_g) * low.Lin;
        const Real* ws = w + grp * cout_g * rows;
        Real* ys = y + (b * Cout + grp * cout_g) * Lout;
        for (Index c = 0; c < cout_g; ++c) {
          std::fill(ys + c * Lout, ys + (c + 1) * Lout, bias ? bias[grp * cout_g + c] : Real{0});
        }
        for (Index o0 = 0; o0 < Lout; o0 += chunk) {
          const Index o1 = std::min(Lout, o0 + chunk), n = o1 - o0;
          if (low.direct()) {
            gemm(false, false, cout_g, n, rows, 1.0, ws, rows, xs + o0, low.Lin, 1.0, ys + o0, Lout);
          } else {
            low.unfold(xs, o0, o1, col.data());
            gemm(false, false, cout_g, n, rows, 1.0, ws, rows, col.data(), n, 1.0, ys + o0, Lout);
          }
        }
      }
    }
  }
}

void conv1d_backward_input(const Conv1dGeometry& g, const Real* gy, const Real* w, Real* gx) {
  const Index B = g.batch, Cin = g.in_channels, Cout = g.out_channels, G = g.groups;
  const Index Lout = g.out_length();
  const Conv1dLowering low{Cin / G, Index(g.kernel), Index(g.stride), Index(g.dilation), Index(g.pad_left),
                           Index(g.in_length)};
  const Index cout_g = Cout / G, rows = low.rows(), chunk = chunk_columns(rows, Lout);
#pragma omp parallel
  {
    std::vector<Real> col(low.direct() ? 0 : static_cast<std::size_t>(rows * chunk));
#pragma omp for collapse(2) schedule(static)
    for (Index b = 0; b < B; ++b) {
      for (Index grp = 0; grp < G; ++grp) {
        Real* gxs = gx + (b * Cin + grp * low.cin_g) * low.Lin;
        const Real* ws = w + grp * cout_g * rows;
        const Real* gys = gy + (b * Cout + grp * cout_g) * Lout;
        for (Index o0 = 0; o0 < Lout; o0 += chunk) {
          const Index o1 = std::min(Lout, o0 + chunk), n = o1 - o0;
          if (low.direct()) {
            gemm(true, false, rows, n, cout_g, 1.0, ws, rows, gys + o0, Lout, 1.0, gxs + o0, low.Lin);
          } else {
            gemm(true, false, rows, n, cout_g, 1.0, ws, rows, gys + o0, Lout, 0.0, col.data(), n);
            low.fold(col.data(), o0, o1, gxs);
          }
        }
      }
    }
  }
}

void conv1d_backward_weight(const Conv1dGeometry& g, const Real* gy, const Real* x, Real* gw, Real* gb) {
  const Index B = g.batch, Cin = g.in_channels, Cout = g.out_channels, G = g.groups;
  const Index Lout = g.out_length();
  const Conv1dLowering low{Cin / G, Index(g.kernel), Index(g.stride), Index(g.dilation), Index(g.pad_left),
                           Index(g.in_length)};
  const Index cout_g = Cout / G, rows = low.rows(), chunk = chunk_columns(rows, Lout);
#pragma omp parallel
  {
    std::vector<Real> col(low.direct() ? 0 : static_cast<std::size_t>(rows * chunk));
#pragma omp for schedule(static)
    for (Index grp = 0; grp < G; ++grp) {
      Real* gws = gw + grp * cout_g * rows;
      for (Index b = 0; b < B; ++b) {
        const Real* xs = x + (b * Cin + grp * low.cin_g) * low.Lin;
        const Real* gys = gy + (b * Cout + grp * cout_g) * Lout;
        for (Index o0 = 0; o0 < Lout; o0 += chunk) {
          const Index o1 = std::min(Lout, o0 + chunk), n = o1 - o0;
          if (low.direct()) {
            gemm(false, true, cout_g, rows, n, 1.0, gys + o0, Lout, xs + o0, low.Lin, 1.0, gws, rows);
          } else {
            low.unfold(xs, o0, o1, col.data());
            gemm(false, true, cout_g, rows, n, 1.0, gys + o0, Lout, col.data(), n, 1.0, gws, rows);
          }
        }
      }
    }
  }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (Index co = 0; co < Cout; ++co) {
      Real a = 0;
      for (Index b = 0; b < B; ++b) {
        const Real* gyr = gy + (b * Cout + co) * Lout;
        for (Index o = 0; o < Lout; ++o) a += gyr[o];
      }
      gb[co] += a;
    }
  }
}

// ---------------------------------------------------------------------------
// conv2d

std::size_t Conv2dGeometry::out_frames() const noexcept {
  const std::size_t padded = frames + pad_t_left;
  return padded < kernel_t ? 0 : padded - kernel_t + 1;
}

std::size_t Conv2dGeometry::out_bins() const noexcept {
  const std::size_t padded = bins + pad_f_left + pad_f_right;
  if (padded < kernel_f || stride_f == 0) return 0;
  return (padded - kernel_f) / stride_f + 1;
}

void Conv2dGeometry::validate() const {
  if (kernel_t == 0 || kernel_f == 0 || stride_f == 0) throw ShapeError("conv2d kernel/stride must be >= 1");
  if (out_frames() == 0 || out_bins() == 0) {
    throw ShapeError("conv2d input " + std::to_string(frames) + "x" + std::to_string(bins) +
                     " smaller than kernel");
  }
}

struct Conv2dLowering {
  Index Cin, KT, KF, PT, SF, PF, T, F, Fo;

  Index rows() const { return Cin * KT * KF; }

  // Columns are output frames [t0, t1) times all output bins.
  void unfold(const Real* x, Index t0, Index t1, Real* col) const {
    const Index n = (t1 - t0) * Fo;
    for (Index ci = 0; ci < Cin; ++ci) {
      const Real* xp = x + ci * T * F;
      for (Index kt = 0; kt < KT; ++kt) {
        for (Index kf = 0; kf < KF; ++kf) {
          Real* cr = col + ((ci * KT + kt) * KF + kf) * n;
          const Index off = kf - PF;
          for (Index to = t0; to < t1; ++to) {
            const Index ti = to + kt - PT;
            Real* cc = cr + (to - t0) * Fo;
            if (ti < 0 || ti >= T) {
              std::fill(cc, cc + Fo, Real{0});
              continue;
            }
            const Real* xr = xp + ti * F;
            for (Index fo = 0; fo < Fo; ++fo) {
              const Index fi = fo * SF + off;
              cc[fo] = (fi >= 0 && fi < F) ? xr[fi] : Real{0};
            }
          }
        }
      }
    }
  }

  void fold(const Real* col, Index t0, Index t1, Real* gx) const {
    const Index n = (t1 - t0) * Fo;
    for (Index ci = 0; ci < Cin; ++ci) {
      Real* gp = gx + ci * T * F;
      for (Index kt = 0; kt < KT; ++kt) {
        for (Index kf = 0; kf < KF; ++kf) {
          const Real* cr = col + ((ci * KT + kt) * KF + kf) * n;
          const Index off = kf - PF;
          for (Index to = t0; to < t1; ++to) {
            const Index ti = to + kt - PT;
            if (ti < 0 || ti >= T) continue;
            const Real* cc = cr + (to - t0) * Fo;
            Real* gr = gp + ti * F;
            for (Index fo = 0; fo < Fo; ++fo) {
              const Index fi = fo * SF + off;
              if (fi >= 0 && fi < F) gr[fi] += cc[fo];
            }
          }
        }
      }
    }
  }
};

Conv2dLowering lowering(const Conv2dGeometry& g) {
  return {Index(g.in_channels), Index(g.kernel_t), Index(g.kernel_f), Index(g.pad_t_left), Index(g.stride_f),
          Index(g.pad_f_left),  Index(g.frames),   Index(g.bins),     Index(g.out_bins())};
}

void conv2d_forward(const Conv2dGeometry& g, const Real* x, const Real* w, const Real* bias, Real* y) {
  const Index B = g.batch, Cout = g.out_channels, To = g.out_frames();
  const Conv2dLowering low = lowering(g);
  const Index rows = low.rows(), Fo = low.Fo, plane = To * Fo;
  const Index frames_per_chunk = std::max<Index>(1, chunk_columns(rows, plane) / Fo);
#pragma omp parallel
  {
    std::vector<Real> col(static_cast<std::size_t>(rows * frames_per_chunk * Fo));
#pragma omp for schedule(static)
    for (Index b = 0; b < B; ++b) {
      const Real* xs = x + b * low.Cin * low.T * low.F;
      Real* ys = y + b * Cout * plane;
      for (Index c = 0; c < Cout; ++c) std::fill(ys + c * plane, ys + (c + 1) * plane, bias ? bias[c] : Real{0});
      for (Index t0 = 0; t0 < To; t0 += frames_per_chunk) {
        const Index t1 = std::min(To, t0 + frames_per_chunk), n = (t1 - t0) * Fo;
        low.unfold(xs, t0, t1, col.data());
        gemm(false, false, Cout, n, rows, 1.0, w, rows, col.data(), n, 1.0, ys + t0 * Fo, plane);
      }
    }
  }
}

void conv2d_backward_input(const Conv2dGeometry& g, const Real* gy, const Real* w, Real* gx) {
  const Index B = g.batch, Cout = g.out_channels, To = g.out_frames();
  const Conv2dLowering low = lowering(g);
  const Index rows = low.rows(), Fo = low.Fo, plane = To * Fo;
  const Index frames_per_chunk = std::max<Index>(1, chunk_columns(rows, plane) / Fo);
#pragma omp parallel
  {
    std::vector<Real> col(static_cast<std::size_t>(rows * frames_per_chunk * Fo));
#pragma omp for schedule(static)
    for (Index b = 0; b < B; ++b) {
      Real* gxs = gx + b * low.Cin * low.T * low.F;
      const Real* gys = gy + b * Cout * plane;
      for (Index t0 = 0; t0 < To; t0 += frames_per_chunk) {
        const Index t1 = std::min(To, t0 + frames_per_chunk), n = (t1 - t0) * Fo;
        gemm(true, false, rows, n, Cout, 1.0, w, rows, gys + t0 * Fo, plane, 0.0, col.data(), n);
        low.fold(col.data(), t0, t1, gxs);
      }
    }
  }
}

void conv2d_backward_weight(const Conv2dGeometry& g, const Real* gy, const Real* x, Real* gw, Real* gb) {
  const Index B = g.batch, Cout = g.out_channels, To = g.out_frames();
  const Conv2dLowering low = lowering(g);
  const Index rows = low.rows(), Fo = low.Fo, plane = To * Fo;
  const Index frames_per_chunk = std::max<Index>(1, chunk_columns(rows, plane) / Fo);
  // A single weight block: batches and chunks accumulate in a fixed order.
  std::vector<Real> col(static_cast<std::size_t>(rows * frames_per_chunk * Fo));
  for (Index b = 0; b < B; ++b) {
    const Real* xs = x + b * low.Cin * low.T * low.F;
    const Real* gys = gy + b * Cout * plane;
    for (Index t0 = 0; t0 < To; t0 += frames_per_chunk) {
      const Index t1 = std::min(To, t0 + frames_per_chunk), n = (t1 - t0) * Fo;
      low.unfold(xs, t0, t1, col.data());
      gemm(false, true, Cout, rows, n, 1.0, gys + t0 * Fo, plane, col.data(), n, 1.0, gw, rows);
    }
  }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (Index co = 0; co < Cout; ++co) {
      Real acc = 0;
      for (Index b = 0; b < B; ++b) {
        const Real* gyp = gy + (b * Cout + co) * plane;
        for (Index i = 0; i < plane; ++i) acc += gyp[i];
      }
      gb[co] += acc;
    }
  }
}

// ---------------------------------------------------------------------------
// windowed attention

void AttentionGeometry::validate() const {
  if (groups == 0 || channels % groups) {
    throw ShapeError("attention channels " + std::to_string(channels) + " not divisible by groups " +
                     std::to_string(groups));
  }
  if (window == 0) throw ShapeError("attention window must be >= 1");
}

namespace {

// Copies rows [c0, c0 + dh) of a (C, T) plane into a (T, dh) buffer.
void gather_head(const Real* src, Index T, Index c0, Index dh, Real* dst) {
  for (Index d = 0; d < dh; ++d) {
    const Real* row = src + (c0 + d) * T;
    for (Index t = 0; t < T; ++t) dst[t * dh + d] = row[t];
  }
}

void scatter_add_head(const Real* src, Index T, Index c0, Index dh, Real* dst) {
  for (Index d = 0; d < dh; ++d) {
    Real* row = dst + (c0 + d) * T;
    for (Index t = 0; t < T; ++t) row[t] += src[t * dh + d];
  }
}

}  // namespace

void attention_forward(const AttentionGeometry& g, const Real* q, const Real* k, const Real* v,
                       const Real* key_valid, Real* y, Real* weights) {
  const Index B = g.batch, C = g.channels, H = g.groups, Tq = g.queries, Tk = g.keys();
  const Index P = g.past, N = g.window, dh = g.head_dim(), S = g.span();
  const Real scale = Real{1} / std::sqrt(static_cast<Real>(dh));
#pragma omp parallel for collapse(2) schedule(static)
  for (Index b = 0; b < B; ++b) {
    for (Index h = 0; h < H; ++h) {
      std::vector<Real> qt(Tq * dh), kt(Tk * dh), vt(Tk * dh), out(Tq * dh, 0), logits(S);
      gather_head(q + b * C * Tq, Tq, h * dh, dh, qt.data());
      gather_head(k + b * C * Tk, Tk, h * dh, dh, kt.data());
      gather_head(v + b * C * Tk, Tk, h * dh, dh, vt.data());
      const Real* valid = key_valid + b * Tk;
      for (Index i = 0; i < Tq; ++i) {
        Real* wrow = weights + ((b * H + h) * Tq + i) * S;
        std::fill(wrow, wrow + S, Real{0});
        const Index origin = i + P - N;
        Real peak = -std::numeric_limits<Real>::infinity();
        for (Index s = 0; s < S; ++s) {
          const Index j = origin + s;
          if (j < 0 || valid[j] == 0) continue;
          logits[s] = scale * dot(qt.data() + i * dh, kt.data() + j * dh, dh);
          peak = std::max(peak, logits[s]);
        }
        if (peak == -std::numeric_limits<Real>::infinity()) continue;
        Real total = 0;
        for (Index s = 0; s < S; ++s) {
          const Index j = origin + s;
          if (j < 0 || valid[j] == 0) continue;
          wrow[s] = std::exp(logits[s] - peak);
          total += wrow[s];
        }
        Real* orow = out.data() + i * dh;
        for (Index s = 0; s < S; ++s) {
          if (wrow[s] == 0) continue;
          wrow[s] /= total;
          axpy(wrow[s], vt.data() + (origin + s) * dh, orow, dh);
        }
      }
      Real* yb = y + b * C * Tq;
      for (Index d = 0; d < dh; ++d) {
        Real* row = yb + (h * dh + d) * Tq;
        for (Index t = 0; t < Tq; ++t) row[t] = out[t * dh + d];
      }
    }
  }
}

void attention_backward(const AttentionGeometry& g, const Real* gy, const Real* q, const Real* k,
                        const Real* v, const Real* weights, Real* gq, Real* gk, Real* gv) {
  const Index B = g.batch, C = g.channels, H = g.groups, Tq = g.queries, Tk = g.keys();
  const Index P = g.past, N = g.window, dh = g.head_dim(), S = g.span();
  const Real scale = Real{1} / std::sqrt(static_cast<Real>(dh));
#pragma omp parallel for collapse(2) schedule(static)
  for (Index b = 0; b < B; ++b) {
    for (Index h = 0; h < H; ++h) {
      std::vector<Real> qt(Tq * dh), kt(Tk * dh), vt(Tk * dh), gyt(Tq * dh);
      std::vector<Real> gqt(Tq * dh, 0), gkt(Tk * dh, 0), gvt(Tk * dh, 0), da(S);
      gather_head(q + b * C * Tq, Tq, h * dh, dh, qt.data());
      gather_head(k + b * C * Tk, Tk, h * dh, dh, kt.data());
      gather_head(v + b * C * Tk, Tk, h * dh, dh, vt.data());
      gather_head(gy + b * C * Tq, Tq, h * dh, dh, gyt.data());
      for (Index i = 0; i < Tq; ++i) {
        const Real* wrow = weights + ((b * H + h) * Tq + i) * S;
        const Index origin = i + P - N;
        const Real* gyi = gyt.data() + i * dh;
        Real mean = 0;
        for (Index s = 0; s < S; ++s) {
          if (wrow[s] == 0) continue;
          const Index j = origin + s;
          da[s] = dot(gyi, vt.data() + j * dh, dh);
          mean += wrow[s] * da[s];
          axpy(wrow[s], gyi, gvt.data() + j * dh, dh);
        }
        for (Index s = 0; s < S; ++s) {
          if (wrow[s] == 0) continue;
          const Index j = origin + s;
          const Real dl = scale * wrow[s] * (da[s] - mean);
          axpy(dl, kt.data() + j * dh, gqt.data() + i * dh, dh);
          axpy(dl, qt.data() + i * dh, gkt.data() + j * dh, dh);
        }
      }
      if (gq) scatter_add_head(gqt.data(), Tq, h * dh, dh, gq + b * C * Tq);
      if (gk) scatter_add_head(gkt.data(), Tk, h * dh, dh, gk + b * C * Tk);
      if (gv) scatter_add_head(gvt.data(), Tk, h * dh, dh, gv + b * C * Tk);
    }
  }
}

}  // namespace plc::kernels
