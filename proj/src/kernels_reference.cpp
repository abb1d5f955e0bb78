// Serial gather-form kernels. Each output element is evaluated directly from
// its definition; these are kept for testing and benchmarking only.

#include <cmath>
#include <limits>
#include <vector>

#include "plc/kernels.hpp"

namespace plc::kernels::reference {

namespace {
using Index = std::ptrdiff_t;
}

void conv1d_forward(const Conv1dGeometry& g, const Real* x, const Real* w, const Real* bias, Real* y) {
  const Index Cin = g.in_channels, Cout = g.out_channels, Lin = g.in_length, Lout = g.out_length();
  const Index cin_g = Cin / g.groups, cout_g = Cout / g.groups;
  for (Index b = 0; b < Index(g.batch); ++b)
    for (Index co = 0; co < Cout; ++co)
      for (Index o = 0; o < Lout; ++o) {
        Real acc = bias ? bias[co] : 0;
        for (Index cl = 0; cl < cin_g; ++cl)
          for (Index k = 0; k < Index(g.kernel); ++k) {
            const Index i = o * Index(g.stride) + k * Index(g.dilation) - Index(g.pad_left);
            if (i < 0 || i >= Lin) continue;
            acc += w[(co * cin_g + cl) * g.kernel + k] * x[(b * Cin + (co / cout_g) * cin_g + cl) * Lin + i];
          }
        y[(b * Cout + co) * Lout + o] = acc;
      }
}

void conv1d_backward_input(const Conv1dGeometry& g, const Real* gy, const Real* w, Real* gx) {
  const Index Cin = g.in_channels, Cout = g.out_channels, Lin = g.in_length, Lout = g.out_length();
  const Index cin_g = Cin / g.groups, cout_g = Cout / g.groups;
  for (Index b = 0; b < Index(g.batch); ++b)
    for (Index co = 0; co < Cout; ++co)
      for (Index o = 0; o < Lout; ++o)
        for (Index cl = 0; cl < cin_g; ++cl)
          for (Index k = 0; k < Index(g.kernel); ++k) {
            const Index i = o * Index(g.stride) + k * Index(g.dilation) - Index(g.pad_left);
            if (i < 0 || i >= Lin) continue;
            gx[(b * Cin + (co / cout_g) * cin_g + cl) * Lin + i] +=
                w[(co * cin_g + cl) * g.kernel + k] * gy[(b * Cout + co) * Lout + o];
          }
}

void conv1d_backward_weight(const Conv1dGeometry& g, const Real* gy, const Real* x, Real* gw, Real* gb) {
  const Index Cin = g.in_channels, Cout = g.out_channels, Lin = g.in_length, Lout = g.out_length();
  const Index cin_g = Cin / g.groups, cout_g = Cout / g.groups;
  for (Index b = 0; b < Index(g.batch); ++b)
    for (Index co = 0; co < Cout; ++co)
      for (Index o = 0; o < Lout; ++o) {
        const Real go = gy[(b * Cout + co) * Lout + o];
        if (gb) gb[co] += go;
        for (Index cl = 0; cl < cin_g; ++cl)
          for (Index k = 0; k < Index(g.kernel); ++k) {
            const Index i = o * Index(g.stride) + k * Index(g.dilation) - Index(g.pad_left);
            if (i < 0 || i >= Lin) continue;
            gw[(co * cin_g + cl) * g.kernel + k] += go * x[(b * Cin + (co / cout_g) * cin_g + cl) * Lin + i];
          }
      }
}

void conv2d_forward(const Conv2dGeometry& g, const Real* x, const Real* w, const Real* bias, Real* y) {
  const Index Cin = g.in_channels, Cout = g.out_channels, T = g.frames, F = g.bins;
  const Index To = g.out_frames(), Fo = g.out_bins(), KT = g.kernel_t, KF = g.kernel_f;
  for (Index b = 0; b < Index(g.batch); ++b)
    for (Index co = 0; co < Cout; ++co)
      for (Index to = 0; to < To; ++to)
        for (Index fo = 0; fo < Fo; ++fo) {
          Real acc = bias ? bias[co] : 0;
          for (Index ci = 0; ci < Cin; ++ci)
            for (Index kt = 0; kt < KT; ++kt)
              for (Index kf = 0; kf < KF; ++kf) {
                const Index ti = to + kt - Index(g.pad_t_left);
                const Index fi = fo * Index(g.stride_f) + kf - Index(g.pad_f_left);
                if (ti < 0 || ti >= T || fi < 0 || fi >= F) continue;
                acc += w[((co * Cin + ci) * KT + kt) * KF + kf] * x[((b * Cin + ci) * T + ti) * F + fi];
              }
          y[((b * Cout + co) * To + to) * Fo + fo] = acc;
        }
}

void conv2d_backward_input(const Conv2dGeometry& g, const Real* gy, const Real* w, Real* gx) {
  const Index Cin = g.in_channels, Cout = g.out_channels, T = g.frames, F = g.bins;
  const Index To = g.out_frames(), Fo = g.out_bins(), KT = g.kernel_t, KF = g.kernel_f;
  for (Index b = 0; b < Index(g.batch); ++b)
    for (Index co = 0; co < Cout; ++co)
      for (Index to = 0; to < To; ++to)
        for (Index fo = 0; fo < Fo; ++fo)
          for (Index ci = 0; ci < Cin; ++ci)
            for (Index kt = 0; kt < KT; ++kt)
              for (Index kf = 0; kf < KF; ++kf) {
                const Index ti = to + kt - Index(g.pad_t_left);
                const Index fi = fo * Index(g.stride_f) + kf - Index(g.pad_f_left);
                if (ti < 0 || ti >= T || fi < 0 || fi >= F) continue;
                gx[((b * Cin + ci) * T + ti) * F + fi] +=
                    w[((co * Cin + ci) * KT + kt) * KF + kf] * gy[((b * Cout + co) * To + to) * Fo + fo];
              }
}

void conv2d_backward_weight(const Conv2dGeometry& g, const Real* gy, const Real* x, Real* gw, Real* gb) {
  const Index Cin = g.in_channels, Cout = g.out_channels, T = g.frames, F = g.bins;
  const Index To = g.out_frames(), Fo = g.out_bins(), KT = g.kernel_t, KF = g.kernel_f;
  for (Index b = 0; b < Index(g.batch); ++b)
    for (Index co = 0; co < Cout; ++co)
      for (Index to = 0; to < To; ++to)
        for (Index fo = 0; fo < Fo; ++fo) {
          const Real go = gy[((b * Cout + co) * To + to) * Fo + fo];
          if (gb) gb[co] += go;
          for (Index ci = 0; ci < Cin; ++ci)
            for (Index kt = 0; kt < KT; ++kt)
              for (Index kf = 0; kf < KF; ++kf) {
                const Index ti = to + kt - Index(g.pad_t_left);
                const Index fi = fo * Index(g.stride_f) + kf - Index(g.pad_f_left);
                if (ti < 0 || ti >= T || fi < 0 || fi >= F) continue;
                gw[((co * Cin + ci) * KT + kt) * KF + kf] += go * x[((b * Cin + ci) * T + ti) * F + fi];
              }
        }
}

void attention_forward(const AttentionGeometry& g, const Real* q, const Real* k, const Real* v,
                       const Real* key_valid, Real* y, Real* weights) {
  const Index C = g.channels, H = g.groups, Tq = g.queries, Tk = g.keys(), dh = g.head_dim();
  const Index S = g.span();
  const Real scale = 1.0 / std::sqrt(Real(dh));
  for (Index b = 0; b < Index(g.batch); ++b)
    for (Index h = 0; h < H; ++h)
      for (Index i = 0; i < Tq; ++i) {
        Real* wrow = weights + ((b * H + h) * Tq + i) * S;
        std::vector<Real> logit(S, -std::numeric_limits<Real>::infinity());
        Real peak = -std::numeric_limits<Real>::infinity();
        for (Index s = 0; s < S; ++s) {
          const Index j = i + Index(g.past) - Index(g.window) + s;
          wrow[s] = 0;
          if (j < 0 || key_valid[b * Tk + j] == 0) continue;
          Real acc = 0;
          for (Index d = 0; d < dh; ++d)
            acc += q[(b * C + h * dh + d) * Tq + i] * k[(b * C + h * dh + d) * Tk + j];
          logit[s] = scale * acc;
          peak = std::max(peak, logit[s]);
        }
        Real total = 0;
        if (peak > -std::numeric_limits<Real>::infinity()) {
          for (Index s = 0; s < S; ++s)
            if (logit[s] > -std::numeric_limits<Real>::infinity()) total += std::exp(logit[s] - peak);
          for (Index s = 0; s < S; ++s)
            if (logit[s] > -std::numeric_limits<Real>::infinity()) wrow[s] = std::exp(logit[s] - peak) / total;
        }
        for (Index d = 0; d < dh; ++d) {
          Real acc = 0;
          for (Index s = 0; s < S; ++s) {
            const Index j = i + Index(g.past) - Index(g.window) + s;
            if (wrow[s] != 0) acc += wrow[s] * v[(b * C + h * dh + d) * Tk + j];
          }
          y[(b * C + h * dh + d) * Tq + i] = acc;
        }
      }
}

void attention_backward(const AttentionGeometry& g, const Real* gy, const Real* q, const Real* k,
                        const Real* v, const Real* weights, Real* gq, Real* gk, Real* gv) {
  const Index C = g.channels, H = g.groups, Tq = g.queries, Tk = g.keys(), dh = g.head_dim();
  const Index S = g.span();
  const Real scale = 1.0 / std::sqrt(Real(dh));
  for (Index b = 0; b < Index(g.batch); ++b)
    for (Index h = 0; h < H; ++h)
      for (Index i = 0; i < Tq; ++i) {
        const Real* wrow = weights + ((b * H + h) * Tq + i) * S;
        std::vector<Real> da(S, 0);
        Real mean = 0;
        for (Index s = 0; s < S; ++s) {
          if (wrow[s] == 0) continue;
          const Index j = i + Index(g.past) - Index(g.window) + s;
          for (Index d = 0; d < dh; ++d) {
            const Real go = gy[(b * C + h * dh + d) * Tq + i];
            da[s] += go * v[(b * C + h * dh + d) * Tk + j];
            if (gv) gv[(b * C + h * dh + d) * Tk + j] += wrow[s] * go;
          }
          mean += wrow[s] * da[s];
        }
        for (Index s = 0; s < S; ++s) {
          if (wrow[s] == 0) continue;
          const Index j = i + Index(g.past) - Index(g.window) + s;
          const Real dl = scale * wrow[s] * (da[s] - mean);
          for (Index d = 0; d < dh; ++d) {
            if (gq) gq[(b * C + h * dh + d) * Tq + i] += dl * k[(b * C + h * dh + d) * Tk + j];
            if (gk) gk[(b * C + h * dh + d) * Tk + j] += dl * q[(b * C + h * dh + d) * Tq + i];
          }
        }
      }
}

}  // namespace plc::kernels::reference
