#include "plc/ops.hpp"

#include <cmath>

#include "plc/errors.hpp"
#include "plc/kernels.hpp"

namespace plc {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

template <class F>
Var unary(const Var& a, F&& f, std::function<void(const Node&)> backward) {
  Tensor out(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_result(std::move(out), {a}, std::move(backward));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [a, b](const Node& self) {
    if (Tensor* g = grad_target(a)) *g += self.grad;
    if (Tensor* g = grad_target(b)) *g += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](const Node& self) {
    if (Tensor* g = grad_target(a)) *g += self.grad;
    if (Tensor* g = grad_target(b)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](const Node& self) {
    if (Tensor* g = grad_target(a)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * b.value()[i];
    }
    if (Tensor* g = grad_target(b)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * a.value()[i];
    }
  });
}

Var scale(const Var& a, Real factor) {
  Tensor out = a.value();
  out *= factor;
  return make_result(std::move(out), {a}, [a, factor](const Node& self) {
    if (Tensor* g = grad_target(a)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += factor * self.grad[i];
    }
  });
}

Var sum(const Var& a) {
  Real s = 0;
  for (Real v : a.value().values()) s += v;
  return make_result(Tensor(Shape{}, s), {a}, [a](const Node& self) {
    if (Tensor* g = grad_target(a)) {
      for (auto& v : g->values()) v += self.grad[0];
    }
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), Real{1} / static_cast<Real>(n));
}

Var mean_square_dev(const Var& a, Real target) {
  const Tensor& x = a.value();
  const std::size_t n = x.size();
  if (n == 0) throw ShapeError("mean_square_dev of empty tensor");
  Real s = 0;
  for (Real v : x.values()) s += (v - target) * (v - target);
  return make_result(Tensor(Shape{}, s / n), {a}, [a, target, n](const Node& self) {
    if (Tensor* g = grad_target(a)) {
      const Real c = 2 * self.grad[0] / static_cast<Real>(n);
      for (std::size_t i = 0; i < n; ++i) (*g)[i] += c * (a.value()[i] - target);
    }
  });
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mse of empty tensor");
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return make_result(Tensor(Shape{}, s / n), {a, b}, [a, b, n](const Node& self) {
    const Real c = 2 * self.grad[0] / static_cast<Real>(n);
    Tensor* ga = grad_target(a);
    Tensor* gb = grad_target(b);
    for (std::size_t i = 0; i < n; ++i) {
      const Real d = c * (a.value()[i] - b.value()[i]);
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

Var l1(const Var& a, const Var& b) {
  require_same_shape(a, b, "l1");
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("l1 of empty tensor");
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a.value()[i] - b.value()[i]);
  return make_result(Tensor(Shape{}, s / n), {a, b}, [a, b, n](const Node& self) {
    const Real c = self.grad[0] / static_cast<Real>(n);
    Tensor* ga = grad_target(a);
    Tensor* gb = grad_target(b);
    for (std::size_t i = 0; i < n; ++i) {
      const Real d = a.value()[i] - b.value()[i];
      const Real sgn = d > 0 ? c : (d < 0 ? -c : Real{0});
      if (ga) (*ga)[i] += sgn;
      if (gb) (*gb)[i] -= sgn;
    }
  });
}

Var tanh(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
  return make_result(std::move(out), {a}, [a](const Node& self) {
    if (Tensor* g = grad_target(a)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const Real y = self.value[i];
        (*g)[i] += self.grad[i] * (1 - y * y);
      }
    }
  });
}

Var leaky_relu(const Var& a, Real slope) {
  return unary(
      a, [slope](Real v) { return v > 0 ? v : slope * v; },
      [a, slope](const Node& self) {
        if (Tensor* g = grad_target(a)) {
          for (std::size_t i = 0; i < g->size(); ++i) {
            (*g)[i] += a.value()[i] > 0 ? self.grad[i] : slope * self.grad[i];
          }
        }
      });
}

Var prelu(const Var& x, const Var& alpha) {
  const Tensor& xv = x.value();
  if (xv.rank() < 2 || alpha.value().size() != xv.dim(1)) {
    throw ShapeError("prelu: alpha " + shape_str(alpha.shape()) + " for input " + shape_str(x.shape()));
  }
  const std::size_t B = xv.dim(0), C = xv.dim(1), inner = xv.size() / (B * C);
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const Real a = alpha.value()[c];
      const std::size_t base = (b * C + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const Real v = xv[base + i];
        out[base + i] = v > 0 ? v : a * v;
      }
    }
  return make_result(std::move(out), {x, alpha}, [x, alpha, B, C, inner](const Node& self) {
    Tensor* gx = grad_target(x);
    Tensor* ga = grad_target(alpha);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const Real a = alpha.value()[c];
        const std::size_t base = (b * C + c) * inner;
        Real acc = 0;
        for (std::size_t i = 0; i < inner; ++i) {
          const Real v = x.value()[base + i];
          const Real go = self.grad[base + i];
          if (v > 0) {
            if (gx) (*gx)[base + i] += go;
          } else {
            if (gx) (*gx)[base + i] += a * go;
            acc += v * go;
          }
        }
        if (ga) (*ga)[c] += acc;
      }
  });
}

Var layer_norm_channels(const Var& x, const Var& gain, const Var& bias, Real eps) {
  require_rank(x, 3, "layer_norm_channels");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  if (gain.value().size() != C || bias.value().size() != C) throw ShapeError("layer_norm_channels: affine size");
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std(Shape{B, T});
  const Tensor& xv = x.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      Real mu = 0;
      for (std::size_t c = 0; c < C; ++c) mu += xv[(b * C + c) * T + t];
      mu /= C;
      Real var = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const Real d = xv[(b * C + c) * T + t] - mu;
        var += d * d;
      }
      var /= C;
      const Real is = 1 / std::sqrt(var + eps);
      inv_std[b * T + t] = is;
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (b * C + c) * T + t;
        xhat[i] = (xv[i] - mu) * is;
        out[i] = xhat[i] * gain.value()[c] + bias.value()[c];
      }
    }
  return make_result(std::move(out), {x, gain, bias},
                     [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), B, C,
                      T](const Node& self) {
                       Tensor* gx = grad_target(x);
                       Tensor* gg = grad_target(gain);
                       Tensor* gb = grad_target(bias);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t t = 0; t < T; ++t) {
                           Real mean_g = 0, mean_gx = 0;
                           for (std::size_t c = 0; c < C; ++c) {
                             const std::size_t i = (b * C + c) * T + t;
                             const Real go = self.grad[i];
                             if (gg) (*gg)[c] += go * xhat[i];
                             if (gb) (*gb)[c] += go;
                             const Real gh = go * gain.value()[c];
                             mean_g += gh;
                             mean_gx += gh * xhat[i];
                           }
                           if (!gx) continue;
                           mean_g /= C;
                           mean_gx /= C;
                           const Real is = inv_std[b * T + t];
                           for (std::size_t c = 0; c < C; ++c) {
                             const std::size_t i = (b * C + c) * T + t;
                             const Real gh = self.grad[i] * gain.value()[c];
                             (*gx)[i] += is * (gh - mean_g - xhat[i] * mean_gx);
                           }
                         }
                     });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  Tensor out = plc::concat(values, axis);
  return make_result(std::move(out), parts, [parts, axis](const Node& self) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t n = p.dim(axis);
      if (Tensor* g = grad_target(p)) *g += self.grad.slice(axis, offset, n);
      offset += n;
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t count) {
  Tensor out = x.value().slice(axis, start, count);
  return make_result(std::move(out), {x}, [x, axis, start, count](const Node& self) {
    Tensor* g = grad_target(x);
    if (!g) return;
    const Shape& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < count * inner; ++i) (*g)[(o * n + start) * inner + i] += self.grad[o * count * inner + i];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [x](const Node& self) {
    if (Tensor* g = grad_target(x)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Var fold_frequency(const Var& x) {
  require_rank(x, 4, "fold_frequency");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2), F = x.dim(3);
  Tensor out(Shape{B, C * F, T});
  const Tensor& xv = x.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) out[(b * C * F + c * F + f) * T + t] = xv[((b * C + c) * T + t) * F + f];
  return make_result(std::move(out), {x}, [x, B, C, T, F](const Node& self) {
    Tensor* g = grad_target(x);
    if (!g) return;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f)
            (*g)[((b * C + c) * T + t) * F + f] += self.grad[(b * C * F + c * F + f) * T + t];
  });
}

Var unfold_frequency(const Var& x, std::size_t channels) {
  require_rank(x, 3, "unfold_frequency");
  const std::size_t B = x.dim(0), CF = x.dim(1), T = x.dim(2);
  if (channels == 0 || CF % channels) {
    throw ShapeError("unfold_frequency: " + std::to_string(CF) + " rows not divisible by " + std::to_string(channels));
  }
  const std::size_t C = channels, F = CF / C;
  Tensor out(Shape{B, C, T, F});
  const Tensor& xv = x.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) out[((b * C + c) * T + t) * F + f] = xv[(b * CF + c * F + f) * T + t];
  return make_result(std::move(out), {x}, [x, B, C, T, F](const Node& self) {
    Tensor* g = grad_target(x);
    if (!g) return;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f)
            (*g)[(b * C * F + c * F + f) * T + t] += self.grad[((b * C + c) * T + t) * F + f];
  });
}

Var mask_frames(const Var& x, const Tensor& keep) {
  require_rank(x, 3, "mask_frames");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  if (keep.shape() != Shape{B, T}) {
    throw ShapeError("mask_frames: mask " + shape_str(keep.shape()) + " for input " + shape_str(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) out[(b * C + c) * T + t] *= keep[b * T + t];
  return make_result(std::move(out), {x}, [x, keep, B, C, T](const Node& self) {
    Tensor* g = grad_target(x);
    if (!g) return;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t) (*g)[(b * C + c) * T + t] += self.grad[(b * C + c) * T + t] * keep[b * T + t];
  });
}

Var conv1d(const Var& x, const Var& w, const Var& bias, const Conv1dOptions& opt) {
  require_rank(x, 3, "conv1d");
  if (w.value().rank() != 3) throw ShapeError("conv1d: weight must be rank 3");
  kernels::Conv1dGeometry geo;
  geo.batch = x.dim(0);
  geo.in_channels = x.dim(1);
  geo.in_length = x.dim(2);
  geo.out_channels = w.dim(0);
  geo.kernel = w.dim(2);
  geo.stride = opt.stride;
  geo.dilation = opt.dilation;
  geo.groups = opt.groups;
  geo.pad_left = opt.pad_left;
  geo.pad_right = opt.pad_right;
  geo.validate();
  if (w.dim(1) * opt.groups != geo.in_channels) {
    throw ShapeError("conv1d: weight " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  }
  if (bias.defined() && bias.value().size() != geo.out_channels) throw ShapeError("conv1d: bias size");
  Tensor out(Shape{geo.batch, geo.out_channels, geo.out_length()});
  kernels::conv1d_forward(geo, x.value().data(), w.value().data(), bias.defined() ? bias.value().data() : nullptr,
                          out.data());
  return make_result(std::move(out), {x, w, bias}, [x, w, bias, geo](const Node& self) {
    if (Tensor* gx = grad_target(x)) kernels::conv1d_backward_input(geo, self.grad.data(), w.value().data(), gx->data());
    Tensor* gw = grad_target(w);
    Tensor* gb = bias.defined() ? grad_target(bias) : nullptr;
    if (gw) {
      kernels::conv1d_backward_weight(geo, self.grad.data(), x.value().data(), gw->data(), gb ? gb->data() : nullptr);
    } else if (gb) {
      const std::size_t L = geo.out_length();
      for (std::size_t b = 0; b < geo.batch; ++b)
        for (std::size_t c = 0; c < geo.out_channels; ++c)
          for (std::size_t o = 0; o < L; ++o) (*gb)[c] += self.grad[(b * geo.out_channels + c) * L + o];
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, const Conv2dOptions& opt) {
  require_rank(x, 4, "conv2d");
  if (w.value().rank() != 4 || w.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  }
  kernels::Conv2dGeometry geo;
  geo.batch = x.dim(0);
  geo.in_channels = x.dim(1);
  geo.frames = x.dim(2);
  geo.bins = x.dim(3);
  geo.out_channels = w.dim(0);
  geo.kernel_t = w.dim(2);
  geo.kernel_f = w.dim(3);
  geo.pad_t_left = opt.pad_t_left;
  geo.stride_f = opt.stride_f;
  geo.pad_f_left = opt.pad_f_left;
  geo.pad_f_right = opt.pad_f_right;
  geo.validate();
  if (bias.defined() && bias.value().size() != geo.out_channels) throw ShapeError("conv2d: bias size");
  Tensor out(Shape{geo.batch, geo.out_channels, geo.out_frames(), geo.out_bins()});
  kernels::conv2d_forward(geo, x.value().data(), w.value().data(), bias.defined() ? bias.value().data() : nullptr,
                          out.data());
  return make_result(std::move(out), {x, w, bias}, [x, w, bias, geo](const Node& self) {
    if (Tensor* gx = grad_target(x)) kernels::conv2d_backward_input(geo, self.grad.data(), w.value().data(), gx->data());
    Tensor* gw = grad_target(w);
    Tensor* gb = bias.defined() ? grad_target(bias) : nullptr;
    if (gw) {
      kernels::conv2d_backward_weight(geo, self.grad.data(), x.value().data(), gw->data(), gb ? gb->data() : nullptr);
    } else if (gb) {
      const std::size_t plane = geo.out_frames() * geo.out_bins();
      for (std::size_t b = 0; b < geo.batch; ++b)
        for (std::size_t c = 0; c < geo.out_channels; ++c)
          for (std::size_t i = 0; i < plane; ++i) (*gb)[c] += self.grad[(b * geo.out_channels + c) * plane + i];
    }
  });
}

Var upsample_nearest(const Var& x, std::size_t factor) {
  require_rank(x, 3, "upsample_nearest");
  if (factor == 0) throw ParameterError("upsample factor must be >= 1");
  const std::size_t rows = x.dim(0) * x.dim(1), L = x.dim(2);
  Tensor out(Shape{x.dim(0), x.dim(1), L * factor});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < L; ++i) {
      const Real v = x.value()[r * L + i];
      for (std::size_t j = 0; j < factor; ++j) out[(r * L + i) * factor + j] = v;
    }
  return make_result(std::move(out), {x}, [x, rows, L, factor](const Node& self) {
    Tensor* g = grad_target(x);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < L; ++i) {
        Real acc = 0;
        for (std::size_t j = 0; j < factor; ++j) acc += self.grad[(r * L + i) * factor + j];
        (*g)[r * L + i] += acc;
      }
  });
}

Var avg_pool1d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "avg_pool1d");
  const std::size_t rows = x.dim(0) * x.dim(1), L = x.dim(2);
  if (L + 2 * pad < kernel) throw ShapeError("avg_pool1d: input shorter than kernel");
  const std::size_t Lo = (L + 2 * pad - kernel) / stride + 1;
  Tensor out(Shape{x.dim(0), x.dim(1), Lo});
  const Real inv = Real{1} / static_cast<Real>(kernel);
  auto for_taps = [=](std::size_t o, auto&& fn) {
    for (std::size_t m = 0; m < kernel; ++m) {
      const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(o * stride + m) - static_cast<std::ptrdiff_t>(pad);
      if (i >= 0 && i < static_cast<std::ptrdiff_t>(L)) fn(static_cast<std::size_t>(i));
    }
  };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < Lo; ++o) {
      Real acc = 0;
      for_taps(o, [&](std::size_t i) { acc += x.value()[r * L + i]; });
      out[r * Lo + o] = acc * inv;
    }
  return make_result(std::move(out), {x}, [x, rows, L, Lo, inv, for_taps](const Node& self) {
    Tensor* g = grad_target(x);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < Lo; ++o) {
        const Real go = self.grad[r * Lo + o] * inv;
        for_taps(o, [&](std::size_t i) { (*g)[r * L + i] += go; });
      }
  });
}

Var period_fold(const Var& x, std::size_t period) {
  require_rank(x, 3, "period_fold");
  if (period == 0) throw ParameterError("period must be >= 1");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t pad = (period - L % period) % period;
  if (pad >= L) throw ShapeError("period_fold: input of length " + std::to_string(L) + " too short to reflect-pad");
  const std::size_t rows = (L + pad) / period;
  // Source index of padded position n: reflection about the last sample.
  auto source = [L](std::size_t n) { return n < L ? n : 2 * (L - 1) - n; };
  Tensor out(Shape{B * period, C, rows});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < period; ++j)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < rows; ++i)
          out[((b * period + j) * C + c) * rows + i] = x.value()[(b * C + c) * L + source(i * period + j)];
  return make_result(std::move(out), {x}, [x, B, C, L, period, rows, source](const Node& self) {
    Tensor* g = grad_target(x);
    if (!g) return;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < period; ++j)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < rows; ++i)
            (*g)[(b * C + c) * L + source(i * period + j)] += self.grad[((b * period + j) * C + c) * rows + i];
  });
}

Var windowed_attention(const Var& q, const Var& k, const Var& v, const Tensor& key_valid, std::size_t groups,
                       std::size_t window, std::size_t past, Tensor* weights_out) {
  require_rank(q, 3, "windowed_attention");
  require_same_shape(k, v, "windowed_attention k/v");
  kernels::AttentionGeometry geo;
  geo.batch = q.dim(0);
  geo.channels = q.dim(1);
  geo.groups = groups;
  geo.queries = q.dim(2);
  geo.past = past;
  geo.window = window;
  geo.validate();
  if (k.shape() != Shape{geo.batch, geo.channels, geo.keys()}) {
    throw ShapeError("windowed_attention: keys " + shape_str(k.shape()) + " for queries " + shape_str(q.shape()) +
                     " with " + std::to_string(past) + " past frames");
  }
  if (key_valid.shape() != Shape{geo.batch, geo.keys()}) {
    throw ShapeError("windowed_attention: key mask " + shape_str(key_valid.shape()));
  }
  Tensor out(q.shape());
  Tensor weights(Shape{geo.batch, groups, geo.queries, geo.span()});
  kernels::attention_forward(geo, q.value().data(), k.value().data(), v.value().data(), key_valid.data(), out.data(),
                             weights.data());
  if (weights_out) *weights_out = weights;
  return make_result(std::move(out), {q, k, v}, [q, k, v, geo, weights = std::move(weights)](const Node& self) {
    Tensor* gq = grad_target(q);
    Tensor* gk = grad_target(k);
    Tensor* gv = grad_target(v);
    kernels::attention_backward(geo, self.grad.data(), q.value().data(), k.value().data(), v.value().data(),
                                weights.data(), gq ? gq->data() : nullptr, gk ? gk->data() : nullptr,
                                gv ? gv->data() : nullptr);
  });
}

}  // namespace plc
