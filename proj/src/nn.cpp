#include "plc/nn.hpp"

#include <cmath>

#include "plc/errors.hpp"

namespace plc {

void round_to_float(Tensor& t) {
  for (auto& v : t.values()) v = static_cast<Real>(static_cast<float>(v));
}

Tensor Initializer::uniform(Shape shape, Real bound) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<Real> dist(-bound, bound);
  for (auto& v : t.values()) v = dist(rng_);
  round_to_float(t);
  return t;
}

Tensor Initializer::normal(Shape shape, Real stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<Real> dist(0, stddev);
  for (auto& v : t.values()) v = dist(rng_);
  round_to_float(t);
  return t;
}

std::vector<NamedParameter> Module::named_parameters(const std::string& prefix) const {
  std::vector<NamedParameter> out;
  for (const auto& p : params_) out.push_back({prefix + p.name, p.var});
  for (const auto& [name, child] : children_) {
    auto sub = child->named_parameters(prefix + name + ".");
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::vector<Var> Module::parameters() const {
  std::vector<Var> out;
  for (auto& p : named_parameters()) out.push_back(p.var);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.var.value().size();
  return n;
}

void Module::set_trainable(bool trainable) {
  for (auto& p : named_parameters()) {
    p.var.set_requires_grad(trainable);
    if (!trainable) p.var.zero_grad();
  }
}

bool Module::trainable() const {
  for (const auto& p : named_parameters()) {
    if (p.var.requires_grad()) return true;
  }
  return false;
}

Var Module::add_parameter(std::string name, Tensor init) {
  round_to_float(init);
  Var v(std::move(init), true);
  params_.push_back({std::move(name), v});
  return v;
}

void Module::add_child(std::string name, Module& child) { children_.emplace_back(std::move(name), &child); }

Var with_left_context(const Var& x, std::size_t axis, std::size_t context, Tensor& cached) {
  if (cached.empty()) {
    Shape s = x.shape();
    s[axis] = context;
    cached = Tensor(s);
  }
  Var joined = concat({Var(cached), x}, axis);
  cached = joined.value().slice(axis, joined.dim(axis) - context, context);
  return joined;
}

Conv1d::Conv1d(const Conv1dSpec& spec, Initializer& init) : spec_(spec) {
  if (spec.groups == 0 || spec.in_channels % spec.groups || spec.out_channels % spec.groups) {
    throw ShapeError("conv1d groups do not divide channels");
  }
  const std::size_t fan_in = spec.in_channels / spec.groups * spec.kernel;
  const Real bound = 1 / std::sqrt(static_cast<Real>(fan_in));
  weight_ = add_parameter("weight", init.uniform({spec.out_channels, spec.in_channels / spec.groups, spec.kernel}, bound));
  if (spec.bias) bias_ = add_parameter("bias", init.uniform({spec.out_channels}, bound));
}

Var Conv1d::forward(const Var& x, StreamCache* cache) const {
  Conv1dOptions opt;
  opt.stride = spec_.stride;
  opt.dilation = spec_.dilation;
  opt.groups = spec_.groups;
  if (!spec_.causal) {
    if (cache) throw ShapeError("streaming requires a causal convolution");
    opt.pad_left = spec_.pad_left;
    opt.pad_right = spec_.pad_right;
    return conv1d(x, weight_, bias_, opt);
  }
  const std::size_t context = spec_.dilation * (spec_.kernel - 1);
  if (!cache || context == 0) {
    opt.pad_left = context;
    return conv1d(x, weight_, bias_, opt);
  }
  if (spec_.stride != 1) throw ShapeError("streaming requires unit stride");
  Var joined = with_left_context(x, 2, context, cache->slot(this));
  return conv1d(joined, weight_, bias_, opt);
}

CausalConv2d::CausalConv2d(const Conv2dSpec& spec, Initializer& init) : spec_(spec) {
  const std::size_t fan_in = spec.in_channels * spec.kernel_t * spec.kernel_f;
  const Real bound = 1 / std::sqrt(static_cast<Real>(fan_in));
  weight_ = add_parameter("weight",
                          init.uniform({spec.out_channels, spec.in_channels, spec.kernel_t, spec.kernel_f}, bound));
  if (spec.bias) bias_ = add_parameter("bias", init.uniform({spec.out_channels}, bound));
}

std::size_t CausalConv2d::out_bins(std::size_t bins) const noexcept {
  return (bins + spec_.pad_f_left + spec_.pad_f_right - spec_.kernel_f) / spec_.stride_f + 1;
}

Var CausalConv2d::forward(const Var& x, StreamCache* cache) const {
  Conv2dOptions opt;
  opt.stride_f = spec_.stride_f;
  opt.pad_f_left = spec_.pad_f_left;
  opt.pad_f_right = spec_.pad_f_right;
  const std::size_t context = spec_.kernel_t - 1;
  if (!cache || context == 0) {
    opt.pad_t_left = context;
    return conv2d(x, weight_, bias_, opt);
  }
  Var joined = with_left_context(x, 2, context, cache->slot(this));
  return conv2d(joined, weight_, bias_, opt);
}

PReLU::PReLU(std::size_t channels, Real init) { alpha_ = add_parameter("alpha", Tensor({channels}, init)); }

ChannelLayerNorm::ChannelLayerNorm(std::size_t channels) {
  gain_ = add_parameter("gain", Tensor({channels}, 1.0));
  bias_ = add_parameter("bias", Tensor({channels}, 0.0));
}

}  // namespace plc
