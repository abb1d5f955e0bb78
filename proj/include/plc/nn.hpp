#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "plc/autograd.hpp"
#include "plc/ops.hpp"

namespace plc {

/// Seeded source of initial parameter values. Draws are rounded to float32
/// so parameters survive a checkpoint round trip bit-exactly.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Tensor uniform(Shape shape, Real bound);
  Tensor normal(Shape shape, Real stddev);
  std::mt19937_64& engine() noexcept { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Rounds every entry to the nearest float32 value.
void round_to_float(Tensor& t);

struct NamedParameter {
  std::string name;
  Var var;
};

/// Owner of named parameters and child modules. Modules are not copyable;
/// children register by reference and must outlive nothing but their parent.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<NamedParameter> named_parameters(const std::string& prefix = "") const;
  std::vector<Var> parameters() const;
  std::size_t parameter_count() const;
  /// Toggles requires_grad on every parameter of this subtree.
  void set_trainable(bool trainable);
  bool trainable() const;

 protected:
  Var add_parameter(std::string name, Tensor init);
  void add_child(std::string name, Module& child);

 private:
  std::vector<NamedParameter> params_;
  std::vector<std::pair<std::string, Module*>> children_;
};

/// Per-stream left context for causal layers, keyed by layer identity.
class StreamCache {
 public:
  Tensor& slot(const void* owner, int index = 0) { return slots_[{owner, index}]; }
  void clear() { slots_.clear(); }
  bool empty() const { return slots_.empty(); }

 private:
  std::map<std::pair<const void*, int>, Tensor> slots_;
};

/// Prepends the cached context to `x` along `axis`, stores the trailing
/// `context` entries as the new context and returns the joined input.
Var with_left_context(const Var& x, std::size_t axis, std::size_t context, Tensor& cached);

struct Conv1dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  /// Causal layers pad dilation*(kernel-1) on the left and support streaming.
  bool causal = true;
  /// Used when not causal.
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  bool bias = true;
};

class Conv1d : public Module {
 public:
  Conv1d(const Conv1dSpec& spec, Initializer& init);
  Var forward(const Var& x, StreamCache* cache = nullptr) const;
  const Conv1dSpec& spec() const noexcept { return spec_; }
  const Var& weight() const noexcept { return weight_; }

 private:
  Conv1dSpec spec_;
  Var weight_;
  Var bias_;
};

/// Time-causal 2-D convolution over (frames, bins).
struct Conv2dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_t = 2;
  std::size_t kernel_f = 5;
  std::size_t stride_f = 1;
  std::size_t pad_f_left = 2;
  std::size_t pad_f_right = 2;
  bool bias = true;
};

class CausalConv2d : public Module {
 public:
  CausalConv2d(const Conv2dSpec& spec, Initializer& init);
  Var forward(const Var& x, StreamCache* cache = nullptr) const;
  const Conv2dSpec& spec() const noexcept { return spec_; }
  std::size_t out_bins(std::size_t bins) const noexcept;

 private:
  Conv2dSpec spec_;
  Var weight_;
  Var bias_;
};

class PReLU : public Module {
 public:
  explicit PReLU(std::size_t channels, Real init = 0.25);
  Var forward(const Var& x) const { return prelu(x, alpha_); }

 private:
  Var alpha_;
};

class ChannelLayerNorm : public Module {
 public:
  explicit ChannelLayerNorm(std::size_t channels);
  Var forward(const Var& x) const { return layer_norm_channels(x, gain_, bias_); }

 private:
  Var gain_;
  Var bias_;
};

}  // namespace plc
