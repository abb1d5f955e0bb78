#pragma once

#include <cstdint>
#include <vector>

#include "plc/nn.hpp"

namespace plc {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Adam with bias correction. Parameters and moments are rounded to float32
/// after every update so that a checkpoint written mid-run resumes exactly.
class Adam {
 public:
  Adam(std::vector<NamedParameter> params, const AdamConfig& config);

  /// Applies one update from the accumulated gradients; parameters without
  /// a gradient are left untouched.
  void step();
  void zero_grad();

  double lr() const noexcept { return lr_; }
  void set_lr(double lr);
  std::uint64_t steps() const noexcept { return steps_; }
  void set_steps(std::uint64_t steps) noexcept { steps_ = steps; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<NamedParameter>& parameters() const noexcept { return params_; }

  /// Moment tensors named "<param>.m" and "<param>.v".
  std::vector<std::pair<std::string, Tensor>> state() const;
  /// Restores moments; throws CorruptionError naming the first missing or
  /// misshapen entry.
  void load_state(const std::vector<std::pair<std::string, Tensor>>& state);

 private:
  std::vector<NamedParameter> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamConfig config_;
  double lr_;
  std::uint64_t steps_ = 0;
};

}  // namespace plc
