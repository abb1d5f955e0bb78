#pragma once

// Multi-period and multi-scale waveform discriminators.

#include <memory>
#include <vector>

#include "plc/nn.hpp"

namespace plc::model {

struct DiscriminatorConfig {
  std::vector<std::size_t> periods{2, 3, 5, 7, 11};
  std::size_t scales = 3;
  std::vector<std::size_t> period_channels{8, 16, 32, 32};
  std::vector<std::size_t> scale_channels{16, 32, 64, 64};
  std::size_t scale_groups = 4;
  double slope = 0.1;

  void validate() const;
};

/// Shortest waveform accepted by the discriminators.
inline constexpr std::size_t kMinDiscriminatorLength = 32;

struct DiscriminatorOutput {
  /// One score map per sub-discriminator.
  std::vector<Var> scores;
  /// Intermediate activations per sub-discriminator.
  std::vector<std::vector<Var>> features;
};

/// Stack of 1-D convolutions with leaky ReLU; returns the score map and
/// fills `features` with every activation.
class ConvStack : public Module {
 public:
  ConvStack(const std::vector<Conv1dSpec>& layers, const Conv1dSpec& post, double slope, Initializer& init);
  Var forward(const Var& x, std::vector<Var>& features) const;

 private:
  double slope_;
  std::vector<std::unique_ptr<Conv1d>> layers_;
  std::unique_ptr<Conv1d> post_;
};

class PeriodDiscriminator : public Module {
 public:
  PeriodDiscriminator(std::size_t period, const DiscriminatorConfig& config, Initializer& init);
  Var forward(const Var& wave, std::vector<Var>& features) const;
  std::size_t period() const noexcept { return period_; }

 private:
  std::size_t period_;
  ConvStack stack_;
};

class ScaleDiscriminator : public Module {
 public:
  ScaleDiscriminator(const DiscriminatorConfig& config, Initializer& init);
  Var forward(const Var& wave, std::vector<Var>& features) const { return stack_.forward(wave, features); }

 private:
  ConvStack stack_;
};

class Discriminators : public Module {
 public:
  Discriminators(const DiscriminatorConfig& config, Initializer& init);
  /// wave (B, 1, L); throws LengthError below kMinDiscriminatorLength.
  DiscriminatorOutput forward(const Var& wave) const;
  std::size_t count() const noexcept { return periods_.size() + scales_.size(); }

 private:
  std::vector<std::unique_ptr<PeriodDiscriminator>> periods_;
  std::vector<std::unique_ptr<ScaleDiscriminator>> scales_;
};

}  // namespace plc::model
