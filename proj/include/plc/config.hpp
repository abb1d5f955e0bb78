#pragma once

// One structured run configuration for every workflow, serialized as JSON.
// Unknown keys are rejected so that a checkpoint's snapshot is complete.

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "plc/discriminators.hpp"
#include "plc/losses.hpp"
#include "plc/model.hpp"
#include "plc/optim.hpp"
#include "plc/postproc.hpp"

namespace plc {

struct DataConfig {
  /// Length of the random crop taken from each clip per batch item.
  double segment_ms = 1000;
  /// Each batch item draws its trace loss rate uniformly from this range.
  double loss_rate_min = 0.1;
  double loss_rate_max = 0.5;
  std::size_t max_burst_packets = 11;

  std::size_t segment_samples() const;
  void validate() const;
};

struct Stage1Config {
  /// Update count; when epochs > 0 it is epochs * steps_per_epoch instead.
  std::size_t steps = 2000;
  std::size_t epochs = 0;
  std::size_t batch_size = 4;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;

  void validate() const;
};

struct Stage2Config {
  std::size_t steps = 2000;
  std::size_t epochs = 0;
  std::size_t batch_size = 4;
  double lr = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  /// Multiplies both learning rates once per epoch.
  double lr_decay = 0.999;

  void validate() const;
};

struct PathsConfig {
  std::string corpus;
  std::string traces;
  std::string out;
  std::string pretrained;
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;
  model::ModelConfig model;
  model::ContrastiveConfig contrastive;
  model::DiscriminatorConfig discriminator;
  model::LossWeights loss_weights;
  model::SpectralLossConfig spectral;
  DataConfig data;
  Stage1Config stage1;
  Stage2Config stage2;
  post::FadePolicy fade;
  PathsConfig paths;

  /// Throws ConfigError (or the module's own error) on the first problem.
  void validate() const;
};

/// "desk" (the defaults) or "paper" (batch sizes and epoch counts of the
/// original training runs); anything else is a ConfigError.
RunConfig preset_config(const std::string& name);

nlohmann::json to_json(const RunConfig& config);
/// Overlays `j` on `base`. Unknown keys and ill-typed values throw
/// ConfigError naming the dotted key path.
RunConfig from_json(const nlohmann::json& j, RunConfig base);
/// Reads a JSON file (comments are not accepted) and overlays it on `base`.
RunConfig load_config(const std::filesystem::path& path, RunConfig base);
void save_config(const std::filesystem::path& path, const RunConfig& config);

/// Worker count from PLC_NUM_WORKERS; 0 or unset selects the deterministic
/// single-worker mode and returns 1.
int configured_workers();

}  // namespace plc
