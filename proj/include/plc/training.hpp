#pragma once

// Two-stage training: contrastive pretraining of the semantic branch, then
// adversarial training of the auxiliary branch, fusion and generator with
// the semantic branch frozen.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "plc/checkpoint.hpp"
#include "plc/config.hpp"
#include "plc/data.hpp"
#include "plc/discriminators.hpp"
#include "plc/losses.hpp"
#include "plc/model.hpp"
#include "plc/optim.hpp"

namespace plc::train {

inline constexpr const char* kStageContrastive = "contrastive";
inline constexpr const char* kStageAdversarial = "adversarial";

struct LossRecord {
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, double>> values;

  /// Throws ParameterError for an unknown column.
  double get(const std::string& name) const;
};

/// Appends records as CSV rows; the header is step followed by the record's
/// column names, fixed by the first record.
class CsvLog {
 public:
  explicit CsvLog(const std::filesystem::path& path);
  void write(const LossRecord& record);

 private:
  std::ofstream out_;
  bool header_written_ = false;
};

/// ceil(corpus / batch).
std::size_t steps_per_epoch(std::size_t corpus_size, std::size_t batch_size);

class ContrastiveTrainer {
 public:
  ContrastiveTrainer(model::ConcealmentModel& model, const Corpus& corpus, const RunConfig& config);

  /// One update. Batches with too few lost frames are redrawn.
  LossRecord step();
  std::uint64_t steps() const noexcept { return step_; }
  Adam& optimizer() noexcept { return adam_; }
  Checkpoint checkpoint() const;

 private:
  model::ConcealmentModel& model_;
  RunConfig config_;
  BatchSampler sampler_;
  Adam adam_;
  std::mt19937_64 rng_;
  std::uint64_t step_ = 0;
};

/// Freezes the semantic encoder and the quantizer of `model` on
/// construction; one step is a discriminator update followed by a
/// generator update on the same batch.
class AdversarialTrainer {
 public:
  AdversarialTrainer(model::ConcealmentModel& model, const Corpus& corpus, const RunConfig& config);

  LossRecord step();
  std::uint64_t steps() const noexcept { return step_; }
  model::Discriminators& discriminators() noexcept { return disc_; }
  Adam& generator_optimizer() noexcept { return g_adam_; }
  Adam& discriminator_optimizer() noexcept { return d_adam_; }
  Checkpoint checkpoint() const;
  /// Names of the frozen parameter groups.
  static std::vector<std::string> frozen_groups();

 private:
  model::ConcealmentModel& model_;
  RunConfig config_;
  BatchSampler sampler_;
  Initializer disc_init_;
  model::Discriminators disc_;
  model::SpectralLosses spectral_;
  Adam g_adam_;
  Adam d_adam_;
  std::size_t epoch_steps_;
  std::uint64_t step_ = 0;
};

using Observer = std::function<void(const LossRecord&)>;

/// Runs stage 1 for the configured number of steps and writes the
/// checkpoint (and train_log.csv) into `out_dir`.
Checkpoint train_stage1(const Corpus& corpus, const RunConfig& config, const std::filesystem::path& out_dir,
                        const Observer& observer = {});

/// Loads the stage-1 checkpoint, runs stage 2 and writes into `out_dir`.
/// A missing pretrained checkpoint is a ConfigError.
Checkpoint train_stage2(const Corpus& corpus, const RunConfig& config, const std::filesystem::path& pretrained_dir,
                        const std::filesystem::path& out_dir, const Observer& observer = {});

/// Rebuilds a model from a checkpoint's config snapshot and parameters.
std::unique_ptr<model::ConcealmentModel> load_model(const std::filesystem::path& dir);
std::unique_ptr<model::ConcealmentModel> load_model(const Checkpoint& checkpoint);

/// Planned update count of a stage.
std::size_t planned_steps(std::size_t steps, std::size_t epochs, std::size_t corpus_size, std::size_t batch_size);

}  // namespace plc::train
