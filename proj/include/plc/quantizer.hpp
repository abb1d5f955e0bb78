#pragma once

// Gumbel-softmax product quantizer over clean features and the pretraining
// objective: a cosine-similarity contrastive loss at lost frames plus a
// codebook diversity term.

#include <cstdint>
#include <random>
#include <vector>

#include "plc/nn.hpp"
#include "plc/semantic_encoder.hpp"

namespace plc::model {

struct QuantizerConfig {
  std::size_t groups = 2;
  std::size_t entries = 320;
  std::size_t latent = 240;
  double tau_init = 2.0;
  double tau_min = 0.5;
  double anneal = 0.999995;

  std::size_t entry_dim() const noexcept { return latent / groups; }
  void validate() const;
};

struct ContrastiveConfig {
  std::size_t distractors = 100;
  double kappa = 0.1;
  double diversity_weight = 0.1;

  void validate() const;
};

/// max(tau_min, tau_init * anneal^step).
double anneal_temperature(std::uint64_t step, const QuantizerConfig& config);

struct GumbelSelection {
  /// (B, G*V, T): one-hot values in the forward pass; in soft mode gradients
  /// pass straight through to the Gumbel-softmax weights.
  Var weights;
  /// (B, G*V, T) Gumbel-softmax weights (soft mode only).
  Tensor soft;
  /// Selected entry per (b, g, t), flattened in that order.
  std::vector<std::uint32_t> selected;
};

/// Softmax over the V entries of each group at temperature tau.
Var group_softmax(const Var& logits, std::size_t groups, double tau);

/// Soft mode adds Gumbel noise drawn from `rng` and selects the argmax of the
/// perturbed softmax; hard mode takes the argmax of the logits.
GumbelSelection gumbel_select(const Var& logits, std::size_t groups, double tau, bool hard, std::mt19937_64* rng);

/// y[b, g*D + d, t] = sum_v w[b, g*V + v, t] * codebook[g, v, d].
Var codebook_lookup(const Var& weights, const Var& codebook);

struct QuantizerOutput {
  Var codewords;  // (B, C, T) concatenated entries before projection
  Var quantized;  // (B, C, T) projected targets
  Var probs;      // (B, G*V, T) noise-free softmax of the logits
  std::vector<std::uint32_t> selected;
};

class GumbelQuantizer : public Module {
 public:
  GumbelQuantizer(const QuantizerConfig& config, Initializer& init);

  /// Throws ParameterError when tau <= 0; soft mode requires `rng`.
  QuantizerOutput forward(const Var& features, double tau, bool hard, std::mt19937_64* rng = nullptr) const;

  const QuantizerConfig& config() const noexcept { return config_; }
  const Var& codebook() const noexcept { return codebook_; }
  const Conv1d& logits_layer() const noexcept { return logits_; }

 private:
  QuantizerConfig config_;
  Conv1d logits_;
  Var codebook_;
  Conv1d projection_;
};

/// Batch-and-frame average of (B, G*V, T) probabilities, shape (G, V).
Var average_probs(const Var& probs, std::size_t groups);

/// (1/(G V)) sum p log p over a (G, V) matrix whose rows are distributions,
/// with p clamped below at 1e-12 inside the log. Throws MathError when a row
/// does not sum to 1 within 1e-4.
Var diversity_loss(const Var& mean_probs);

struct FramePosition {
  std::size_t batch = 0;
  std::size_t frame = 0;
  friend bool operator==(const FramePosition&, const FramePosition&) = default;
};

/// All lost positions of a (B, T) loss map in batch-major order.
std::vector<FramePosition> lost_positions(const Tensor& lossmap);

/// K draws from `pool` minus `target`: without replacement when at least K
/// candidates remain, otherwise with replacement. Throws MathError when no
/// candidate remains.
std::vector<FramePosition> sample_distractors(const std::vector<FramePosition>& pool, FramePosition target,
                                              std::size_t count, std::mt19937_64& rng);

/// Rows (N, C) of a (B, C, T) sequence at the given positions.
Var gather_frames(const Var& x, const std::vector<FramePosition>& positions);

/// Mean over N of -log softmax_j(cos(x_n, c_{n,j}) / kappa) at j = 0.
/// anchors (N, C); candidates (N, K+1, C) with the positive first.
/// Throws MathError on a zero-norm vector.
Var contrastive_loss(const Var& anchors, const Var& candidates, double kappa);

struct PretrainBatch {
  Tensor lossy;    // (B, 2, T, F) compressed spectra of the lossy audio
  Tensor clean;    // (B, 2, T, F) compressed spectra of the clean audio
  Tensor lossmap;  // (B, T)
};

struct PretrainLoss {
  Var total;
  Var contrastive;
  Var diversity;
  std::size_t targets = 0;
  /// Target followed by its distractors, K + 1 entries per target.
  std::vector<FramePosition> candidates;
  /// True when the batch has no usable lost frame; the loss fields are then undefined.
  bool skipped = false;
};

/// The pretraining objective given lossy-branch predictions (B, C, T),
/// quantized clean targets (B, C, T) and quantizer probabilities.
PretrainLoss pretrain_objective(const Var& predicted, const Var& quantized, const Var& probs, std::size_t groups,
                                const Tensor& lossmap, const ContrastiveConfig& config, std::mt19937_64& rng);

PretrainLoss pretrain_loss(const SemanticEncoder& encoder, const GumbelQuantizer& quantizer,
                           const PretrainBatch& batch, double tau, const ContrastiveConfig& config,
                           std::mt19937_64& rng);

}  // namespace plc::model
