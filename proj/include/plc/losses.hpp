#pragma once

// Training objectives of the adversarial stage: power-law compressed
// spectral MSE, multi-resolution log-mel MAE, least-squares adversarial
// terms and feature matching, combined with fixed weights.

#include <vector>

#include "plc/discriminators.hpp"
#include "plc/spectral.hpp"

namespace plc::model {

struct LossWeights {
  double adv = 1.0;
  double fm = 2.0;
  double bin = 45.0;
  double mel = 0.045;

  void validate() const;
};

struct SpectralLossConfig {
  double compress_exponent = 0.3;
  std::vector<std::size_t> mel_ffts{512, 1024, 2048};
  std::vector<std::size_t> mel_bands{64, 128, 128};
  double log_floor = 1e-5;

  void validate() const;
};

class SpectralLosses {
 public:
  explicit SpectralLosses(const SpectralLossConfig& config);
  /// MSE between compressed model-framing spectra; waves (B, 1, L).
  Var bin(const Var& pred, const Var& target) const;
  /// Mean over resolutions of the MAE between clamped log-mel spectra.
  Var mel(const Var& pred, const Var& target) const;
  /// Clamped log-mel spectrogram (B, T, M) at resolution `index`.
  Var log_mel(const Var& wave, std::size_t index) const;

  const SpectralLossConfig& config() const noexcept { return config_; }

 private:
  SpectralLossConfig config_;
  spectral::Framing model_framing_;
  std::vector<spectral::Framing> mel_framings_;
  std::vector<Tensor> filterbanks_;
};

/// sum_k mean((D(real)_k - 1)^2) + mean(D(fake)_k^2).
Var discriminator_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake);
/// sum_k mean((D(fake)_k - 1)^2).
Var adversarial_loss(const DiscriminatorOutput& fake);
/// sum over sub-discriminators and layers of mean |f_real - f_fake|.
Var feature_matching_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake);

struct GeneratorLoss {
  Var adv;
  Var fm;
  Var bin;
  Var mel;
  Var total;
};

/// weights.adv * (adv + weights.fm * fm) + weights.bin * bin + weights.mel * mel.
Var combine_generator_terms(const Var& adv, const Var& fm, const Var& bin, const Var& mel, const LossWeights& weights);

GeneratorLoss generator_loss(const Var& pred, const Var& target, const DiscriminatorOutput& real,
                             const DiscriminatorOutput& fake, const SpectralLosses& spectral,
                             const LossWeights& weights);

}  // namespace plc::model
