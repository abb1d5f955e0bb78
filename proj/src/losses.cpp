#include "plc/losses.hpp"

#include "plc/audio.hpp"
#include "plc/errors.hpp"

namespace plc::model {

void LossWeights::validate() const {
  if (adv < 0 || fm < 0 || bin < 0 || mel < 0) throw ParameterError("loss weights must be non-negative");
}

void SpectralLossConfig::validate() const {
  if (!(compress_exponent > 0 && compress_exponent <= 1)) throw ParameterError("compression exponent must lie in (0, 1]");
  if (mel_ffts.size() != mel_bands.size() || mel_ffts.empty()) throw ParameterError("mel resolutions must pair up");
  if (!(log_floor > 0)) throw ParameterError("log floor must be positive");
}

SpectralLosses::SpectralLosses(const SpectralLossConfig& config)
    : config_(config), model_framing_(spectral::Framing::model()) {
  config.validate();
  for (std::size_t i = 0; i < config.mel_ffts.size(); ++i) {
    mel_framings_.push_back(spectral::Framing::hann(config.mel_ffts[i]));
    filterbanks_.push_back(
        spectral::mel_filterbank(config.mel_bands[i], config.mel_ffts[i], audio::kSampleRate, 0.0, audio::kSampleRate / 2.0));
  }
}

namespace {

void require_pair(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Var SpectralLosses::bin(const Var& pred, const Var& target) const {
  require_pair(pred, target, "l_bin");
  const Real p = config_.compress_exponent;
  return mse(spectral::power_compress(spectral::stft(pred, model_framing_), p),
             spectral::power_compress(spectral::stft(target, model_framing_), p));
}

Var SpectralLosses::log_mel(const Var& wave, std::size_t index) const {
  const Var mag = spectral::magnitude(spectral::stft(wave, mel_framings_.at(index)));
  return spectral::log_clamped(spectral::mel_project(mag, filterbanks_[index]), config_.log_floor);
}

Var SpectralLosses::mel(const Var& pred, const Var& target) const {
  require_pair(pred, target, "l_mel");
  Var total;
  for (std::size_t i = 0; i < mel_framings_.size(); ++i) {
    const Var term = l1(log_mel(pred, i), log_mel(target, i));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<Real>(mel_framings_.size()));
}

namespace {

Var accumulate(Var total, const Var& term) { return total.defined() ? add(total, term) : term; }

void require_same_count(const DiscriminatorOutput& a, const DiscriminatorOutput& b) {
  if (a.scores.size() != b.scores.size() || a.features.size() != b.features.size()) {
    throw ShapeError("discriminator outputs differ in structure");
  }
}

}  // namespace

Var discriminator_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake) {
  require_same_count(real, fake);
  Var total;
  for (std::size_t k = 0; k < real.scores.size(); ++k) {
    total = accumulate(total, add(mean_square_dev(real.scores[k], 1.0), mean_square_dev(fake.scores[k], 0.0)));
  }
  return total;
}

Var adversarial_loss(const DiscriminatorOutput& fake) {
  Var total;
  for (const auto& s : fake.scores) total = accumulate(total, mean_square_dev(s, 1.0));
  return total;
}

Var feature_matching_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake) {
  require_same_count(real, fake);
  Var total;
  for (std::size_t k = 0; k < real.features.size(); ++k) {
    if (real.features[k].size() != fake.features[k].size()) throw ShapeError("feature lists differ in length");
    for (std::size_t l = 0; l < real.features[k].size(); ++l) {
      total = accumulate(total, l1(real.features[k][l], fake.features[k][l]));
    }
  }
  return total;
}

Var combine_generator_terms(const Var& adv, const Var& fm, const Var& bin, const Var& mel, const LossWeights& weights) {
  weights.validate();
  const Var adversarial = scale(add(adv, scale(fm, weights.fm)), weights.adv);
  return add(add(adversarial, scale(bin, weights.bin)), scale(mel, weights.mel));
}

GeneratorLoss generator_loss(const Var& pred, const Var& target, const DiscriminatorOutput& real,
                             const DiscriminatorOutput& fake, const SpectralLosses& spectral,
                             const LossWeights& weights) {
  GeneratorLoss out;
  out.adv = adversarial_loss(fake);
  out.fm = feature_matching_loss(real, fake);
  out.bin = spectral.bin(pred, target);
  out.mel = spectral.mel(pred, target);
  out.total = combine_generator_terms(out.adv, out.fm, out.bin, out.mel, weights);
  return out;
}

}  // namespace plc::model
