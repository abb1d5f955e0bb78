#include "plc/model.hpp"

#include "plc/audio.hpp"
#include "plc/errors.hpp"
#include "plc/spectral.hpp"

namespace plc::model {

void ModelConfig::validate() const {
  semantic.validate();
  auxiliary.validate();
  quantizer.validate();
  vocoder.validate();
  if (semantic.latent != auxiliary.latent || semantic.latent != quantizer.latent ||
      semantic.latent != vocoder.latent) {
    throw ConfigError("semantic, auxiliary, quantizer and vocoder latent sizes must agree");
  }
  if (semantic.bins != audio::kBins || auxiliary.bins != audio::kBins) {
    throw ConfigError("encoders must consume " + std::to_string(audio::kBins) + " bins");
  }
  if (vocoder.hop() != audio::kHop) throw ConfigError("vocoder upsampling must total the 160-sample hop");
  if (!(compress_exponent > 0 && compress_exponent <= 1)) throw ConfigError("compress_exponent must lie in (0, 1]");
}

namespace {

const ModelConfig& checked(const ModelConfig& config) {
  config.validate();
  return config;
}

}  // namespace

ConcealmentModel::ConcealmentModel(const ModelConfig& config, std::uint64_t seed)
    : config_(checked(config)),
      init_(seed),
      semantic_(config_.semantic, init_),
      quantizer_(config_.quantizer, init_),
      auxiliary_(config_.auxiliary, init_),
      fusion_(config_.semantic.latent, init_),
      generator_(config_.vocoder, init_) {
  add_child("semantic", semantic_);
  add_child("quantizer", quantizer_);
  add_child("auxiliary", auxiliary_);
  add_child("fusion", fusion_);
  add_child("generator", generator_);
}

Tensor ConcealmentModel::analyze(const Tensor& wave, StreamCache* cache) const {
  if (wave.rank() != 3 || wave.dim(1) != 1 || wave.dim(2) % audio::kHop) {
    throw ShapeError("model input must be (B, 1, 160 T), got " + shape_str(wave.shape()));
  }
  NoGradGuard guard;
  const std::size_t frames = wave.dim(2) / audio::kHop;
  spectral::Framing framing = spectral::Framing::model();
  Var input(wave);
  if (cache) {
    // The cached hop plays the role of the left padding of the offline pass.
    input = with_left_context(input, 2, framing.left_pad, cache->slot(this));
    framing.left_pad = 0;
  }
  Var spec = spectral::stft(input, framing);
  if (spec.dim(2) != frames) spec = slice(spec, 2, 0, frames);
  return spectral::power_compress(spec, config_.compress_exponent).value();
}

Var ConcealmentModel::synthesize(const Tensor& cspec, const Tensor& lossmap, StreamCache* cache) const {
  const Var s = semantic_.forward(cspec, lossmap, cache);
  const Var a = auxiliary_.forward(cspec, lossmap, cache);
  return generator_.forward(fusion_.forward(s, a), cache);
}

Var ConcealmentModel::forward(const Tensor& lossy_wave, const Tensor& lossmap, StreamCache* cache) const {
  return synthesize(analyze(lossy_wave, cache), lossmap, cache);
}

}  // namespace plc::model
