#pragma once

// The complete concealment network: lossy waveform and frame loss map in,
// resynthesized waveform out. Offline and streaming use the same code path.

#include <cstdint>

#include "plc/auxiliary_encoder.hpp"
#include "plc/quantizer.hpp"
#include "plc/semantic_encoder.hpp"
#include "plc/vocoder.hpp"

namespace plc::model {

struct ModelConfig {
  EncoderConfig semantic;
  AuxiliaryConfig auxiliary;
  QuantizerConfig quantizer;
  VocoderConfig vocoder;
  double compress_exponent = 0.3;

  void validate() const;
};

class ConcealmentModel : public Module {
 public:
  ConcealmentModel(const ModelConfig& config, std::uint64_t seed);

  /// Compressed model-framing spectra (B, 2, T, F) of waves (B, 1, 160 T).
  /// With a cache the previous hop of samples is carried between calls.
  Tensor analyze(const Tensor& wave, StreamCache* cache = nullptr) const;

  /// Resynthesizes (B, 1, 160 T) from zero-filled lossy audio and the frame
  /// loss map (B, T).
  Var forward(const Tensor& lossy_wave, const Tensor& lossmap, StreamCache* cache = nullptr) const;
  /// Same from precomputed compressed spectra.
  Var synthesize(const Tensor& cspec, const Tensor& lossmap, StreamCache* cache = nullptr) const;

  const ModelConfig& config() const noexcept { return config_; }
  SemanticEncoder& semantic() noexcept { return semantic_; }
  const SemanticEncoder& semantic() const noexcept { return semantic_; }
  GumbelQuantizer& quantizer() noexcept { return quantizer_; }
  const GumbelQuantizer& quantizer() const noexcept { return quantizer_; }
  AuxiliaryEncoder& auxiliary() noexcept { return auxiliary_; }
  Fusion& fusion() noexcept { return fusion_; }
  Generator& generator() noexcept { return generator_; }

 private:
  ModelConfig config_;
  Initializer init_;
  SemanticEncoder semantic_;
  GumbelQuantizer quantizer_;
  AuxiliaryEncoder auxiliary_;
  Fusion fusion_;
  Generator generator_;
};

}  // namespace plc::model
