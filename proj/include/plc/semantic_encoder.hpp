#pragma once

// Semantic branch: a time-causal 2-D convolutional feature extractor whose
// frequency axis is folded into channels, followed by dilated temporal
// convolution modules that aggregate past context.

#include <memory>
#include <vector>

#include "plc/nn.hpp"

namespace plc::model {

struct EncoderConfig {
  std::size_t bins = 161;
  std::size_t kernel_t = 2;
  std::size_t kernel_f = 5;
  std::vector<std::size_t> channels{16, 32, 32, 40};
  std::vector<std::size_t> freq_strides{1, 4, 4, 2};
  std::size_t latent = 240;
  std::size_t tcm_blocks = 2;
  std::vector<std::size_t> tcm_dilations{1, 2, 4};
  std::size_t tcm_kernel = 9;
  std::size_t tcm_hidden = 64;

  /// Frequency bins after the strided layers (6 for the defaults).
  std::size_t out_bins() const;
  /// Throws ShapeError unless channels.back() * out_bins() == latent.
  void validate() const;
  /// Frames of past context seen by the aggregator, including the current one.
  std::size_t aggregator_receptive_field() const;
};

/// Stacks compressed spectra (B, 2, T, F) with the frame loss map (B, T)
/// broadcast over frequency into the (B, 3, T, F) extractor input.
Tensor make_encoder_input(const Tensor& cspec, const Tensor& lossmap);

class FeatureExtractor : public Module {
 public:
  FeatureExtractor(const EncoderConfig& config, Initializer& init);
  /// (B, 3, T, F) -> (B, C_E, T, F_out).
  Var forward(const Var& x, StreamCache* cache = nullptr) const;

 private:
  std::vector<std::unique_ptr<CausalConv2d>> convs_;
  std::vector<std::unique_ptr<PReLU>> acts_;
};

/// Bottleneck block: 1x1 in, depthwise dilated causal conv, 1x1 out, residual.
class TemporalConvModule : public Module {
 public:
  TemporalConvModule(std::size_t channels, std::size_t hidden, std::size_t kernel, std::size_t dilation,
                     Initializer& init);
  Var forward(const Var& x, StreamCache* cache = nullptr) const;

 private:
  Conv1d in_;
  PReLU act_in_;
  ChannelLayerNorm norm_in_;
  Conv1d depthwise_;
  PReLU act_mid_;
  ChannelLayerNorm norm_mid_;
  Conv1d out_;
};

class ContextAggregator : public Module {
 public:
  ContextAggregator(const EncoderConfig& config, Initializer& init);
  /// (B, C_S, T) -> (B, C_S, T).
  Var forward(const Var& x, StreamCache* cache = nullptr) const;

 private:
  std::vector<std::unique_ptr<TemporalConvModule>> modules_;
};

class SemanticEncoder : public Module {
 public:
  SemanticEncoder(const EncoderConfig& config, Initializer& init);

  /// Folded extractor output (B, C_S, T) for a prepared input.
  Var extract(const Tensor& input, StreamCache* cache = nullptr) const;
  /// X^S (B, C_S, T) from compressed spectra (B, 2, T, F) and loss map (B, T).
  Var forward(const Tensor& cspec, const Tensor& lossmap, StreamCache* cache = nullptr) const;

  const EncoderConfig& config() const noexcept { return config_; }
  const FeatureExtractor& extractor() const noexcept { return extractor_; }
  const ContextAggregator& aggregator() const noexcept { return aggregator_; }

 private:
  EncoderConfig config_;
  FeatureExtractor extractor_;
  ContextAggregator aggregator_;
};

}  // namespace plc::model
