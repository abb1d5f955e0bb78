#pragma once

// Auxiliary branch: a causal conv front end and group-wise temporal
// self-attention over a past window, with lost frames masked out of the
// queries, keys and values.

#include <memory>
#include <vector>

#include "plc/nn.hpp"

namespace plc::model {

struct AuxiliaryConfig {
  std::size_t bins = 161;
  std::size_t conv_channels = 8;
  std::size_t latent = 240;
  std::size_t blocks = 2;
  std::size_t groups = 4;
  std::size_t window = 150;
  std::size_t ffn_hidden = 480;

  void validate() const;
};

/// Attention with loss masking. q, k, v are (B, C, T) and lossmap (B, T).
/// Lost frames are zeroed in q, k and v and excluded as keys, so a lost
/// query attends uniformly to the visible received frames; a query with no
/// visible received frame yields zero. Frame t sees frames [t - window, t].
/// The optional `weights` output is (B, groups, T, window + 1).
Var masked_attention(const Var& q, const Var& k, const Var& v, const Tensor& lossmap, std::size_t groups,
                     std::size_t window, Tensor* weights = nullptr);

class AttentionBlock : public Module {
 public:
  AttentionBlock(const AuxiliaryConfig& config, Initializer& init);
  /// x (B, C_A, T), lossmap (B, T).
  Var forward(const Var& x, const Tensor& lossmap, StreamCache* cache = nullptr) const;

 private:
  std::size_t groups_;
  std::size_t window_;
  ChannelLayerNorm norm_attn_;
  Conv1d query_;
  Conv1d key_;
  Conv1d value_;
  Conv1d proj_;
  ChannelLayerNorm norm_ffn_;
  Conv1d ffn_in_;
  PReLU ffn_act_;
  Conv1d ffn_out_;
};

class AuxiliaryEncoder : public Module {
 public:
  AuxiliaryEncoder(const AuxiliaryConfig& config, Initializer& init);
  /// X^A (B, C_A, T) from compressed spectra (B, 2, T, F) and loss map (B, T).
  Var forward(const Tensor& cspec, const Tensor& lossmap, StreamCache* cache = nullptr) const;

  const AuxiliaryConfig& config() const noexcept { return config_; }

 private:
  AuxiliaryConfig config_;
  CausalConv2d conv_;
  PReLU conv_act_;
  Conv1d flatten_;
  std::vector<std::unique_ptr<AttentionBlock>> blocks_;
};

}  // namespace plc::model
