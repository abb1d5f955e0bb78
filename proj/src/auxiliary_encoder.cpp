#include "plc/auxiliary_encoder.hpp"

#include "plc/errors.hpp"

namespace plc::model {

void AuxiliaryConfig::validate() const {
  if (groups == 0 || latent % groups) throw ShapeError("auxiliary: groups must divide the latent width");
  if (window < 1) throw ParameterError("auxiliary: attention window must be >= 1");
}

namespace {

Tensor received(const Tensor& lossmap) {
  Tensor keep(lossmap.shape());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = lossmap[i] != 0 ? 0.0 : 1.0;
  return keep;
}

Conv1dSpec pointwise(std::size_t in, std::size_t out) {
  Conv1dSpec s;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

// Joins cached per-frame flags (B, window) with the current ones (B, T) and
// keeps the trailing `window` columns as the new cache.
Tensor flags_with_context(const Tensor& flags, std::size_t window, Tensor& cached) {
  const std::size_t b = flags.dim(0), t = flags.dim(1);
  if (cached.empty()) cached = Tensor({b, window});
  Tensor joined({b, window + t});
  for (std::size_t i = 0; i < b; ++i) {
    std::copy_n(cached.data() + i * window, window, joined.data() + i * (window + t));
    std::copy_n(flags.data() + i * t, t, joined.data() + i * (window + t) + window);
  }
  cached = joined.slice(1, t, window);
  return joined;
}

}  // namespace

Var masked_attention(const Var& q, const Var& k, const Var& v, const Tensor& lossmap, std::size_t groups,
                     std::size_t window, Tensor* weights) {
  if (q.shape().size() != 3 || lossmap.shape() != Shape{q.dim(0), q.dim(2)}) {
    throw ShapeError("masked_attention: loss map " + shape_str(lossmap.shape()) + " for queries " +
                     shape_str(q.shape()));
  }
  if (k.shape() != q.shape() || v.shape() != q.shape()) throw ShapeError("masked_attention: q, k, v differ in shape");
  const Tensor keep = received(lossmap);
  return windowed_attention(mask_frames(q, keep), mask_frames(k, keep), mask_frames(v, keep), keep, groups, window,
                            0, weights);
}

AttentionBlock::AttentionBlock(const AuxiliaryConfig& config, Initializer& init)
    : groups_(config.groups),
      window_(config.window),
      norm_attn_(config.latent),
      query_(pointwise(config.latent, config.latent), init),
      key_(pointwise(config.latent, config.latent), init),
      value_(pointwise(config.latent, config.latent), init),
      proj_(pointwise(config.latent, config.latent), init),
      norm_ffn_(config.latent),
      ffn_in_(pointwise(config.latent, config.ffn_hidden), init),
      ffn_act_(config.ffn_hidden),
      ffn_out_(pointwise(config.ffn_hidden, config.latent), init) {
  config.validate();
  add_child("norm_attn", norm_attn_);
  add_child("query", query_);
  add_child("key", key_);
  add_child("value", value_);
  add_child("proj", proj_);
  add_child("norm_ffn", norm_ffn_);
  add_child("ffn_in", ffn_in_);
  add_child("ffn_act", ffn_act_);
  add_child("ffn_out", ffn_out_);
}

Var AttentionBlock::forward(const Var& x, const Tensor& lossmap, StreamCache* cache) const {
  const Var h = norm_attn_.forward(x);
  Var q = query_.forward(h), k = key_.forward(h), v = value_.forward(h);
  Var attended;
  if (!cache) {
    attended = masked_attention(q, k, v, lossmap, groups_, window_);
  } else {
    // Streaming: keys and values of the last `window` frames are carried
    // over; cached frames from before the stream start are marked invalid.
    const Tensor keep = received(lossmap);
    q = mask_frames(q, keep);
    k = with_left_context(mask_frames(k, keep), 2, window_, cache->slot(this, 0));
    v = with_left_context(mask_frames(v, keep), 2, window_, cache->slot(this, 1));
    const Tensor valid = flags_with_context(keep, window_, cache->slot(this, 2));
    attended = windowed_attention(q, k, v, valid, groups_, window_, window_);
  }
  const Var y = add(x, proj_.forward(attended));
  return add(y, ffn_out_.forward(ffn_act_.forward(ffn_in_.forward(norm_ffn_.forward(y)))));
}

namespace {

Conv2dSpec front_spec(const AuxiliaryConfig& c) {
  Conv2dSpec s;
  s.in_channels = 2;
  s.out_channels = c.conv_channels;
  return s;
}

}  // namespace

AuxiliaryEncoder::AuxiliaryEncoder(const AuxiliaryConfig& config, Initializer& init)
    : config_(config),
      conv_(front_spec(config), init),
      conv_act_(config.conv_channels),
      flatten_(pointwise(config.conv_channels * config.bins, config.latent), init) {
  config.validate();
  add_child("conv", conv_);
  add_child("conv_act", conv_act_);
  add_child("flatten", flatten_);
  for (std::size_t i = 0; i < config.blocks; ++i) {
    blocks_.push_back(std::make_unique<AttentionBlock>(config, init));
    add_child("block" + std::to_string(i), *blocks_.back());
  }
}

Var AuxiliaryEncoder::forward(const Tensor& cspec, const Tensor& lossmap, StreamCache* cache) const {
  if (cspec.rank() != 4 || cspec.dim(1) != 2 || cspec.dim(3) != config_.bins) {
    throw ShapeError("auxiliary encoder input " + shape_str(cspec.shape()));
  }
  if (lossmap.shape() != Shape{cspec.dim(0), cspec.dim(2)}) {
    throw ShapeError("auxiliary encoder: loss map " + shape_str(lossmap.shape()));
  }
  Var h = flatten_.forward(fold_frequency(conv_act_.forward(conv_.forward(Var(cspec), cache))));
  for (const auto& b : blocks_) h = b->forward(h, lossmap, cache);
  return h;
}

}  // namespace plc::model
