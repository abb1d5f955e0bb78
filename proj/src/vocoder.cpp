#include "plc/vocoder.hpp"

#include <algorithm>

#include "plc/errors.hpp"

namespace plc::model {

std::size_t VocoderConfig::hop() const {
  std::size_t h = 1;
  for (std::size_t r : upsample_rates) h *= r;
  return h;
}

void VocoderConfig::validate() const {
  if (upsample_rates.size() != upsample_kernels.size() || upsample_rates.empty()) {
    throw ShapeError("vocoder: upsample rates and kernels must pair up");
  }
  if (hidden == 0) throw ShapeError("vocoder: hidden width must be positive");
  for (std::size_t k : resblock_kernels) {
    if (k == 0) throw ShapeError("vocoder: zero residual kernel");
  }
  if (resblock_kernels.empty()) throw ShapeError("vocoder: need at least one residual block kernel");
}

namespace {

Conv1dSpec causal(std::size_t in, std::size_t out, std::size_t kernel, std::size_t dilation = 1) {
  Conv1dSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.dilation = dilation;
  return s;
}

}  // namespace

Fusion::Fusion(std::size_t latent, Initializer& init)
    : first_(causal(2 * latent, latent, 1), init), act_(latent), second_(causal(latent, latent, 1), init) {
  add_child("first", first_);
  add_child("act", act_);
  add_child("second", second_);
}

Var Fusion::forward(const Var& semantic, const Var& auxiliary) const {
  if (semantic.shape() != auxiliary.shape()) {
    throw ShapeError("fusion: " + shape_str(semantic.shape()) + " vs " + shape_str(auxiliary.shape()));
  }
  return second_.forward(act_.forward(first_.forward(concat({semantic, auxiliary}, 1))));
}

ResidualBlock::ResidualBlock(std::size_t channels, std::size_t kernel,
                             const std::vector<std::pair<std::size_t, std::size_t>>& dilations, double slope,
                             Initializer& init)
    : slope_(slope) {
  for (const auto& [d1, d2] : dilations) {
    first_.push_back(std::make_unique<Conv1d>(causal(channels, channels, kernel, d1), init));
    second_.push_back(std::make_unique<Conv1d>(causal(channels, channels, kernel, d2), init));
    add_child("first" + std::to_string(first_.size() - 1), *first_.back());
    add_child("second" + std::to_string(second_.size() - 1), *second_.back());
  }
}

Var ResidualBlock::forward(const Var& x, StreamCache* cache) const {
  Var h = x;
  for (std::size_t i = 0; i < first_.size(); ++i) {
    Var y = first_[i]->forward(leaky_relu(h, slope_), cache);
    y = second_[i]->forward(leaky_relu(y, slope_), cache);
    h = add(h, y);
  }
  return h;
}

Generator::Generator(const VocoderConfig& config, Initializer& init) : config_(config) {
  config.validate();
  pre_ = std::make_unique<Conv1d>(causal(config.latent, config.hidden, config.pre_kernel), init);
  add_child("pre", *pre_);
  std::size_t channels = config.hidden;
  for (std::size_t i = 0; i < config.upsample_rates.size(); ++i) {
    const std::size_t out = std::max<std::size_t>(1, channels / 2);
    ups_.push_back(std::make_unique<Conv1d>(causal(channels, out, config.upsample_kernels[i]), init));
    add_child("up" + std::to_string(i), *ups_.back());
    mrf_.emplace_back();
    for (std::size_t j = 0; j < config.resblock_kernels.size(); ++j) {
      mrf_.back().push_back(std::make_unique<ResidualBlock>(out, config.resblock_kernels[j], config.resblock_dilations,
                                                            config.slope, init));
      add_child("mrf" + std::to_string(i) + "_" + std::to_string(j), *mrf_.back().back());
    }
    channels = out;
  }
  post_ = std::make_unique<Conv1d>(causal(channels, 1, config.post_kernel), init);
  add_child("post", *post_);
}

Var Generator::forward(const Var& features, StreamCache* cache) const {
  if (features.shape().size() != 3 || features.dim(1) != config_.latent) {
    throw ShapeError("generator input " + shape_str(features.shape()));
  }
  Var h = pre_->forward(features, cache);
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    h = upsample_nearest(leaky_relu(h, config_.slope), config_.upsample_rates[i]);
    h = ups_[i]->forward(h, cache);
    Var acc;
    for (const auto& block : mrf_[i]) {
      const Var y = block->forward(h, cache);
      acc = acc.defined() ? add(acc, y) : y;
    }
    h = scale(acc, 1.0 / static_cast<Real>(mrf_[i].size()));
  }
  return tanh(post_->forward(leaky_relu(h, 0.01), cache));
}

}  // namespace plc::model
