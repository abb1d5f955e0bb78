#include "plc/discriminators.hpp"

#include "plc/errors.hpp"

namespace plc::model {

void DiscriminatorConfig::validate() const {
  if (period_channels.empty() || scale_channels.size() != 4) {
    throw ShapeError("discriminator: need period channels and exactly four scale widths");
  }
  for (std::size_t p : periods) {
    if (p < 1 || p >= kMinDiscriminatorLength) throw ParameterError("discriminator: period out of range");
  }
  if (scale_groups == 0 || scale_channels[0] % scale_groups || scale_channels[1] % scale_groups ||
      scale_channels[2] % scale_groups) {
    throw ShapeError("discriminator: scale groups must divide the grouped layer widths");
  }
}

namespace {

Conv1dSpec layer(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t groups = 1) {
  Conv1dSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = stride;
  s.groups = groups;
  s.causal = false;
  s.pad_left = s.pad_right = kernel / 2;
  return s;
}

std::vector<Conv1dSpec> period_layers(const DiscriminatorConfig& c) {
  std::vector<Conv1dSpec> out;
  std::size_t in = 1;
  for (std::size_t ch : c.period_channels) {
    out.push_back(layer(in, ch, 5, 3));
    in = ch;
  }
  out.push_back(layer(in, in, 5, 1));
  return out;
}

std::vector<Conv1dSpec> scale_layers(const DiscriminatorConfig& c) {
  const auto& ch = c.scale_channels;
  return {layer(1, ch[0], 15, 1), layer(ch[0], ch[1], 41, 4, c.scale_groups),
          layer(ch[1], ch[2], 41, 4, c.scale_groups), layer(ch[2], ch[3], 5, 1)};
}

}  // namespace

ConvStack::ConvStack(const std::vector<Conv1dSpec>& layers, const Conv1dSpec& post, double slope, Initializer& init)
    : slope_(slope) {
  for (const auto& spec : layers) {
    layers_.push_back(std::make_unique<Conv1d>(spec, init));
    add_child("conv" + std::to_string(layers_.size() - 1), *layers_.back());
  }
  post_ = std::make_unique<Conv1d>(post, init);
  add_child("post", *post_);
}

Var ConvStack::forward(const Var& x, std::vector<Var>& features) const {
  Var h = x;
  for (const auto& l : layers_) {
    h = leaky_relu(l->forward(h), slope_);
    features.push_back(h);
  }
  h = post_->forward(h);
  features.push_back(h);
  return h;
}

PeriodDiscriminator::PeriodDiscriminator(std::size_t period, const DiscriminatorConfig& config, Initializer& init)
    : period_(period),
      stack_(period_layers(config), layer(config.period_channels.back(), 1, 3, 1), config.slope, init) {
  add_child("stack", stack_);
}

Var PeriodDiscriminator::forward(const Var& wave, std::vector<Var>& features) const {
  return stack_.forward(period_fold(wave, period_), features);
}

ScaleDiscriminator::ScaleDiscriminator(const DiscriminatorConfig& config, Initializer& init)
    : stack_(scale_layers(config), layer(config.scale_channels[3], 1, 3, 1), config.slope, init) {
  add_child("stack", stack_);
}

Discriminators::Discriminators(const DiscriminatorConfig& config, Initializer& init) {
  config.validate();
  for (std::size_t p : config.periods) {
    periods_.push_back(std::make_unique<PeriodDiscriminator>(p, config, init));
    add_child("period" + std::to_string(p), *periods_.back());
  }
  for (std::size_t s = 0; s < config.scales; ++s) {
    scales_.push_back(std::make_unique<ScaleDiscriminator>(config, init));
    add_child("scale" + std::to_string(s), *scales_.back());
  }
}

DiscriminatorOutput Discriminators::forward(const Var& wave) const {
  if (wave.shape().size() != 3 || wave.dim(1) != 1) throw ShapeError("discriminators expect (B, 1, L)");
  if (wave.dim(2) < kMinDiscriminatorLength) {
    throw LengthError("discriminators need at least " + std::to_string(kMinDiscriminatorLength) + " samples, got " +
                      std::to_string(wave.dim(2)));
  }
  DiscriminatorOutput out;
  for (const auto& d : periods_) {
    out.features.emplace_back();
    out.scores.push_back(d->forward(wave, out.features.back()));
  }
  Var x = wave;
  for (std::size_t s = 0; s < scales_.size(); ++s) {
    if (s > 0) x = avg_pool1d(x, 4, 2, 2);
    out.features.emplace_back();
    out.scores.push_back(scales_[s]->forward(x, out.features.back()));
  }
  return out;
}

}  // namespace plc::model
