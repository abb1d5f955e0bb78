#include "plc/semantic_encoder.hpp"

#include "plc/errors.hpp"

namespace plc::model {

std::size_t EncoderConfig::out_bins() const {
  std::size_t f = bins;
  for (std::size_t s : freq_strides) f = (f + 4 - kernel_f) / s + 1;
  return f;
}

void EncoderConfig::validate() const {
  if (channels.size() != freq_strides.size() || channels.empty()) {
    throw ShapeError("encoder: channel and stride lists must have equal, nonzero length");
  }
  if (kernel_f != 5) throw ShapeError("encoder: frequency padding assumes a kernel of 5 bins");
  if (channels.back() * out_bins() != latent) {
    throw ShapeError("encoder: " + std::to_string(channels.back()) + " channels x " + std::to_string(out_bins()) +
                     " bins does not fold to " + std::to_string(latent));
  }
}

std::size_t EncoderConfig::aggregator_receptive_field() const {
  std::size_t rf = 1;
  for (std::size_t b = 0; b < tcm_blocks; ++b) {
    for (std::size_t d : tcm_dilations) rf += (tcm_kernel - 1) * d;
  }
  return rf;
}

Tensor make_encoder_input(const Tensor& cspec, const Tensor& lossmap) {
  if (cspec.rank() != 4 || cspec.dim(1) != 2) throw ShapeError("encoder input must be (B, 2, T, F)");
  const std::size_t b = cspec.dim(0), t = cspec.dim(2), f = cspec.dim(3);
  if (lossmap.shape() != Shape{b, t}) {
    throw ShapeError("loss map " + shape_str(lossmap.shape()) + " does not match spectra " + shape_str(cspec.shape()));
  }
  Tensor out({b, 3, t, f});
  const std::size_t plane = t * f;
  for (std::size_t i = 0; i < b; ++i) {
    std::copy_n(cspec.data() + i * 2 * plane, 2 * plane, out.data() + i * 3 * plane);
    Real* m = out.data() + i * 3 * plane + 2 * plane;
    for (std::size_t j = 0; j < t; ++j) std::fill_n(m + j * f, f, lossmap[i * t + j]);
  }
  return out;
}

FeatureExtractor::FeatureExtractor(const EncoderConfig& config, Initializer& init) {
  config.validate();
  std::size_t in = 3;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    Conv2dSpec spec;
    spec.in_channels = in;
    spec.out_channels = config.channels[i];
    spec.kernel_t = config.kernel_t;
    spec.kernel_f = config.kernel_f;
    spec.stride_f = config.freq_strides[i];
    convs_.push_back(std::make_unique<CausalConv2d>(spec, init));
    acts_.push_back(std::make_unique<PReLU>(config.channels[i]));
    add_child("conv" + std::to_string(i), *convs_.back());
    add_child("act" + std::to_string(i), *acts_.back());
    in = config.channels[i];
  }
}

Var FeatureExtractor::forward(const Var& x, StreamCache* cache) const {
  Var h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) h = acts_[i]->forward(convs_[i]->forward(h, cache));
  return h;
}

namespace {

Conv1dSpec pointwise(std::size_t in, std::size_t out) {
  Conv1dSpec s;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

Conv1dSpec depthwise(std::size_t channels, std::size_t kernel, std::size_t dilation) {
  Conv1dSpec s;
  s.in_channels = channels;
  s.out_channels = channels;
  s.groups = channels;
  s.kernel = kernel;
  s.dilation = dilation;
  return s;
}

}  // namespace

TemporalConvModule::TemporalConvModule(std::size_t channels, std::size_t hidden, std::size_t kernel,
                                       std::size_t dilation, Initializer& init)
    : in_(pointwise(channels, hidden), init),
      act_in_(hidden),
      norm_in_(hidden),
      depthwise_(depthwise(hidden, kernel, dilation), init),
      act_mid_(hidden),
      norm_mid_(hidden),
      out_(pointwise(hidden, channels), init) {
  add_child("in", in_);
  add_child("act_in", act_in_);
  add_child("norm_in", norm_in_);
  add_child("depthwise", depthwise_);
  add_child("act_mid", act_mid_);
  add_child("norm_mid", norm_mid_);
  add_child("out", out_);
}

Var TemporalConvModule::forward(const Var& x, StreamCache* cache) const {
  Var h = norm_in_.forward(act_in_.forward(in_.forward(x)));
  h = norm_mid_.forward(act_mid_.forward(depthwise_.forward(h, cache)));
  return add(x, out_.forward(h));
}

ContextAggregator::ContextAggregator(const EncoderConfig& config, Initializer& init) {
  for (std::size_t b = 0; b < config.tcm_blocks; ++b) {
    for (std::size_t d : config.tcm_dilations) {
      modules_.push_back(
          std::make_unique<TemporalConvModule>(config.latent, config.tcm_hidden, config.tcm_kernel, d, init));
      add_child("tcm" + std::to_string(modules_.size() - 1), *modules_.back());
    }
  }
}

Var ContextAggregator::forward(const Var& x, StreamCache* cache) const {
  Var h = x;
  for (const auto& m : modules_) h = m->forward(h, cache);
  return h;
}

SemanticEncoder::SemanticEncoder(const EncoderConfig& config, Initializer& init)
    : config_(config), extractor_(config, init), aggregator_(config, init) {
  add_child("extractor", extractor_);
  add_child("aggregator", aggregator_);
}

Var SemanticEncoder::extract(const Tensor& input, StreamCache* cache) const {
  if (input.rank() != 4 || input.dim(1) != 3 || input.dim(3) != config_.bins) {
    throw ShapeError("semantic encoder input " + shape_str(input.shape()));
  }
  return fold_frequency(extractor_.forward(Var(input), cache));
}

Var SemanticEncoder::forward(const Tensor& cspec, const Tensor& lossmap, StreamCache* cache) const {
  return aggregator_.forward(extract(make_encoder_input(cspec, lossmap), cache), cache);
}

}  // namespace plc::model
