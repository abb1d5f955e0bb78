#pragma once

// Frame-wise fusion of the two branches and a causal HiFi-GAN-style
// generator that upsamples the fused features 160x to 16 kHz samples.

#include <memory>
#include <vector>

#include "plc/nn.hpp"

namespace plc::model {

struct VocoderConfig {
  std::size_t latent = 240;
  /// Width after the input conv; every upsampling stage halves it (floor 1).
  std::size_t hidden = 64;
  std::vector<std::size_t> upsample_rates{8, 5, 2, 2};
  std::vector<std::size_t> upsample_kernels{16, 10, 4, 4};
  std::vector<std::size_t> resblock_kernels{3, 7, 11};
  /// Dilation pairs (d1, d2) applied in sequence inside every residual block.
  std::vector<std::pair<std::size_t, std::size_t>> resblock_dilations{{1, 1}, {3, 1}};
  std::size_t pre_kernel = 7;
  std::size_t post_kernel = 7;
  double slope = 0.1;

  /// Product of the upsample rates (160 by default).
  std::size_t hop() const;
  void validate() const;
};

/// Concatenates X^S and X^A (B, 240, T) each and applies two per-frame
/// linear layers with a PReLU in between.
class Fusion : public Module {
 public:
  Fusion(std::size_t latent, Initializer& init);
  Var forward(const Var& semantic, const Var& auxiliary) const;

 private:
  Conv1d first_;
  PReLU act_;
  Conv1d second_;
};

class ResidualBlock : public Module {
 public:
  ResidualBlock(std::size_t channels, std::size_t kernel, const std::vector<std::pair<std::size_t, std::size_t>>& dilations,
                double slope, Initializer& init);
  Var forward(const Var& x, StreamCache* cache) const;

 private:
  double slope_;
  std::vector<std::unique_ptr<Conv1d>> first_;
  std::vector<std::unique_ptr<Conv1d>> second_;
};

class Generator : public Module {
 public:
  Generator(const VocoderConfig& config, Initializer& init);
  /// (B, latent, T) -> (B, 1, hop * T), values in [-1, 1].
  Var forward(const Var& features, StreamCache* cache = nullptr) const;
  const VocoderConfig& config() const noexcept { return config_; }

 private:
  VocoderConfig config_;
  std::unique_ptr<Conv1d> pre_;
  std::vector<std::unique_ptr<Conv1d>> ups_;
  std::vector<std::vector<std::unique_ptr<ResidualBlock>>> mrf_;
  std::unique_ptr<Conv1d> post_;
};

}  // namespace plc::model
