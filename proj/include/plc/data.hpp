#pragma once

// Training corpora and the batch sampler that crops segments and applies
// freshly simulated loss traces.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "plc/audio.hpp"
#include "plc/config.hpp"

namespace plc::train {

struct Corpus {
  std::vector<std::string> names;
  std::vector<audio::AudioClip> clips;

  std::size_t size() const noexcept { return clips.size(); }
  bool empty() const noexcept { return clips.empty(); }
};

/// Every *.wav in `dir`, sorted by file name. Throws ConfigError when the
/// directory is missing or holds no clips.
Corpus load_corpus(const std::filesystem::path& dir);

/// A deterministic speech-like test signal: voiced syllables with a moving
/// pitch and formants, noisy fricatives and short pauses.
audio::AudioClip synth_utterance(double seconds, std::uint64_t seed);

/// Writes `count` synthetic utterances named utt_000.wav, utt_001.wav, ...
Corpus make_synthetic_corpus(std::size_t count, double seconds, std::uint64_t seed);
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

struct Batch {
  Tensor clean;    // (B, 1, L)
  Tensor lossy;    // (B, 1, L), lost packets zeroed
  Tensor lossmap;  // (B, L / 160)
  std::vector<loss::PacketTrace> traces;
};

/// Draws clips uniformly with replacement, crops a random whole-packet
/// segment (zero-padding short clips) and simulates a random-burst trace
/// whose rate is uniform in [loss_rate_min, loss_rate_max]. Deterministic
/// for a given seed.
class BatchSampler {
 public:
  BatchSampler(const Corpus& corpus, const DataConfig& config, std::size_t batch_size, std::uint64_t seed);
  Batch next();

 private:
  const Corpus& corpus_;
  DataConfig config_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
};

}  // namespace plc::train
