#pragma once

// Smoothstep fade-out/fade-in for long bursts, and packet-by-packet
// streaming inference that reproduces the offline pass.

#include <cstdint>
#include <span>
#include <vector>

#include "plc/audio.hpp"
#include "plc/loss_sim.hpp"
#include "plc/model.hpp"

namespace plc::post {

struct FadePolicy {
  /// Synthesized audio is kept for this long into a burst; only bursts that
  /// exceed it are faded. Honoured at frame resolution (multiples of 10 ms).
  double conceal_limit_ms = 140;
  double fade_out_ms = 20;
  double fade_in_ms = 10;

  void validate() const;
  std::size_t keep_samples() const;
  std::size_t fade_out_samples() const;
  std::size_t fade_in_samples() const;
};

/// 3t^2 - 2t^3 with t clamped to [0, 1].
double smoothstep(double t) noexcept;

/// Causal per-sample gain generator shared by the offline and streaming
/// paths. Feed frames in order; each call scales one 160-sample frame.
class FadeTracker {
 public:
  explicit FadeTracker(const FadePolicy& policy);
  void process(bool lost, std::span<Real> frame);
  /// Gain of the next sample, advancing the state.
  double next_gain(bool lost);
  void reset();

 private:
  double fade_out(std::size_t run) const;

  std::size_t keep_, out_, in_;
  std::size_t run_ = 0;        // samples into the current burst
  bool in_burst_ = false;
  bool faded_ = false;         // the last burst reached its fade-out
  std::size_t burst_len_ = 0;  // length of that burst in samples
  std::size_t since_end_ = 0;  // received samples since it ended
};

/// Applies the fade envelope to `wave` (160 samples per lossmap frame).
std::vector<Real> apply_fade(std::span<const Real> wave, const loss::FrameLossMap& lossmap, const FadePolicy& policy);

/// Offline concealment of a zero-filled clip: pads to whole packets, runs
/// the model once, optionally fades, and trims back to the clip length.
audio::AudioClip conceal(const model::ConcealmentModel& model, const loss::LossyClip& lossy, const FadePolicy& policy,
                         bool fade = true);

inline constexpr std::size_t kPacketBytes = 2 * loss::kPacketSamples;

/// One causal stream. push_packet returns the 320 concealed samples of the
/// packet just pushed: beyond the one-hop framing lookahead inherent to the
/// window (absorbed inside the packet), no extra packet of delay is added.
class StreamSession {
 public:
  StreamSession(const model::ConcealmentModel& model, const FadePolicy& policy, bool fade = true);

  /// Packets must arrive with consecutive sequence numbers (the first one
  /// sets the origin). A received packet carries 640 bytes of PCM16 LE; a
  /// lost one carries none.
  std::vector<Real> push_packet(std::uint64_t seq, std::span<const std::uint8_t> payload, bool lost);
  /// Same with decoded samples (320 values, ignored when lost).
  std::vector<Real> push_samples(std::uint64_t seq, std::span<const Real> samples, bool lost);
  void reset();

  static constexpr std::size_t latency_packets() noexcept { return 0; }
  std::uint64_t packets_pushed() const noexcept { return pushed_; }

 private:
  const model::ConcealmentModel& model_;
  FadeTracker fade_;
  bool apply_fade_;
  StreamCache cache_;
  bool started_ = false;
  std::uint64_t next_seq_ = 0;
  std::uint64_t pushed_ = 0;
};

}  // namespace plc::post
