#pragma once

// Packet-loss traces: generation (bounded-burst random and three-state
// Markov), the one-flag-per-line file format, and application to audio.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "plc/audio.hpp"

namespace plc::loss {

inline constexpr std::size_t kPacketMs = 20;
inline constexpr std::size_t kFrameMs = 10;
inline constexpr std::size_t kPacketSamples = 320;
inline constexpr std::size_t kFramesPerPacket = 2;
/// 220 ms at 20 ms per packet.
inline constexpr std::size_t kDefaultMaxBurstPackets = 11;

/// One flag per 20 ms packet: 0 received, 1 lost.
struct PacketTrace {
  std::vector<std::uint8_t> flags;

  std::size_t size() const noexcept { return flags.size(); }
  double loss_rate() const noexcept;
  friend bool operator==(const PacketTrace&, const PacketTrace&) = default;
};

/// One flag per 10 ms frame.
struct FrameLossMap {
  std::vector<std::uint8_t> flags;

  std::size_t size() const noexcept { return flags.size(); }
  friend bool operator==(const FrameLossMap&, const FrameLossMap&) = default;
};

enum class MarkovState : std::uint8_t { Good = 0, Lossy = 1, Burst = 2 };

struct MarkovModel {
  std::array<std::array<double, 3>, 3> transition{};
  std::array<double, 3> loss_prob{};
  MarkovState initial = MarkovState::Good;

  /// Throws ParameterError unless rows are stochastic and probabilities valid.
  void validate() const;
  /// The bundled WLAN-like preset.
  static MarkovModel wlan();
};

/// Alternating runs: receive runs are geometric, loss runs are truncated
/// geometric on [1, max_burst_packets]; run parameters are chosen so the
/// expected loss rate equals target_rate. Rates above the largest value the
/// burst cap allows, max/(max+1), are clamped to it.
PacketTrace gen_random_trace(std::size_t num_packets, double target_rate,
                             std::size_t max_burst_packets = kDefaultMaxBurstPackets, std::uint64_t seed = 0);

PacketTrace gen_markov_trace(std::size_t num_packets, const MarkovModel& model, std::uint64_t seed = 0);

PacketTrace parse_trace(std::string_view text);
std::string format_trace(const PacketTrace& trace);
PacketTrace read_trace(const std::filesystem::path& path);
void write_trace(const std::filesystem::path& path, const PacketTrace& trace);

FrameLossMap expand_to_frames(const PacketTrace& trace);

/// Frame flags for exactly `frames` 10 ms frames; frames past the trace count
/// as received.
FrameLossMap frame_flags(const PacketTrace& trace, std::size_t frames);

struct LossyClip {
  audio::AudioClip audio;
  FrameLossMap map;
};

/// Zeroes every sample inside a lost packet. The map covers the
/// ceil(len/320) packets that overlap the clip.
LossyClip apply_trace(const audio::AudioClip& clip, const PacketTrace& trace);

/// Length of the longest run of ones.
std::size_t longest_run(const std::vector<std::uint8_t>& flags) noexcept;
std::size_t max_burst_ms(const PacketTrace& trace) noexcept;

}  // namespace plc::loss
