#pragma once

// Mel cepstral distortion, burst-length categories and simple baseline
// concealers for corpus-level comparison.

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "plc/audio.hpp"
#include "plc/loss_sim.hpp"

namespace plc::metrics {

struct McdConfig {
  std::size_t window = 400;  // 25 ms
  std::size_t hop = 160;     // 10 ms
  std::size_t fft_size = 512;
  std::size_t mels = 40;
  double fmin = 0;
  double fmax = 8000;
  /// Cepstral coefficients c1..c_n; c0 is excluded.
  std::size_t coefficients = 13;
  /// Floor on mel-band power before the logarithm.
  double power_floor = 1e-10;
};

/// (frames, coefficients) mel cepstra c1..c_n of a 16 kHz signal; throws
/// LengthError below one window.
Tensor mel_cepstrum(std::span<const Real> samples, const McdConfig& config = {});

/// Mean over frames of (10 / ln 10) sqrt(2 sum_i (c_i - c'_i)^2), in dB.
/// The longer clip is truncated to the shorter one.
double mcd(const audio::AudioClip& reference, const audio::AudioClip& degraded, const McdConfig& config = {});

enum class BurstCategory { Short, Medium, Long };

/// [0, 120], (120, 220] and everything above 220 ms (bursts beyond 1000 ms
/// land in the last bucket).
BurstCategory categorize_burst_ms(std::size_t max_burst_ms) noexcept;
BurstCategory categorize_trace(const loss::PacketTrace& trace) noexcept;
const char* category_label(BurstCategory c) noexcept;

enum class BaselineMode { Zero, RepeatLastPacket };
/// "zero" or "repeat_last_packet"; anything else is a ParameterError.
BaselineMode parse_baseline(const std::string& name);

/// Zero mode returns the (already zero-filled) input. Repeat mode tiles the
/// last received 20 ms across every burst and crossfades linearly over
/// 2.5 ms back into the received audio after the burst.
audio::AudioClip baseline_conceal(const audio::AudioClip& lossy, const loss::FrameLossMap& lossmap, BaselineMode mode);

/// Produces the concealed clip for one utterance. The clean reference is
/// available for oracle systems such as passthrough.
using Concealer = std::function<audio::AudioClip(const loss::LossyClip& lossy, const audio::AudioClip& reference)>;

struct System {
  std::string name;
  Concealer conceal;
};

struct EvalRow {
  std::string system;
  std::string utterance;
  std::size_t max_burst_ms = 0;
  BurstCategory category = BurstCategory::Short;
  double mcd_db = 0;
};

struct EvalAggregate {
  std::string system;
  std::string category;  // a bucket label or "overall"
  std::size_t count = 0;
  double mean_mcd_db = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<EvalAggregate> aggregates;
  /// Utterances without a matching trace or with unreadable inputs.
  std::vector<std::string> missing;

  /// system,utterance,max_burst_ms,category,mcd_db
  void write_rows_csv(const std::filesystem::path& path) const;
  /// system,category,count,mean_mcd_db
  void write_summary_csv(const std::filesystem::path& path) const;
  double overall(const std::string& system) const;
};

inline constexpr const char* kRowsHeader = "system,utterance,max_burst_ms,category,mcd_db";
inline constexpr const char* kSummaryHeader = "system,category,count,mean_mcd_db";

/// Builds aggregates (per category and overall, per system) from rows.
std::vector<EvalAggregate> aggregate(const std::vector<EvalRow>& rows, const std::vector<std::string>& systems);

/// Evaluates every <name>.wav in `reference_dir` against the trace
/// <name>.txt in `traces_dir`. When `export_dir` is non-empty the concealed
/// audio is written to <export_dir>/<system>/<name>.wav.
EvalReport evaluate_corpus(const std::filesystem::path& reference_dir, const std::vector<System>& systems,
                           const std::filesystem::path& traces_dir, const std::filesystem::path& export_dir = {},
                           const McdConfig& config = {});

}  // namespace plc::metrics
