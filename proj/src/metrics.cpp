#include "plc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "plc/errors.hpp"
#include "plc/fft.hpp"
#include "plc/spectral.hpp"

namespace plc::metrics {

namespace fs = std::filesystem;

Tensor mel_cepstrum(std::span<const Real> samples, const McdConfig& cfg) {
  if (cfg.window == 0 || cfg.hop == 0 || cfg.fft_size < cfg.window || cfg.coefficients >= cfg.mels) {
    throw ParameterError("mcd: inconsistent analysis configuration");
  }
  if (samples.size() < cfg.window) {
    throw LengthError("mcd needs at least " + std::to_string(cfg.window) + " samples, got " +
                      std::to_string(samples.size()));
  }
  const std::size_t frames = 1 + (samples.size() - cfg.window) / cfg.hop;
  const std::size_t F = cfg.fft_size / 2 + 1, M = cfg.mels, C = cfg.coefficients;
  const std::vector<Real> window = spectral::hann_window(cfg.window);
  const Tensor fb = spectral::mel_filterbank(M, cfg.fft_size, audio::kSampleRate, cfg.fmin, cfg.fmax);

  std::vector<Real> dct(C * M);
  for (std::size_t k = 0; k < C; ++k)
    for (std::size_t m = 0; m < M; ++m)
      dct[k * M + m] = std::sqrt(2.0 / M) * std::cos(std::numbers::pi * double(k + 1) * (m + 0.5) / M);

  Tensor out({frames, C});
  std::vector<Real> frame(cfg.fft_size);
  std::vector<fft::Complex> bins(F);
  std::vector<Real> logmel(M);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (std::size_t i = 0; i < cfg.window; ++i) frame[i] = samples[t * cfg.hop + i] * window[i];
    fft::rfft(frame, bins);
    for (std::size_t m = 0; m < M; ++m) {
      double e = 0;
      for (std::size_t f = 0; f < F; ++f) e += fb[m * F + f] * std::norm(bins[f]);
      logmel[m] = std::log(std::max(e, cfg.power_floor));
    }
    for (std::size_t k = 0; k < C; ++k) {
      double c = 0;
      for (std::size_t m = 0; m < M; ++m) c += dct[k * M + m] * logmel[m];
      out[t * C + k] = c;
    }
  }
  return out;
}

double mcd(const audio::AudioClip& reference, const audio::AudioClip& degraded, const McdConfig& cfg) {
  if (reference.sample_rate != degraded.sample_rate) throw ParameterError("mcd: sample rates differ");
  const std::size_t n = std::min(reference.size(), degraded.size());
  const Tensor a = mel_cepstrum(std::span<const Real>(reference.samples).first(n), cfg);
  const Tensor b = mel_cepstrum(std::span<const Real>(degraded.samples).first(n), cfg);
  const std::size_t frames = a.dim(0), C = a.dim(1);
  const double k = 10.0 / std::numbers::ln10;
  double total = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    double d2 = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = a[t * C + c] - b[t * C + c];
      d2 += d * d;
    }
    total += k * std::sqrt(2 * d2);
  }
  return total / double(frames);
}

BurstCategory categorize_burst_ms(std::size_t ms) noexcept {
  if (ms <= 120) return BurstCategory::Short;
  if (ms <= 220) return BurstCategory::Medium;
  return BurstCategory::Long;
}

BurstCategory categorize_trace(const loss::PacketTrace& trace) noexcept {
  return categorize_burst_ms(loss::max_burst_ms(trace));
}

const char* category_label(BurstCategory c) noexcept {
  switch (c) {
    case BurstCategory::Short:
      return "[0,120]";
    case BurstCategory::Medium:
      return "(120,220]";
    case BurstCategory::Long:
      break;
  }
  return "(220,1000]";
}

BaselineMode parse_baseline(const std::string& name) {
  if (name == "zero") return BaselineMode::Zero;
  if (name == "repeat_last_packet") return BaselineMode::RepeatLastPacket;
  throw ParameterError("unknown baseline mode '" + name + "' (expected zero or repeat_last_packet)");
}

audio::AudioClip baseline_conceal(const audio::AudioClip& lossy, const loss::FrameLossMap& lossmap, BaselineMode mode) {
  if (lossmap.size() * audio::kHop < lossy.size()) throw ShapeError("baseline_conceal: loss map shorter than clip");
  if (mode == BaselineMode::Zero) return lossy;

  constexpr std::size_t P = loss::kPacketSamples;
  constexpr std::size_t kFade = 40;  // 2.5 ms
  audio::AudioClip out = lossy;
  auto& y = out.samples;
  const std::size_t n = y.size();
  const auto lost = [&](std::size_t i) { return lossmap.flags[i / audio::kHop] != 0; };
  std::size_t i = 0;
  while (i < n) {
    if (!lost(i)) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < n && lost(i)) ++i;
    const std::size_t end = i;
    // Source: the last 20 ms before the burst; silence if there is none.
    std::vector<Real> tile(P, 0.0);
    const std::size_t avail = std::min(start, P);
    for (std::size_t k = 0; k < avail; ++k) tile[P - avail + k] = y[start - avail + k];
    for (std::size_t k = start; k < end; ++k) y[k] = tile[(k - start) % P];
    for (std::size_t k = 0; k < kFade && end + k < n && !lost(end + k); ++k) {
      const double r = double(k + 1) / double(kFade + 1);
      const Real continued = tile[(end + k - start) % P];
      y[end + k] = (1 - r) * continued + r * y[end + k];
    }
  }
  return out;
}

std::vector<EvalAggregate> aggregate(const std::vector<EvalRow>& rows, const std::vector<std::string>& systems) {
  std::vector<EvalAggregate> out;
  const BurstCategory cats[] = {BurstCategory::Short, BurstCategory::Medium, BurstCategory::Long};
  for (const auto& sys : systems) {
    for (BurstCategory c : cats) {
      EvalAggregate a{sys, category_label(c), 0, 0};
      for (const auto& r : rows)
        if (r.system == sys && r.category == c) {
          ++a.count;
          a.mean_mcd_db += r.mcd_db;
        }
      if (a.count) a.mean_mcd_db /= double(a.count);
      out.push_back(a);
    }
    EvalAggregate all{sys, "overall", 0, 0};
    for (const auto& r : rows)
      if (r.system == sys) {
        ++all.count;
        all.mean_mcd_db += r.mcd_db;
      }
    if (all.count) all.mean_mcd_db /= double(all.count);
    out.push_back(all);
  }
  return out;
}

double EvalReport::overall(const std::string& system) const {
  for (const auto& a : aggregates)
    if (a.system == system && a.category == "overall") return a.mean_mcd_db;
  throw ParameterError("no aggregate for system '" + system + "'");
}

namespace {

std::ofstream open_csv(const fs::path& path, const char* header) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << header << '\n';
  out.precision(9);
  return out;
}

}  // namespace

void EvalReport::write_rows_csv(const fs::path& path) const {
  auto out = open_csv(path, kRowsHeader);
  for (const auto& r : rows) {
    out << r.system << ',' << r.utterance << ',' << r.max_burst_ms << ',' << category_label(r.category) << ','
        << r.mcd_db << '\n';
  }
}

void EvalReport::write_summary_csv(const fs::path& path) const {
  auto out = open_csv(path, kSummaryHeader);
  for (const auto& a : aggregates) out << a.system << ',' << a.category << ',' << a.count << ',' << a.mean_mcd_db << '\n';
}

EvalReport evaluate_corpus(const fs::path& reference_dir, const std::vector<System>& systems, const fs::path& traces_dir,
                           const fs::path& export_dir, const McdConfig& config) {
  if (!fs::is_directory(reference_dir)) throw ConfigError("reference directory " + reference_dir.string() + " not found");
  std::vector<fs::path> refs;
  for (const auto& e : fs::directory_iterator(reference_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") refs.push_back(e.path());
  std::sort(refs.begin(), refs.end());

  EvalReport report;
  for (const auto& ref_path : refs) {
    const std::string name = ref_path.stem().string();
    const fs::path trace_path = traces_dir / (name + ".txt");
    if (!fs::exists(trace_path)) {
      report.missing.push_back(name + ": no trace " + trace_path.string());
      continue;
    }
    audio::AudioClip ref;
    loss::PacketTrace trace;
    try {
      ref = audio::read_wav(ref_path);
      trace = loss::read_trace(trace_path);
    } catch (const Error& e) {
      report.missing.push_back(name + ": " + e.what());
      continue;
    }
    loss::LossyClip lossy;
    try {
      lossy = loss::apply_trace(ref, trace);
    } catch (const Error& e) {
      report.missing.push_back(name + ": " + e.what());
      continue;
    }
    // Only the packets that overlap the clip count towards its category.
    loss::PacketTrace used;
    used.flags.assign(trace.flags.begin(), trace.flags.begin() + std::ptrdiff_t(lossy.map.size() / loss::kFramesPerPacket));
    const std::size_t burst = loss::max_burst_ms(used);
    for (const auto& sys : systems) {
      audio::AudioClip out = sys.conceal(lossy, ref);
      if (!export_dir.empty()) {
        fs::create_directories(export_dir / sys.name);
        audio::write_wav(export_dir / sys.name / (name + ".wav"), out);
      }
      report.rows.push_back({sys.name, name, burst, categorize_burst_ms(burst), mcd(ref, out, config)});
    }
  }
  std::vector<std::string> names;
  for (const auto& s : systems) names.push_back(s.name);
  report.aggregates = aggregate(report.rows, names);
  return report;
}

}  // namespace plc::metrics
