#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "plc/errors.hpp"
#include "plc/metrics.hpp"
#include "plc/spectral.hpp"

using namespace plc;
using namespace plc::metrics;
namespace fs = std::filesystem;

namespace {

audio::AudioClip noise_clip(std::size_t n, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, scale);
  audio::AudioClip c;
  c.samples.resize(n);
  for (auto& v : c.samples) v = d(rng);
  return c;
}

audio::AudioClip tone_clip(std::size_t n, double hz, double amp = 0.4) {
  audio::AudioClip c;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = amp * std::sin(2 * std::numbers::pi * hz * double(i) / 16000.0);
  return c;
}

// Direct transcription of the cepstrum recipe: Hann window, O(N^2) DFT,
// power mel bands, natural log, orthonormal DCT-II over c1..cn.
std::vector<std::vector<double>> naive_cepstrum(const std::vector<Real>& x, const McdConfig& cfg) {
  const std::size_t F = cfg.fft_size / 2 + 1;
  const Tensor fb = spectral::mel_filterbank(cfg.mels, cfg.fft_size, 16000, cfg.fmin, cfg.fmax);
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start + cfg.window <= x.size(); start += cfg.hop) {
    std::vector<double> power(F);
    for (std::size_t f = 0; f < F; ++f) {
      std::complex<double> acc = 0;
      for (std::size_t i = 0; i < cfg.window; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * double(i) / double(cfg.window));
        acc += w * x[start + i] * std::polar(1.0, -2 * std::numbers::pi * double(f * i) / double(cfg.fft_size));
      }
      power[f] = std::norm(acc);
    }
    std::vector<double> logmel(cfg.mels);
    for (std::size_t m = 0; m < cfg.mels; ++m) {
      double e = 0;
      for (std::size_t f = 0; f < F; ++f) e += fb[m * F + f] * power[f];
      logmel[m] = std::log(std::max(e, cfg.power_floor));
    }
    std::vector<double> c(cfg.coefficients);
    for (std::size_t k = 1; k <= cfg.coefficients; ++k) {
      double s = 0;
      for (std::size_t m = 0; m < cfg.mels; ++m)
        s += logmel[m] * std::cos(std::numbers::pi * double(k) * (double(m) + 0.5) / double(cfg.mels));
      c[k - 1] = s * std::sqrt(2.0 / double(cfg.mels));
    }
    out.push_back(c);
  }
  return out;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("plc_metrics_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

TEST_CASE("mel cepstrum matches a direct DFT evaluation") {
  const McdConfig cfg;
  const auto clip = noise_clip(2000, 3);
  const Tensor got = mel_cepstrum(clip.samples, cfg);
  const auto want = naive_cepstrum(clip.samples, cfg);
  REQUIRE(got.dim(0) == want.size());
  REQUIRE(got.dim(1) == 13);
  CHECK(want.size() == 1 + (2000 - 400) / 160);
  for (std::size_t t = 0; t < want.size(); ++t)
    for (std::size_t k = 0; k < 13; ++k) CHECK(got[t * 13 + k] == doctest::Approx(want[t][k]).epsilon(1e-9));
}

TEST_CASE("mcd is zero on identical audio, symmetric and positive otherwise") {
  const auto a = noise_clip(8000, 1);
  const auto b = tone_clip(8000, 440);
  CHECK(mcd(a, a) == 0.0);
  CHECK(mcd(a, b) > 1.0);
  CHECK(mcd(a, b) == doctest::Approx(mcd(b, a)).epsilon(1e-12));
}

TEST_CASE("mcd ignores a global gain because c0 is excluded") {
  const auto a = noise_clip(8000, 2);
  audio::AudioClip b = a;
  for (auto& v : b.samples) v *= 0.25;
  CHECK(mcd(a, b) < 1e-9);
}

TEST_CASE("mcd truncates to the shorter clip") {
  const auto a = noise_clip(8000, 4);
  audio::AudioClip b = a;
  b.samples.resize(5000);
  CHECK(mcd(a, b) == 0.0);
}

TEST_CASE("mcd rejects clips shorter than one window") {
  const auto a = noise_clip(399, 5);
  CHECK_THROWS_AS(mcd(a, a), LengthError);
  CHECK_NOTHROW(mcd(noise_clip(400, 5), noise_clip(400, 6)));
}

TEST_CASE("burst categories use closed right edges") {
  CHECK(categorize_burst_ms(0) == BurstCategory::Short);
  CHECK(categorize_burst_ms(100) == BurstCategory::Short);
  CHECK(categorize_burst_ms(120) == BurstCategory::Short);
  CHECK(categorize_burst_ms(140) == BurstCategory::Medium);
  CHECK(categorize_burst_ms(220) == BurstCategory::Medium);
  CHECK(categorize_burst_ms(240) == BurstCategory::Long);
  CHECK(categorize_burst_ms(1500) == BurstCategory::Long);
  CHECK(std::string(category_label(BurstCategory::Short)) == "[0,120]");
  CHECK(std::string(category_label(BurstCategory::Medium)) == "(120,220]");
  CHECK(std::string(category_label(BurstCategory::Long)) == "(220,1000]");

  loss::PacketTrace t;
  t.flags = {0, 1, 1, 1, 1, 1, 1, 1, 0, 1, 0};  // 7 packets = 140 ms
  CHECK(categorize_trace(t) == BurstCategory::Medium);
}

TEST_CASE("baseline modes") {
  CHECK(parse_baseline("zero") == BaselineMode::Zero);
  CHECK(parse_baseline("repeat_last_packet") == BaselineMode::RepeatLastPacket);
  CHECK_THROWS_AS(parse_baseline("oracle"), ParameterError);

  const auto clean = tone_clip(16000, 200);  // period 80 samples divides 320
  loss::PacketTrace trace;
  trace.flags.assign(50, 0);
  for (std::size_t p = 20; p < 25; ++p) trace.flags[p] = 1;
  const auto lossy = loss::apply_trace(clean, trace);

  SUBCASE("zero mode is the identity") {
    const auto out = baseline_conceal(lossy.audio, lossy.map, BaselineMode::Zero);
    CHECK(out.samples == lossy.audio.samples);
  }
  SUBCASE("repeat mode continues a periodic signal") {
    const auto out = baseline_conceal(lossy.audio, lossy.map, BaselineMode::RepeatLastPacket);
    double num = 0, ea = 0, eb = 0;
    for (std::size_t i = 20 * 320; i < 25 * 320; ++i) {
      num += out.samples[i] * clean.samples[i];
      ea += out.samples[i] * out.samples[i];
      eb += clean.samples[i] * clean.samples[i];
    }
    CHECK(num / std::sqrt(ea * eb) > 0.9);
    for (std::size_t i = 0; i < 20 * 320; ++i) REQUIRE(out.samples[i] == lossy.audio.samples[i]);
    for (std::size_t i = 25 * 320 + 40; i < out.size(); ++i) REQUIRE(out.samples[i] == lossy.audio.samples[i]);
    CHECK(mcd(clean, out) < mcd(clean, lossy.audio));
  }
  SUBCASE("repeat mode leaves a loss-free clip untouched") {
    loss::PacketTrace none;
    none.flags.assign(50, 0);
    const auto l2 = loss::apply_trace(clean, none);
    CHECK(baseline_conceal(l2.audio, l2.map, BaselineMode::RepeatLastPacket).samples == clean.samples);
  }
}

TEST_CASE("corpus evaluation pairs audio with traces and writes reports") {
  TempDir tmp("eval");
  const fs::path refs = tmp.path / "refs", traces = tmp.path / "traces", exported = tmp.path / "export";
  fs::create_directories(refs);
  fs::create_directories(traces);
  for (int i = 0; i < 3; ++i) {
    const std::string name = "utt" + std::to_string(i);
    audio::write_wav(refs / (name + ".wav"), tone_clip(16000, 150 + 100 * i, 0.3));
    if (i == 2) continue;  // no trace for the last one
    loss::PacketTrace t;
    t.flags.assign(60, 0);  // longer than the clip: only the first 50 packets count
    for (std::size_t p = 10; p < 10 + 3 * (i + 1); ++p) t.flags[p] = 1;
    for (std::size_t p = 52; p < 60; ++p) t.flags[p] = 1;
    loss::write_trace(traces / (name + ".txt"), t);
  }

  const std::vector<System> systems = {
      {"passthrough", [](const loss::LossyClip&, const audio::AudioClip& ref) { return ref; }},
      {"zero", [](const loss::LossyClip& l, const audio::AudioClip&) { return l.audio; }},
  };
  const EvalReport report = evaluate_corpus(refs, systems, traces, exported);
  REQUIRE(report.rows.size() == 4);
  REQUIRE(report.missing.size() == 1);
  CHECK(report.missing[0].rfind("utt2", 0) == 0);

  CHECK(report.rows[0].utterance == "utt0");
  CHECK(report.rows[0].max_burst_ms == 60);
  CHECK(report.rows[2].max_burst_ms == 120);
  CHECK(report.rows[2].category == BurstCategory::Short);
  CHECK(report.overall("passthrough") == 0.0);
  CHECK(report.overall("zero") > 0.0);
  CHECK_THROWS_AS(report.overall("nope"), ParameterError);

  std::size_t aggregates_for_zero = 0;
  for (const auto& a : report.aggregates)
    if (a.system == "zero") ++aggregates_for_zero;
  CHECK(aggregates_for_zero == 4);

  report.write_rows_csv(tmp.path / "rows.csv");
  report.write_summary_csv(tmp.path / "summary.csv");
  CHECK(first_line(tmp.path / "rows.csv") == "system,utterance,max_burst_ms,category,mcd_db");
  CHECK(first_line(tmp.path / "summary.csv") == "system,category,count,mean_mcd_db");

  for (const char* sys : {"passthrough", "zero"}) {
    CHECK(fs::exists(exported / sys / "utt0.wav"));
    CHECK(fs::exists(exported / sys / "utt1.wav"));
    CHECK_FALSE(fs::exists(exported / sys / "utt2.wav"));
  }
  const auto back = audio::read_wav(exported / "zero" / "utt1.wav");
  CHECK(back.size() == 16000);
}

TEST_CASE("corpus evaluation requires the reference directory") {
  CHECK_THROWS_AS(evaluate_corpus("/nonexistent/plc/refs", {}, "/nonexistent"), ConfigError);
}
