#include "plc/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "plc/errors.hpp"
#include "plc/loss_sim.hpp"

namespace plc::train {

namespace fs = std::filesystem;

Corpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("corpus directory " + dir.string() + " not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("corpus directory " + dir.string() + " holds no .wav files");
  Corpus c;
  for (const auto& f : files) {
    c.names.push_back(f.stem().string());
    c.clips.push_back(audio::read_wav(f));
  }
  return c;
}

namespace {

struct Vowel {
  double f1, f2, f3;
};

constexpr Vowel kVowels[] = {{730, 1090, 2440}, {270, 2290, 3010}, {300, 870, 2240},
                             {530, 1840, 2480}, {570, 840, 2410},  {660, 1720, 2410}};

// Magnitude of a cascade of three second-order resonances at frequency f.
double formant_gain(double f, const Vowel& v) {
  double g = 1;
  for (double fc : {v.f1, v.f2, v.f3}) {
    const double bw = 60 + 0.06 * fc;
    const double x = (f - fc) / (bw / 2);
    g *= 1 / std::sqrt(1 + x * x);
  }
  return g;
}

constexpr double kNoiseFloor = 5e-4;

}  // namespace

audio::AudioClip synth_utterance(double seconds, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(seconds * audio::kSampleRate);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> gauss(0, 1);
  std::vector<Real> y(n, 0.0);
  const double base_f0 = 100 + 120 * u(rng);
  constexpr double kSr = audio::kSampleRate;

  std::size_t pos = static_cast<std::size_t>((0.02 + 0.05 * u(rng)) * kSr);
  double phase = 0;
  while (pos < n) {
    const double r = u(rng);
    const std::size_t len = static_cast<std::size_t>((0.12 + 0.2 * u(rng)) * kSr);
    const std::size_t end = std::min(n, pos + len);
    if (r < 0.75) {
      // Voiced: pitch glide and a formant transition between two vowels.
      const Vowel& a = kVowels[rng() % std::size(kVowels)];
      const Vowel& b = kVowels[rng() % std::size(kVowels)];
      const double f0a = base_f0 * (0.85 + 0.3 * u(rng)), f0b = base_f0 * (0.85 + 0.3 * u(rng));
      const double amp = 0.3 + 0.4 * u(rng);
      std::vector<double> gains;
      for (std::size_t i = pos; i < end; ++i) {
        const double s = double(i - pos) / double(end - pos);
        const double f0 = f0a + (f0b - f0a) * s;
        if ((i - pos) % 80 == 0) {
          const Vowel v{a.f1 + (b.f1 - a.f1) * s, a.f2 + (b.f2 - a.f2) * s, a.f3 + (b.f3 - a.f3) * s};
          gains.clear();
          for (std::size_t h = 1; h * f0 < 7000; ++h) gains.push_back(formant_gain(h * f0, v) / std::sqrt(double(h)));
        }
        phase += 2 * std::numbers::pi * f0 / kSr;
        double acc = 0;
        for (std::size_t h = 0; h < gains.size(); ++h) acc += gains[h] * std::sin(double(h + 1) * phase);
        const double env = std::sin(std::numbers::pi * s);
        y[i] += amp * env * acc;
      }
    } else if (r < 0.9) {
      // Fricative: high-passed noise with a short envelope.
      const double amp = 0.05 + 0.1 * u(rng);
      double prev = 0;
      for (std::size_t i = pos; i < end; ++i) {
        const double s = double(i - pos) / double(end - pos);
        const double w = gauss(rng);
        y[i] += amp * std::sin(std::numbers::pi * s) * (w - 0.9 * prev);
        prev = w;
      }
    }
    // else: a pause
    pos = end + static_cast<std::size_t>(0.03 * u(rng) * kSr);
  }
  double peak = 0;
  for (Real v : y) peak = std::max(peak, std::abs(v));
  if (peak > 0)
    for (Real& v : y) v *= 0.5 / peak;
  // Recording noise floor: keeps pauses from being digital silence, which
  // log-spectral metrics would otherwise treat as infinitely quiet.
  for (Real& v : y) v += kNoiseFloor * gauss(rng);
  return audio::AudioClip{std::move(y), audio::kSampleRate};
}

Corpus make_synthetic_corpus(std::size_t count, double seconds, std::uint64_t seed) {
  Corpus c;
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "utt_%03zu", i);
    c.names.emplace_back(name);
    c.clips.push_back(synth_utterance(seconds, seed * 1000003 + i));
  }
  return c;
}

void write_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < corpus.size(); ++i) audio::write_wav(dir / (corpus.names[i] + ".wav"), corpus.clips[i]);
}

BatchSampler::BatchSampler(const Corpus& corpus, const DataConfig& config, std::size_t batch_size, std::uint64_t seed)
    : corpus_(corpus), config_(config), batch_size_(batch_size), rng_(seed) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  config_.validate();
}

Batch BatchSampler::next() {
  const std::size_t L = config_.segment_samples(), B = batch_size_;
  const std::size_t packets = L / loss::kPacketSamples, T = L / audio::kHop;
  Batch b{Tensor({B, 1, L}), Tensor({B, 1, L}), Tensor({B, T}), {}};
  std::uniform_real_distribution<double> rate(config_.loss_rate_min, config_.loss_rate_max);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& clip = corpus_.clips[rng_() % corpus_.size()].samples;
    const std::size_t offset = clip.size() > L ? rng_() % (clip.size() - L + 1) : 0;
    const std::size_t count = std::min(L, clip.size() - std::min(clip.size(), offset));
    std::copy_n(clip.begin() + std::ptrdiff_t(offset), count, b.clean.data() + i * L);

    const double r = config_.loss_rate_min == config_.loss_rate_max ? config_.loss_rate_min : rate(rng_);
    loss::PacketTrace trace = loss::gen_random_trace(packets, r, config_.max_burst_packets, rng_());
    for (std::size_t k = 0; k < packets; ++k) {
      const bool lost = trace.flags[k];
      for (std::size_t n = 0; n < loss::kPacketSamples; ++n) {
        const std::size_t idx = i * L + k * loss::kPacketSamples + n;
        b.lossy[idx] = lost ? 0.0 : b.clean[idx];
      }
      for (std::size_t f = 0; f < loss::kFramesPerPacket; ++f) b.lossmap[i * T + k * loss::kFramesPerPacket + f] = lost;
    }
    b.traces.push_back(std::move(trace));
  }
  return b;
}

}  // namespace plc::train
