#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "acceptance/harness.hpp"
#include "plc/audio.hpp"
#include "plc/loss_sim.hpp"
#include "plc/metrics.hpp"
#include "plc/postproc.hpp"
#include "plc/spectral.hpp"
#include "plc/vocoder.hpp"
#include "support/helpers.hpp"

namespace plc::acceptance {

namespace {

// Stationary distribution of a 3-state chain: one balance equation of
// pi (P - I) = 0 replaced by sum(pi) = 1, solved by Gaussian elimination.
std::array<double, 3> stationary(const loss::MarkovModel& m) {
  double a[3][4];
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 3; ++i) a[j][i] = m.transition[i][j] - (i == j ? 1.0 : 0.0);
    a[j][3] = 0;
  }
  for (int i = 0; i < 3; ++i) a[2][i] = 1;
  a[2][3] = 1;
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int r = c + 1; r < 3; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    for (int k = 0; k < 4; ++k) std::swap(a[c][k], a[piv][k]);
    for (int r = 0; r < 3; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (int k = 0; k < 4; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return {a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]};
}

audio::AudioClip random_clip(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  audio::AudioClip clip;
  clip.samples.resize(n);
  for (auto& s : clip.samples) s = u(rng);
  return clip;
}

double smooth(double t) { return 3 * t * t - 2 * t * t * t; }

loss::FrameLossMap burst_map(std::size_t frames, std::size_t start, std::size_t length) {
  loss::FrameLossMap m;
  m.flags.assign(frames, 0);
  for (std::size_t t = start; t < start + length; ++t) m.flags[t] = 1;
  return m;
}

}  // namespace

Outcome simulation_statistics() {
  Checker c;
  double worst_rate = 0;
  for (double rate : {0.1, 0.3, 0.5})
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto t = loss::gen_random_trace(100000, rate, loss::kDefaultMaxBurstPackets, seed);
      const double err = std::abs(t.loss_rate() - rate);
      worst_rate = std::max(worst_rate, err);
      c.expect(err <= 0.01, "random rate " + num(t.loss_rate()) + " for target " + num(rate));
    }
  std::size_t longest = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const double rate = 0.1 + 0.8 * double(seed % 9) / 8.0;
    const auto t = loss::gen_random_trace(2000, rate, loss::kDefaultMaxBurstPackets, seed);
    longest = std::max(longest, loss::longest_run(t.flags));
  }
  c.expect(longest <= 11, "burst of " + std::to_string(longest) + " packets");

  const loss::MarkovModel m = loss::MarkovModel::wlan();
  const auto pi = stationary(m);
  double expected = 0;
  for (int s = 0; s < 3; ++s) expected += pi[s] * m.loss_prob[s];
  const double got = loss::gen_markov_trace(1000000, m, 42).loss_rate();
  c.expect(std::abs(got - expected) <= 0.005, "markov rate " + num(got) + " vs stationary " + num(expected));

  c.note("worst random-rate error " + num(worst_rate) + ", longest burst " + std::to_string(longest) +
         ", markov " + num(got) + " vs " + num(expected));
  return c.outcome();
}

Outcome round_trips() {
  Checker c;
  double worst_stft = 0, worst_comp = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const audio::AudioClip clip = random_clip(16000, seed);
    const auto spec = audio::stft(clip);
    const audio::AudioClip back = audio::istft(spec);
    // Every sample but the final hop is covered by two windows.
    const std::size_t valid = (spec.frames - 1) * audio::kHop;
    double num2 = 0, den = 0;
    for (std::size_t i = 0; i < valid; ++i) {
      num2 += (back.samples[i] - clip.samples[i]) * (back.samples[i] - clip.samples[i]);
      den += clip.samples[i] * clip.samples[i];
    }
    worst_stft = std::max(worst_stft, std::sqrt(num2 / den));

    for (double p : {0.3, 0.5, 1.0}) {
      const auto expanded = audio::power_expand(audio::power_compress(spec, p));
      double n2 = 0, d2 = 0;
      for (std::size_t i = 0; i < spec.values.size(); ++i) {
        n2 += std::norm(expanded.values[i] - spec.values[i]);
        d2 += std::norm(spec.values[i]);
      }
      worst_comp = std::max(worst_comp, std::sqrt(n2 / d2));
    }
  }
  c.expect(worst_stft < 1e-6, "stft round trip rel " + num(worst_stft));
  c.expect(worst_comp < 1e-6, "compression round trip rel " + num(worst_comp));

  // The differentiable transform used in training agrees with the analysis one.
  {
    const audio::AudioClip clip = random_clip(1000, 9);
    const Var spec = spectral::stft(Var(Tensor({1, 1, 1000}, clip.samples)), spectral::Framing::model());
    const auto ref = audio::stft(clip);
    double d = 0;
    for (std::size_t t = 0; t < ref.frames; ++t)
      for (std::size_t f = 0; f < audio::kBins; ++f) {
        d = std::max(d, std::abs(spec.value().at({0, 0, t, f}) - ref.at(t, f).real()));
        d = std::max(d, std::abs(spec.value().at({0, 1, t, f}) - ref.at(t, f).imag()));
      }
    c.expect(d < 1e-12, "training stft differs from analysis stft by " + num(d));
  }

  Initializer init(606);
  model::VocoderConfig vc;
  vc.latent = 16;
  vc.hidden = 8;
  model::Generator gen(vc, init);
  std::mt19937_64 rng(607);
  for (std::size_t T = 1; T <= 64; ++T) {
    const Var y = gen.forward(Var(testing::random_tensor({1, vc.latent, T}, rng)));
    c.expect(y.shape() == Shape{1, 1, 160 * T}, "generator length for T=" + std::to_string(T));
  }
  model::Generator desk(model::VocoderConfig{}, init);
  c.expect(desk.forward(Var(testing::random_tensor({1, 240, 25}, rng))).shape() == Shape{1, 1, 4000},
           "desk generator: 25 frames should give 4000 samples");
  c.note("stft rel " + num(worst_stft) + ", compression rel " + num(worst_comp));
  return c.outcome();
}

Outcome fade_policy() {
  Checker c;
  const post::FadePolicy policy;
  std::vector<Real> ramp(60 * 160);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 0.3 + 0.5 * std::sin(0.01 * double(i));
  for (std::size_t len = 1; len <= 14; ++len)
    c.expect(post::apply_fade(ramp, burst_map(60, 7, len), policy) == ramp,
             std::to_string(10 * len) + " ms burst was modified");
  c.expect(post::apply_fade(ramp, burst_map(60, 7, 15), policy) != ramp, "150 ms burst was not faded");

  // 200 ms burst on a constant signal: the output is the envelope itself.
  constexpr std::size_t frames = 60, start = 10, len = 20;
  const std::vector<Real> ones(frames * 160, 1.0);
  const auto y = post::apply_fade(ones, burst_map(frames, start, len), policy);
  const std::size_t s = start * 160, e = (start + len) * 160;
  const std::size_t keep = 2240, out = 320, in = 160;
  double worst = 0;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double g = 1;
    if (i >= s + keep && i < s + keep + out) g = 1 - smooth(double(i - s - keep + 1) / double(out));
    if (i >= s + keep + out && i < e) g = 0;
    if (i >= e && i < e + in) g = smooth(double(i - e) / double(in));
    worst = std::max(worst, std::abs(y[i] - g));
    zeros += (i >= s + keep + out && i < e && y[i] == 0.0);
  }
  c.expect(zeros == e - (s + keep + out), "samples between the ramps are not exactly zero");
  c.expect(worst < 1e-15, "envelope deviates by " + num(worst));
  bool down = true, up = true;
  for (std::size_t i = s + keep; i + 1 < s + keep + out; ++i) down &= y[i + 1] <= y[i];
  for (std::size_t i = e; i + 1 < e + in; ++i) up &= y[i + 1] >= y[i];
  c.expect(down, "fade-out is not monotone");
  c.expect(up, "fade-in is not monotone");
  for (std::size_t i = 0; i < 1000; ++i) c.expect(post::smoothstep((i + 1) / 1000.0) >= post::smoothstep(i / 1000.0), "smoothstep");
  c.note(std::to_string(zeros) + " exact zeros in the 200 ms burst");
  return c.outcome();
}

Outcome metric_properties() {
  Checker c;
  const audio::AudioClip a = random_clip(16000, 1);
  audio::AudioClip voiced;
  voiced.samples.resize(16000);
  for (std::size_t i = 0; i < voiced.size(); ++i)
    voiced.samples[i] = 0.3 * std::sin(2 * std::numbers::pi * 180 * double(i) / 16000) +
                        0.1 * std::sin(2 * std::numbers::pi * 1100 * double(i) / 16000) + 0.01 * a.samples[i];
  audio::AudioClip doubled = voiced;
  for (auto& v : doubled.samples) v *= 2;

  c.expect(metrics::mcd(a, a) == 0.0, "mcd(x, x) != 0");
  c.expect(metrics::mcd(voiced, voiced) == 0.0, "mcd(x, x) != 0 on a voiced signal");
  const double gain = metrics::mcd(voiced, doubled);
  c.expect(gain < 1e-9, "gain invariance violated by " + num(gain));
  const double ab = metrics::mcd(a, voiced), ba = metrics::mcd(voiced, a);
  c.expect(ab == ba, "symmetry " + num(ab) + " vs " + num(ba));
  c.expect(ab > 0, "distinct signals have zero distance");

  using metrics::BurstCategory;
  const std::array<std::pair<std::size_t, BurstCategory>, 8> cases{{{0, BurstCategory::Short},
                                                                    {100, BurstCategory::Short},
                                                                    {120, BurstCategory::Short},
                                                                    {140, BurstCategory::Medium},
                                                                    {220, BurstCategory::Medium},
                                                                    {240, BurstCategory::Long},
                                                                    {1000, BurstCategory::Long},
                                                                    {1200, BurstCategory::Long}}};
  for (const auto& [ms, cat] : cases)
    c.expect(metrics::categorize_burst_ms(ms) == cat, "category at " + std::to_string(ms) + " ms");
  // Same boundaries through whole traces: 6 packets = 120 ms, 11 = 220 ms.
  auto trace_with_burst = [](std::size_t packets) {
    loss::PacketTrace t;
    t.flags.assign(40, 0);
    for (std::size_t k = 5; k < 5 + packets; ++k) t.flags[k] = 1;
    return t;
  };
  c.expect(metrics::categorize_trace(trace_with_burst(6)) == BurstCategory::Short, "120 ms trace");
  c.expect(metrics::categorize_trace(trace_with_burst(7)) == BurstCategory::Medium, "140 ms trace");
  c.expect(metrics::categorize_trace(trace_with_burst(11)) == BurstCategory::Medium, "220 ms trace");
  c.expect(metrics::categorize_trace(trace_with_burst(12)) == BurstCategory::Long, "240 ms trace");
  c.note("gain residual " + num(gain) + ", mcd(noise, voiced) " + num(ab) + " dB");
  return c.outcome();
}

}  // namespace plc::acceptance
