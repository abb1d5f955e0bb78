#include "plc/loss_sim.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "plc/errors.hpp"

namespace plc::loss {

double PacketTrace::loss_rate() const noexcept {
  if (flags.empty()) return 0;
  std::size_t lost = 0;
  for (auto f : flags) lost += f;
  return static_cast<double>(lost) / static_cast<double>(flags.size());
}

// ---------------------------------------------------------------------------
// Bounded-burst random traces

namespace {

// Truncated geometric P(l) ~ ratio^(l-1) on [1, cap].
std::vector<double> burst_weights(double ratio, std::size_t cap) {
  std::vector<double> w(cap);
  double v = 1;
  for (std::size_t l = 0; l < cap; ++l) {
    w[l] = v;
    v *= ratio;
  }
  return w;
}

double mean_length(const std::vector<double>& w) {
  double total = 0, acc = 0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    total += w[l];
    acc += w[l] * static_cast<double>(l + 1);
  }
  return acc / total;
}

}  // namespace

PacketTrace gen_random_trace(std::size_t num_packets, double target_rate, std::size_t max_burst_packets,
                             std::uint64_t seed) {
  if (!(target_rate >= 0 && target_rate <= 1)) {
    throw ParameterError("target_rate must lie in [0, 1], got " + std::to_string(target_rate));
  }
  if (max_burst_packets < 1) throw ParameterError("max_burst_packets must be >= 1");
  if (num_packets < 1) throw ParameterError("num_packets must be >= 1");

  PacketTrace trace;
  trace.flags.assign(num_packets, 0);
  if (target_rate == 0) return trace;

  const double cap_rate = static_cast<double>(max_burst_packets) / static_cast<double>(max_burst_packets + 1);
  const double rate = std::min(target_rate, cap_rate);

  // Burst lengths grow with the target rate; raise them further when the
  // receive runs would otherwise have to be shorter than one packet.
  double ratio = rate;
  auto weights = burst_weights(ratio, max_burst_packets);
  double mean_loss = mean_length(weights);
  const double needed = rate / (1 - rate);
  if (rate >= cap_rate) {
    weights.assign(max_burst_packets, 0.0);
    weights.back() = 1;
    mean_loss = static_cast<double>(max_burst_packets);
  } else if (mean_loss < needed) {
    double lo = ratio, hi = 2;
    while (mean_length(burst_weights(hi, max_burst_packets)) < needed) hi *= 2;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mean_length(burst_weights(mid, max_burst_packets)) < needed ? lo : hi) = mid;
    }
    weights = burst_weights(hi, max_burst_packets);
    mean_loss = mean_length(weights);
  }
  const double mean_receive = std::max(1.0, mean_loss * (1 - rate) / rate);

  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> burst(weights.begin(), weights.end());
  std::geometric_distribution<std::size_t> gap(1.0 / mean_receive);
  std::bernoulli_distribution start_in_gap(mean_receive / (mean_receive + mean_loss));

  std::size_t pos = 0;
  bool in_gap = start_in_gap(rng);
  while (pos < num_packets) {
    const std::size_t run = in_gap ? 1 + gap(rng) : 1 + burst(rng);
    const std::size_t end = std::min(num_packets, pos + run);
    if (!in_gap) std::fill(trace.flags.begin() + pos, trace.flags.begin() + end, 1);
    pos = end;
    in_gap = !in_gap;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Three-state Markov traces

void MarkovModel::validate() const {
  for (std::size_t s = 0; s < 3; ++s) {
    double row = 0;
    for (double p : transition[s]) {
      if (!(p >= 0 && p <= 1)) throw ParameterError("transition probabilities must lie in [0, 1]");
      row += p;
    }
    if (std::abs(row - 1) > 1e-12) {
      throw ParameterError("transition row " + std::to_string(s) + " sums to " + std::to_string(row));
    }
    if (!(loss_prob[s] >= 0 && loss_prob[s] <= 1)) throw ParameterError("loss probabilities must lie in [0, 1]");
  }
}

MarkovModel MarkovModel::wlan() {
  MarkovModel m;
  m.transition = {{{0.985, 0.015, 0.0}, {0.20, 0.70, 0.10}, {0.0, 0.25, 0.75}}};
  m.loss_prob = {0.005, 0.25, 0.90};
  m.initial = MarkovState::Good;
  return m;
}

PacketTrace gen_markov_trace(std::size_t num_packets, const MarkovModel& model, std::uint64_t seed) {
  model.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PacketTrace trace;
  trace.flags.resize(num_packets);
  std::size_t state = static_cast<std::size_t>(model.initial);
  for (std::size_t k = 0; k < num_packets; ++k) {
    trace.flags[k] = u(rng) < model.loss_prob[state] ? 1 : 0;
    const double draw = u(rng);
    double acc = 0;
    std::size_t next = 2;
    for (std::size_t s = 0; s < 3; ++s) {
      acc += model.transition[state][s];
      if (draw < acc) {
        next = s;
        break;
      }
    }
    // Guard against rounding in the cumulative sum: never jump to a zero-probability state.
    while (model.transition[state][next] == 0 && next > 0) --next;
    state = next;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Trace files

PacketTrace parse_trace(std::string_view text) {
  PacketTrace trace;
  std::size_t line = 1;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const std::string_view row = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    if (row == "0" || row == "1") {
      trace.flags.push_back(row == "1" ? 1 : 0);
    } else {
      throw ParseError(line, "expected '0' or '1', got \"" + std::string(row) + "\"");
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
    ++line;
  }
  return trace;
}

std::string format_trace(const PacketTrace& trace) {
  std::string out;
  out.reserve(trace.size() * 2);
  for (auto f : trace.flags) {
    out.push_back(f ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

PacketTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str());
}

void write_trace(const std::filesystem::path& path, const PacketTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot write " + path.string());
  out << format_trace(trace);
}

// ---------------------------------------------------------------------------

FrameLossMap expand_to_frames(const PacketTrace& trace) {
  FrameLossMap map;
  map.flags.reserve(trace.size() * kFramesPerPacket);
  for (auto f : trace.flags) {
    for (std::size_t i = 0; i < kFramesPerPacket; ++i) map.flags.push_back(f);
  }
  return map;
}

FrameLossMap frame_flags(const PacketTrace& trace, std::size_t frames) {
  FrameLossMap map;
  map.flags.resize(frames, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t k = t / kFramesPerPacket;
    if (k < trace.size()) map.flags[t] = trace.flags[k];
  }
  return map;
}

LossyClip apply_trace(const audio::AudioClip& clip, const PacketTrace& trace) {
  const std::size_t packets = (clip.size() + kPacketSamples - 1) / kPacketSamples;
  if (trace.size() < packets) {
    throw CoverageError("trace of " + std::to_string(trace.size()) + " packets cannot cover " +
                        std::to_string(clip.size()) + " samples");
  }
  LossyClip out{clip, {}};
  PacketTrace used;
  used.flags.assign(trace.flags.begin(), trace.flags.begin() + static_cast<std::ptrdiff_t>(packets));
  for (std::size_t k = 0; k < packets; ++k) {
    if (!used.flags[k]) continue;
    const std::size_t end = std::min(clip.size(), (k + 1) * kPacketSamples);
    for (std::size_t n = k * kPacketSamples; n < end; ++n) out.audio.samples[n] = 0.0;
  }
  out.map = expand_to_frames(used);
  return out;
}

std::size_t longest_run(const std::vector<std::uint8_t>& flags) noexcept {
  std::size_t best = 0, run = 0;
  for (auto f : flags) {
    run = f ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

std::size_t max_burst_ms(const PacketTrace& trace) noexcept { return kPacketMs * longest_run(trace.flags); }

}  // namespace plc::loss
