#include "plc/postproc.hpp"

#include <algorithm>
#include <cmath>

#include "plc/errors.hpp"

namespace plc::post {

namespace {

constexpr double kSamplesPerMs = audio::kSampleRate / 1000.0;

std::size_t ms_to_samples(double ms) { return static_cast<std::size_t>(std::llround(ms * kSamplesPerMs)); }

}  // namespace

void FadePolicy::validate() const {
  if (!(conceal_limit_ms >= 0 && fade_out_ms >= 0 && fade_in_ms >= 0)) {
    throw ConfigError("fade durations must be non-negative");
  }
}

std::size_t FadePolicy::keep_samples() const {
  // Frame resolution: a burst counts in whole 10 ms frames.
  return static_cast<std::size_t>(std::floor(conceal_limit_ms / loss::kFrameMs)) * audio::kHop;
}
std::size_t FadePolicy::fade_out_samples() const { return ms_to_samples(fade_out_ms); }
std::size_t FadePolicy::fade_in_samples() const { return ms_to_samples(fade_in_ms); }

double smoothstep(double t) noexcept {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

FadeTracker::FadeTracker(const FadePolicy& policy)
    : keep_((policy.validate(), policy.keep_samples())), out_(policy.fade_out_samples()), in_(policy.fade_in_samples()) {}

void FadeTracker::reset() {
  run_ = 0;
  in_burst_ = false;
  faded_ = false;
  burst_len_ = 0;
  since_end_ = 0;
}

double FadeTracker::fade_out(std::size_t run) const {
  if (run < keep_) return 1.0;
  if (out_ == 0) return 0.0;
  // The first faded sample is already below one and the last reaches zero.
  return 1.0 - smoothstep(double(run - keep_ + 1) / double(out_));
}

double FadeTracker::next_gain(bool lost) {
  if (lost) {
    if (!in_burst_) {
      in_burst_ = true;
      run_ = 0;
      faded_ = false;
    }
    const double g = fade_out(run_);
    if (run_ >= keep_) faded_ = true;
    ++run_;
    return g;
  }
  if (in_burst_) {
    in_burst_ = false;
    burst_len_ = run_;
    since_end_ = 0;
  }
  if (!faded_) return 1.0;
  if (since_end_ >= in_) {
    faded_ = false;
    return 1.0;
  }
  // The fade-out keeps running under the rising ramp when the burst ended
  // before it finished; the envelope follows whichever is higher.
  const double rising = in_ == 0 ? 1.0 : smoothstep(double(since_end_) / double(in_));
  const double falling = fade_out(burst_len_ + since_end_);
  ++since_end_;
  return std::max(rising, falling);
}

void FadeTracker::process(bool lost, std::span<Real> frame) {
  for (Real& x : frame) {
    const double g = next_gain(lost);
    if (g != 1.0) x *= g;
  }
}

std::vector<Real> apply_fade(std::span<const Real> wave, const loss::FrameLossMap& lossmap, const FadePolicy& policy) {
  if (wave.size() != lossmap.size() * audio::kHop) {
    throw ShapeError("apply_fade: " + std::to_string(wave.size()) + " samples for " + std::to_string(lossmap.size()) +
                     " frames");
  }
  std::vector<Real> out(wave.begin(), wave.end());
  FadeTracker tracker(policy);
  for (std::size_t t = 0; t < lossmap.size(); ++t) {
    tracker.process(lossmap.flags[t] != 0, std::span<Real>(out).subspan(t * audio::kHop, audio::kHop));
  }
  return out;
}

audio::AudioClip conceal(const model::ConcealmentModel& model, const loss::LossyClip& lossy, const FadePolicy& policy,
                         bool fade) {
  const std::size_t n = lossy.audio.size();
  const std::size_t packets = (n + loss::kPacketSamples - 1) / loss::kPacketSamples;
  const std::size_t frames = packets * loss::kFramesPerPacket;
  if (lossy.map.size() != frames) {
    throw ShapeError("conceal: loss map of " + std::to_string(lossy.map.size()) + " frames for " +
                     std::to_string(packets) + " packets");
  }
  Tensor wave({1, 1, frames * audio::kHop});
  std::copy(lossy.audio.samples.begin(), lossy.audio.samples.end(), wave.data());
  Tensor map({1, frames});
  for (std::size_t t = 0; t < frames; ++t) map[t] = lossy.map.flags[t];
  NoGradGuard guard;
  const Var y = model.forward(wave, map);
  std::vector<Real> out(y.value().data(), y.value().data() + y.value().size());
  if (fade) out = apply_fade(out, lossy.map, policy);
  out.resize(n);
  return audio::AudioClip{std::move(out), audio::kSampleRate};
}

StreamSession::StreamSession(const model::ConcealmentModel& model, const FadePolicy& policy, bool fade)
    : model_(model), fade_(policy), apply_fade_(fade) {}

void StreamSession::reset() {
  cache_.clear();
  fade_.reset();
  started_ = false;
  pushed_ = 0;
}

std::vector<Real> StreamSession::push_packet(std::uint64_t seq, std::span<const std::uint8_t> payload, bool lost) {
  if (lost) {
    if (!payload.empty()) throw SessionError("lost packet " + std::to_string(seq) + " carries a payload");
    return push_samples(seq, {}, true);
  }
  if (payload.size() != kPacketBytes) {
    throw SessionError("packet " + std::to_string(seq) + " has " + std::to_string(payload.size()) + " bytes, expected " +
                       std::to_string(kPacketBytes));
  }
  std::vector<Real> samples(loss::kPacketSamples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(std::uint16_t(payload[2 * i]) | (std::uint16_t(payload[2 * i + 1]) << 8));
    samples[i] = audio::from_pcm16(v);
  }
  return push_samples(seq, samples, false);
}

std::vector<Real> StreamSession::push_samples(std::uint64_t seq, std::span<const Real> samples, bool lost) {
  if (started_ && seq != next_seq_) {
    throw SessionError("packet " + std::to_string(seq) + " out of order, expected " + std::to_string(next_seq_));
  }
  if (!lost && samples.size() != loss::kPacketSamples) {
    throw SessionError("packet " + std::to_string(seq) + " has " + std::to_string(samples.size()) + " samples");
  }
  Tensor wave({1, 1, loss::kPacketSamples});
  if (!lost) std::copy(samples.begin(), samples.end(), wave.data());
  Tensor map({1, loss::kFramesPerPacket}, lost ? 1.0 : 0.0);
  std::vector<Real> out;
  {
    NoGradGuard guard;
    const Var y = model_.forward(wave, map, &cache_);
    out.assign(y.value().data(), y.value().data() + y.value().size());
  }
  if (apply_fade_) {
    for (std::size_t f = 0; f < loss::kFramesPerPacket; ++f) {
      fade_.process(lost, std::span<Real>(out).subspan(f * audio::kHop, audio::kHop));
    }
  }
  started_ = true;
  next_seq_ = seq + 1;
  ++pushed_;
  return out;
}

}  // namespace plc::post
