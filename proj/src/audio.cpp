#include "plc/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "plc/errors.hpp"
#include "plc/fft.hpp"

namespace plc::audio {

void AudioClip::validate() const {
  if (sample_rate != kSampleRate) {
    throw ParameterError("sample_rate must be 16000, got " + std::to_string(sample_rate));
  }
  for (Real s : samples) {
    if (!std::isfinite(s)) throw ParameterError("clip contains non-finite samples");
  }
}

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

std::int16_t to_pcm16(Real sample) noexcept {
  const Real scaled = std::round(sample * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

Real from_pcm16(std::int16_t sample) noexcept { return static_cast<Real>(sample) / 32768.0; }

AudioClip parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("container", "not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw FormatError("chunk", "chunk extends past end of file");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("fmt", "fmt chunk too short");
      const std::uint8_t* f = bytes.data() + body;
      std::uint16_t format = le16(f);
      if (format == 0xFFFE && size >= 26) format = le16(f + 24);  // WAVE_FORMAT_EXTENSIBLE sub-format
      const std::uint16_t channels = le16(f + 2);
      const std::uint32_t rate = le32(f + 4);
      const std::uint16_t bits = le16(f + 14);
      if (format != 1) throw FormatError("audio_format", "only PCM is supported, got " + std::to_string(format));
      if (rate != kSampleRate) throw FormatError("sample_rate", "expected 16000, got " + std::to_string(rate));
      if (channels != 1) throw FormatError("channels", "expected mono, got " + std::to_string(channels));
      if (bits != 16) throw FormatError("bits_per_sample", "expected 16, got " + std::to_string(bits));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("fmt", "data chunk before fmt chunk");
      AudioClip clip;
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = from_pcm16(static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i)));
      }
      return clip;
    }
    pos = body + size + (size & 1);
  }
  throw FormatError(have_fmt ? "data" : "fmt", "chunk missing");
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  clip.validate();
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, kSampleRate);
  put32(out, kSampleRate * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (Real s : clip.samples) put16(out, static_cast<std::uint16_t>(to_pcm16(s)));
  return out;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("path", "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_wav(bytes);
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("path", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// STFT

std::vector<Real> sqrt_hann(std::size_t n) {
  std::vector<Real> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::sqrt(0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<Real>(i) / static_cast<Real>(n)));
  }
  return w;
}

namespace {
const std::vector<Real>& analysis_window() {
  static const std::vector<Real> w = sqrt_hann(kWindow);
  return w;
}
}  // namespace

std::size_t frame_count(std::size_t samples) noexcept { return (samples + kHop - 1) / kHop; }

void analyze_frame(std::span<const Real> frame, std::span<Complex> bins) {
  if (frame.size() != kWindow || bins.size() != kBins) throw ShapeError("analyze_frame: wrong frame or bin count");
  const auto& w = analysis_window();
  std::vector<Real> buf(kFftSize);
  for (std::size_t i = 0; i < kWindow; ++i) buf[i] = frame[i] * w[i];
  fft::rfft(buf, bins);
}

ComplexSpectrogram stft(const AudioClip& clip) {
  if (clip.samples.empty()) throw ParameterError("stft of an empty clip");
  ComplexSpectrogram spec;
  spec.frames = frame_count(clip.size());
  spec.values.resize(spec.frames * kBins);
  std::vector<Real> frame(kWindow);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t i = 0; i < kWindow; ++i) {
      const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(t * kHop + i) - static_cast<std::ptrdiff_t>(kLeftPad);
      frame[i] = (n >= 0 && n < static_cast<std::ptrdiff_t>(clip.size())) ? clip.samples[n] : 0.0;
    }
    analyze_frame(frame, std::span(spec.values).subspan(t * kBins, kBins));
  }
  return spec;
}

std::vector<Real> overlap_add(const ComplexSpectrogram& spec) {
  if (spec.bins != kBins) throw ShapeError("istft expects 161 bins, got " + std::to_string(spec.bins));
  if (spec.values.size() != spec.frames * spec.bins) throw ShapeError("istft: value count does not match frames");
  if (spec.frames == 0) return {};
  const auto& w = analysis_window();
  std::vector<Real> out((spec.frames - 1) * kHop + kWindow, 0.0);
  std::vector<Real> frame(kFftSize);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    fft::irfft(std::span(spec.values).subspan(t * kBins, kBins), frame);
    for (std::size_t i = 0; i < kWindow; ++i) out[t * kHop + i] += frame[i] * w[i] / static_cast<Real>(kFftSize);
  }
  return out;
}

AudioClip istft(const ComplexSpectrogram& spec, std::size_t length) {
  std::vector<Real> ola = overlap_add(spec);
  if (length == 0) length = spec.frames * kHop;
  AudioClip clip;
  clip.samples.assign(length, 0.0);
  for (std::size_t n = 0; n < length && n + kLeftPad < ola.size(); ++n) clip.samples[n] = ola[n + kLeftPad];
  return clip;
}

CompressedSpectrogram power_compress(const ComplexSpectrogram& spec, Real exponent) {
  if (!(exponent > 0 && exponent <= 1)) {
    throw ParameterError("compression exponent must lie in (0, 1], got " + std::to_string(exponent));
  }
  CompressedSpectrogram out;
  out.exponent = exponent;
  out.data = Tensor({2, spec.frames, spec.bins});
  const std::size_t plane = spec.frames * spec.bins;
  for (std::size_t i = 0; i < plane; ++i) {
    const Complex x = spec.values[i];
    const Real mag = std::abs(x);
    if (mag == 0) continue;
    const Real gain = std::pow(mag, exponent) / mag;
    out.data[i] = x.real() * gain;
    out.data[plane + i] = x.imag() * gain;
  }
  return out;
}

ComplexSpectrogram power_expand(const CompressedSpectrogram& cspec) {
  ComplexSpectrogram out;
  out.frames = cspec.frames();
  out.bins = cspec.bins();
  const std::size_t plane = out.frames * out.bins;
  out.values.resize(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const Complex c(cspec.data[i], cspec.data[plane + i]);
    const Real mag = std::abs(c);
    if (mag == 0) continue;
    out.values[i] = c * (std::pow(mag, 1 / cspec.exponent) / mag);
  }
  return out;
}

}  // namespace plc::audio
