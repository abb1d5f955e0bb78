#include "plc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "plc/errors.hpp"

namespace plc {

using nlohmann::json;

std::size_t DataConfig::segment_samples() const {
  // Whole packets so that traces tile the segment exactly.
  const auto packets = static_cast<std::size_t>(segment_ms / loss::kPacketMs + 0.5);
  return packets * loss::kPacketSamples;
}

void DataConfig::validate() const {
  if (segment_samples() == 0) throw ConfigError("data.segment_ms must cover at least one packet");
  if (!(loss_rate_min >= 0 && loss_rate_min <= loss_rate_max && loss_rate_max < 1)) {
    throw ConfigError("data.loss_rate_min/max must satisfy 0 <= min <= max < 1");
  }
  if (max_burst_packets == 0) throw ConfigError("data.max_burst_packets must be positive");
}

void Stage1Config::validate() const {
  if (batch_size == 0) throw ConfigError("stage1.batch_size must be positive");
  AdamConfig{lr, beta1, beta2}.validate();
}

void Stage2Config::validate() const {
  if (batch_size == 0) throw ConfigError("stage2.batch_size must be positive");
  AdamConfig{lr, beta1, beta2}.validate();
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("stage2.lr_decay must lie in (0, 1]");
}

void RunConfig::validate() const {
  if (preset != "desk" && preset != "paper") throw ConfigError("preset must be desk or paper");
  model.validate();
  contrastive.validate();
  discriminator.validate();
  loss_weights.validate();
  spectral.validate();
  data.validate();
  stage1.validate();
  stage2.validate();
  fade.validate();
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  if (name == "desk") return c;
  if (name != "paper") throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
  c.preset = "paper";
  c.stage1.epochs = 240;
  c.stage1.batch_size = 256;
  c.stage2.epochs = 50;
  c.stage2.batch_size = 64;
  return c;
}

namespace {

// Walks every field once; the writer and the reader share this layout.
template <class V>
void visit(V& v, RunConfig& c) {
  v.field("preset", c.preset);
  v.field("seed", c.seed);
  v.section("model", [&](V& m) {
    m.section("semantic", [&](V& s) {
      auto& e = c.model.semantic;
      s.field("bins", e.bins);
      s.field("kernel_t", e.kernel_t);
      s.field("kernel_f", e.kernel_f);
      s.field("channels", e.channels);
      s.field("freq_strides", e.freq_strides);
      s.field("latent", e.latent);
      s.field("tcm_blocks", e.tcm_blocks);
      s.field("tcm_dilations", e.tcm_dilations);
      s.field("tcm_kernel", e.tcm_kernel);
      s.field("tcm_hidden", e.tcm_hidden);
    });
    m.section("auxiliary", [&](V& s) {
      auto& a = c.model.auxiliary;
      s.field("bins", a.bins);
      s.field("conv_channels", a.conv_channels);
      s.field("latent", a.latent);
      s.field("blocks", a.blocks);
      s.field("groups", a.groups);
      s.field("window", a.window);
      s.field("ffn_hidden", a.ffn_hidden);
    });
    m.section("quantizer", [&](V& s) {
      auto& q = c.model.quantizer;
      s.field("groups", q.groups);
      s.field("entries", q.entries);
      s.field("latent", q.latent);
      s.field("tau_init", q.tau_init);
      s.field("tau_min", q.tau_min);
      s.field("anneal", q.anneal);
    });
    m.section("vocoder", [&](V& s) {
      auto& g = c.model.vocoder;
      s.field("latent", g.latent);
      s.field("hidden", g.hidden);
      s.field("upsample_rates", g.upsample_rates);
      s.field("upsample_kernels", g.upsample_kernels);
      s.field("resblock_kernels", g.resblock_kernels);
      s.field("resblock_dilations", g.resblock_dilations);
      s.field("pre_kernel", g.pre_kernel);
      s.field("post_kernel", g.post_kernel);
      s.field("slope", g.slope);
    });
    m.field("compress_exponent", c.model.compress_exponent);
  });
  v.section("contrastive", [&](V& s) {
    s.field("distractors", c.contrastive.distractors);
    s.field("kappa", c.contrastive.kappa);
    s.field("diversity_weight", c.contrastive.diversity_weight);
  });
  v.section("discriminator", [&](V& s) {
    auto& d = c.discriminator;
    s.field("periods", d.periods);
    s.field("scales", d.scales);
    s.field("period_channels", d.period_channels);
    s.field("scale_channels", d.scale_channels);
    s.field("scale_groups", d.scale_groups);
    s.field("slope", d.slope);
  });
  v.section("loss_weights", [&](V& s) {
    s.field("adv", c.loss_weights.adv);
    s.field("fm", c.loss_weights.fm);
    s.field("bin", c.loss_weights.bin);
    s.field("mel", c.loss_weights.mel);
  });
  v.section("spectral", [&](V& s) {
    s.field("compress_exponent", c.spectral.compress_exponent);
    s.field("mel_ffts", c.spectral.mel_ffts);
    s.field("mel_bands", c.spectral.mel_bands);
    s.field("log_floor", c.spectral.log_floor);
  });
  v.section("data", [&](V& s) {
    s.field("segment_ms", c.data.segment_ms);
    s.field("loss_rate_min", c.data.loss_rate_min);
    s.field("loss_rate_max", c.data.loss_rate_max);
    s.field("max_burst_packets", c.data.max_burst_packets);
  });
  v.section("stage1", [&](V& s) {
    s.field("steps", c.stage1.steps);
    s.field("epochs", c.stage1.epochs);
    s.field("batch_size", c.stage1.batch_size);
    s.field("lr", c.stage1.lr);
    s.field("beta1", c.stage1.beta1);
    s.field("beta2", c.stage1.beta2);
  });
  v.section("stage2", [&](V& s) {
    s.field("steps", c.stage2.steps);
    s.field("epochs", c.stage2.epochs);
    s.field("batch_size", c.stage2.batch_size);
    s.field("lr", c.stage2.lr);
    s.field("beta1", c.stage2.beta1);
    s.field("beta2", c.stage2.beta2);
    s.field("lr_decay", c.stage2.lr_decay);
  });
  v.section("fade", [&](V& s) {
    s.field("conceal_limit_ms", c.fade.conceal_limit_ms);
    s.field("fade_out_ms", c.fade.fade_out_ms);
    s.field("fade_in_ms", c.fade.fade_in_ms);
  });
  v.section("paths", [&](V& s) {
    s.field("corpus", c.paths.corpus);
    s.field("traces", c.paths.traces);
    s.field("out", c.paths.out);
    s.field("pretrained", c.paths.pretrained);
  });
}

class Writer {
 public:
  explicit Writer(json& out) : out_(out) {}
  template <class T>
  void field(const char* key, const T& value) {
    out_[key] = value;
  }
  template <class F>
  void section(const char* key, F&& body) {
    json child = json::object();
    Writer w(child);
    body(w);
    out_[key] = std::move(child);
  }

 private:
  json& out_;
};

class Reader {
 public:
  Reader(const json& in, std::string path) : in_(in), path_(std::move(path)) {
    if (!in_.is_object()) throw ConfigError("config " + where() + " must be an object");
  }
  template <class T>
  void field(const char* key, T& value) {
    seen_.insert(key);
    auto it = in_.find(key);
    if (it == in_.end()) return;
    try {
      value = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + path_ + key + " has the wrong type");
    }
  }
  template <class F>
  void section(const char* key, F&& body) {
    seen_.insert(key);
    auto it = in_.find(key);
    if (it == in_.end()) return;
    Reader r(*it, path_ + key + ".");
    body(r);
    r.finish();
  }
  void finish() const {
    for (const auto& item : in_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key " + path_ + item.key());
    }
  }

 private:
  std::string where() const { return path_.empty() ? "root" : path_.substr(0, path_.size() - 1); }

  const json& in_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const RunConfig& config) {
  json out = json::object();
  Writer w(out);
  RunConfig copy = config;
  visit(w, copy);
  return out;
}

RunConfig from_json(const json& j, RunConfig base) {
  Reader r(j, "");
  visit(r, base);
  r.finish();
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/false);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, std::move(base));
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

int configured_workers() {
  const char* env = std::getenv("PLC_NUM_WORKERS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 0) throw ConfigError(std::string("PLC_NUM_WORKERS must be a non-negative integer, got ") + env);
  return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace plc
