#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "plc/config.hpp"
#include "plc/errors.hpp"
#include "plc/kernels.hpp"
#include "plc/loss_sim.hpp"
#include "plc/metrics.hpp"
#include "plc/postproc.hpp"
#include "plc/training.hpp"

namespace plc::cli {

namespace fs = std::filesystem;

namespace {

// Flags shared by every command. Precedence: flags > --config file > preset.
struct Common {
  std::string config;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App& cmd, Common& c, bool out_required) {
  cmd.add_option("--config", c.config, "JSON run configuration overlaid on the preset")->check(CLI::ExistingFile);
  cmd.add_option("--preset", c.preset, "Base configuration")->check(CLI::IsMember({"desk", "paper"}));
  cmd.add_option("--seed", c.seed, "Random seed (overrides the config file)");
  auto* o = cmd.add_option("--out", c.out, "Output directory");
  if (out_required) o->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = preset_config(c.preset);
  if (!c.config.empty()) cfg = load_config(c.config, cfg);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.paths.out = c.out;
  return cfg;
}

std::uint64_t item_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index), std::uint32_t(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t(words[0]) << 32) | words[1];
}

std::vector<fs::path> list_wavs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("audio directory " + dir.string() + " not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void write_frame_map(const fs::path& path, const loss::FrameLossMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (auto f : map.flags) out << (f ? '1' : '0') << '\n';
}

std::size_t packets_for(std::size_t samples) {
  return (samples + loss::kPacketSamples - 1) / loss::kPacketSamples;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  Common common;
  std::size_t count = 1;
  std::size_t packets = 50;
  double rate = 0.1;
  std::size_t max_burst = loss::kDefaultMaxBurstPackets;
  std::string markov;
  std::string match;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.common);
  if (a.rate < 0 || a.rate > 1) throw ParameterError("--rate must lie in [0, 1]");
  if (a.max_burst == 0) throw ParameterError("--max-burst must be >= 1");
  std::optional<loss::MarkovModel> markov;
  if (!a.markov.empty()) {
    if (a.markov != "wlan") throw ParameterError("unknown Markov preset '" + a.markov + "' (expected wlan)");
    markov = loss::MarkovModel::wlan();
  }

  // Either fixed-length traces named trace_NNN or one trace per WAV, sized
  // to cover it and named after it so that apply/eval can pair them.
  std::vector<std::pair<std::string, std::size_t>> jobs;
  if (!a.match.empty()) {
    for (const auto& wav : list_wavs(a.match)) {
      const auto clip = audio::read_wav(wav);
      jobs.emplace_back(wav.stem().string(), packets_for(clip.size()));
    }
  } else {
    for (std::size_t i = 0; i < a.count; ++i) {
      std::ostringstream name;
      name << "trace_" << std::setw(3) << std::setfill('0') << i;
      jobs.emplace_back(name.str(), a.packets);
    }
  }

  const fs::path dir = cfg.paths.out;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  if (markov) {
    manifest["generator"] = "markov";
    manifest["preset"] = a.markov;
  } else {
    manifest["generator"] = "random";
    manifest["rate"] = a.rate;
    manifest["max_burst_packets"] = a.max_burst;
  }
  manifest["traces"] = nlohmann::json::array();
  std::size_t lost = 0, total = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& [name, packets] = jobs[i];
    const std::uint64_t seed = item_seed(cfg.seed, i);
    const loss::PacketTrace t = markov ? loss::gen_markov_trace(packets, *markov, seed)
                                       : loss::gen_random_trace(packets, a.rate, a.max_burst, seed);
    loss::write_trace(dir / (name + ".txt"), t);
    lost += std::size_t(std::count(t.flags.begin(), t.flags.end(), std::uint8_t{1}));
    total += t.size();
    manifest["traces"].push_back({{"file", name + ".txt"}, {"seed", seed}, {"packets", packets}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  out << "wrote " << jobs.size() << " traces to " << dir.string() << ", aggregate loss rate "
      << (total ? double(lost) / double(total) : 0.0) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ApplyArgs {
  Common common;
  std::string audio;
  std::string traces;
};

int cmd_apply(const ApplyArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(a.common);
  const fs::path dir = cfg.paths.out;
  fs::create_directories(dir);
  std::size_t written = 0;
  std::vector<std::string> problems;
  for (const auto& wav : list_wavs(a.audio)) {
    const std::string name = wav.stem().string();
    const fs::path trace_path = fs::path(a.traces) / (name + ".txt");
    try {
      if (!fs::exists(trace_path)) throw ConfigError("no trace " + trace_path.string());
      const auto lossy = loss::apply_trace(audio::read_wav(wav), loss::read_trace(trace_path));
      audio::write_wav(dir / (name + ".wav"), lossy.audio);
      write_frame_map(dir / (name + ".map.txt"), lossy.map);
      ++written;
    } catch (const Error& e) {
      problems.push_back(name + ": " + e.what());
    }
  }
  for (const auto& p : problems) err << "apply: " << p << '\n';
  out << "wrote " << written << " lossy clips to " << dir.string() << '\n';
  return problems.empty() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------

struct CorpusArgs {
  Common common;
  std::size_t count = 10;
  double seconds = 1.0;
};

int cmd_corpus(const CorpusArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.common);
  if (a.count == 0 || !(a.seconds > 0)) throw ParameterError("--count and --seconds must be positive");
  train::write_corpus(cfg.paths.out, train::make_synthetic_corpus(a.count, a.seconds, cfg.seed));
  out << "wrote " << a.count << " synthetic clips to " << cfg.paths.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string corpus;
  std::string pretrained;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::size_t log_every = 50;
};

train::Observer progress(std::ostream& out, std::size_t every) {
  return [&out, every](const train::LossRecord& r) {
    if (every == 0 || r.step % every != 1 % every) return;
    out << "step " << r.step;
    for (const auto& [k, v] : r.values) out << ' ' << k << '=' << v;
    out << '\n' << std::flush;
  };
}

int cmd_pretrain(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a.common);
  if (!a.corpus.empty()) cfg.paths.corpus = a.corpus;
  if (a.steps) cfg.stage1.steps = *a.steps;
  if (a.epochs) cfg.stage1.epochs = *a.epochs;
  if (a.batch) cfg.stage1.batch_size = *a.batch;
  if (cfg.paths.corpus.empty()) throw ConfigError("no corpus given (--corpus or paths.corpus)");
  if (cfg.paths.out.empty()) throw ConfigError("no output directory given (--out or paths.out)");
  cfg.validate();
  const Checkpoint ck = train::train_stage1(train::load_corpus(cfg.paths.corpus), cfg, cfg.paths.out,
                                            progress(out, a.log_every));
  out << "stage-1 checkpoint at step " << ck.step << " written to " << cfg.paths.out << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a.common);
  if (!a.corpus.empty()) cfg.paths.corpus = a.corpus;
  if (!a.pretrained.empty()) cfg.paths.pretrained = a.pretrained;
  if (a.steps) cfg.stage2.steps = *a.steps;
  if (a.epochs) cfg.stage2.epochs = *a.epochs;
  if (a.batch) cfg.stage2.batch_size = *a.batch;
  if (cfg.paths.corpus.empty()) throw ConfigError("no corpus given (--corpus or paths.corpus)");
  if (cfg.paths.pretrained.empty()) throw ConfigError("no pretrained checkpoint given (--pretrained)");
  if (cfg.paths.out.empty()) throw ConfigError("no output directory given (--out or paths.out)");
  cfg.validate();
  const Checkpoint ck = train::train_stage2(train::load_corpus(cfg.paths.corpus), cfg, cfg.paths.pretrained,
                                            cfg.paths.out, progress(out, a.log_every));
  out << "stage-2 checkpoint at step " << ck.step << " written to " << cfg.paths.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ModelArgs {
  std::string checkpoint;
  bool no_fade = false;
};

struct LoadedModel {
  std::unique_ptr<model::ConcealmentModel> model;
  post::FadePolicy fade;
};

LoadedModel load_for_inference(const std::string& dir, const Common& common) {
  const Checkpoint ck = load_checkpoint(dir);
  // The checkpoint's own snapshot is the base; a --config file may still
  // override post-processing settings.
  RunConfig cfg = from_json(ck.config, preset_config(common.preset));
  if (!common.config.empty()) cfg = load_config(common.config, cfg);
  cfg.fade.validate();
  return {train::load_model(ck), cfg.fade};
}

struct InferArgs {
  Common common;
  ModelArgs model;
  std::string input;
  std::string traces;
};

int cmd_infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(a.common);
  const LoadedModel m = load_for_inference(a.model.checkpoint, a.common);
  std::vector<fs::path> inputs;
  if (fs::is_regular_file(a.input)) {
    inputs.push_back(a.input);
  } else {
    inputs = list_wavs(a.input);
  }
  const fs::path dir = cfg.paths.out;
  fs::create_directories(dir);
  std::vector<std::string> problems;
  for (const auto& wav : inputs) {
    const std::string name = wav.stem().string();
    try {
      const audio::AudioClip clip = audio::read_wav(wav);
      loss::PacketTrace trace;
      if (!a.traces.empty()) {
        const fs::path tp = fs::is_regular_file(a.traces) ? fs::path(a.traces) : fs::path(a.traces) / (name + ".txt");
        if (!fs::exists(tp)) throw ConfigError("no trace " + tp.string());
        trace = loss::read_trace(tp);
      } else {
        trace.flags.assign(packets_for(clip.size()), 0);
      }
      const auto lossy = loss::apply_trace(clip, trace);
      audio::write_wav(dir / (name + ".wav"), post::conceal(*m.model, lossy, m.fade, !a.model.no_fade));
    } catch (const Error& e) {
      problems.push_back(name + ": " + e.what());
    }
  }
  for (const auto& p : problems) err << "infer: " << p << '\n';
  out << "concealed " << inputs.size() - problems.size() << " clips into " << dir.string() << '\n';
  return problems.empty() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  ModelArgs model;
  std::string refs;
  std::string traces;
  std::string export_dir;
  std::vector<std::string> systems;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(a.common);
  std::vector<std::string> names = a.systems;
  if (names.empty()) {
    names = {"zero", "repeat_last_packet"};
    if (!a.model.checkpoint.empty()) names.push_back("model");
  }
  std::optional<LoadedModel> m;
  std::vector<metrics::System> systems;
  for (const auto& name : names) {
    if (name == "passthrough") {
      systems.push_back({name, [](const loss::LossyClip&, const audio::AudioClip& ref) { return ref; }});
    } else if (name == "model") {
      if (a.model.checkpoint.empty()) throw ConfigError("system 'model' needs --checkpoint");
      if (!m) m = load_for_inference(a.model.checkpoint, a.common);
      const bool fade = !a.model.no_fade;
      const LoadedModel* lm = &*m;
      systems.push_back({name, [lm, fade](const loss::LossyClip& l, const audio::AudioClip&) {
                           return post::conceal(*lm->model, l, lm->fade, fade);
                         }});
    } else {
      const metrics::BaselineMode mode = metrics::parse_baseline(name);
      systems.push_back({name, [mode](const loss::LossyClip& l, const audio::AudioClip&) {
                           return metrics::baseline_conceal(l.audio, l.map, mode);
                         }});
    }
  }

  const metrics::EvalReport report = metrics::evaluate_corpus(a.refs, systems, a.traces, a.export_dir);
  const fs::path dir = cfg.paths.out;
  report.write_rows_csv(dir / "mcd_rows.csv");
  report.write_summary_csv(dir / "mcd_summary.csv");
  for (const auto& miss : report.missing) err << "eval: skipped " << miss << '\n';
  out << std::left << std::setw(20) << "system" << std::setw(12) << "category" << std::setw(8) << "count"
      << "mean MCD (dB)\n";
  for (const auto& g : report.aggregates) {
    out << std::setw(20) << g.system << std::setw(12) << g.category << std::setw(8) << g.count << std::fixed
        << std::setprecision(3) << g.mean_mcd_db << '\n';
  }
  if (report.rows.empty()) throw ConfigError("no utterance could be evaluated");
  return kExitOk;
}

void add_model_flags(CLI::App& cmd, ModelArgs& m, bool required) {
  auto* o = cmd.add_option("--checkpoint", m.checkpoint, "Trained checkpoint directory");
  if (required) o->required();
  cmd.add_flag("--no-fade", m.no_fade, "Disable the long-burst fade");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Packet loss concealment: trace simulation, training, inference and evaluation", "plc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate packet-loss traces");
  add_common(*s, sim.common, true);
  s->add_option("--count", sim.count, "Number of traces")->check(CLI::PositiveNumber);
  s->add_option("--packets", sim.packets, "Packets (20 ms) per trace")->check(CLI::PositiveNumber);
  s->add_option("--rate", sim.rate, "Target loss rate of the random generator");
  s->add_option("--max-burst", sim.max_burst, "Longest loss run in packets");
  s->add_option("--markov", sim.markov, "Use a Markov preset instead of the random generator (wlan)");
  s->add_option("--match", sim.match, "Write one covering trace per WAV in this directory")->check(CLI::ExistingDirectory);

  ApplyArgs app_args;
  auto* ap = app.add_subcommand("apply", "Zero-fill WAVs with matching traces and write frame maps");
  add_common(*ap, app_args.common, true);
  ap->add_option("--audio", app_args.audio, "Directory of clean WAVs")->required();
  ap->add_option("--traces", app_args.traces, "Directory of <name>.txt traces")->required();

  CorpusArgs corp;
  auto* co = app.add_subcommand("corpus", "Write a synthetic speech-like corpus");
  add_common(*co, corp.common, true);
  co->add_option("--count", corp.count, "Number of clips");
  co->add_option("--seconds", corp.seconds, "Clip duration");

  TrainArgs pre;
  auto* pt = app.add_subcommand("pretrain", "Stage 1: contrastive pretraining of the semantic branch");
  add_common(*pt, pre.common, false);
  pt->add_option("--corpus", pre.corpus, "Directory of clean training WAVs");
  pt->add_option("--steps", pre.steps, "Update count");
  pt->add_option("--epochs", pre.epochs, "Epoch count (overrides --steps when > 0)");
  pt->add_option("--batch", pre.batch, "Batch size");
  pt->add_option("--log-every", pre.log_every, "Progress interval in steps (0 = quiet)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Stage 2: adversarial training with the semantic branch frozen");
  add_common(*t, tr.common, false);
  t->add_option("--corpus", tr.corpus, "Directory of clean training WAVs");
  t->add_option("--pretrained", tr.pretrained, "Stage-1 checkpoint directory");
  t->add_option("--steps", tr.steps, "Update count");
  t->add_option("--epochs", tr.epochs, "Epoch count (overrides --steps when > 0)");
  t->add_option("--batch", tr.batch, "Batch size");
  t->add_option("--log-every", tr.log_every, "Progress interval in steps (0 = quiet)");

  InferArgs inf;
  auto* in = app.add_subcommand("infer", "Conceal losses in a WAV file or directory");
  add_common(*in, inf.common, true);
  add_model_flags(*in, inf.model, true);
  in->add_option("--input", inf.input, "WAV file or directory")->required()->check(CLI::ExistingPath);
  in->add_option("--traces", inf.traces, "Trace file or directory of <name>.txt (default: no loss)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "MCD report of concealment systems over a reference corpus");
  add_common(*e, ev.common, true);
  add_model_flags(*e, ev.model, false);
  e->add_option("--refs", ev.refs, "Directory of clean reference WAVs")->required();
  e->add_option("--traces", ev.traces, "Directory of <name>.txt traces")->required();
  e->add_option("--export", ev.export_dir, "Write concealed audio to <dir>/<system>/<name>.wav");
  e->add_option("--systems", ev.systems, "zero, repeat_last_packet, model, passthrough")->delimiter(',');

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("plc");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, out, err);
    return kExitUsage;
  }

  try {
    kernels::set_num_workers(configured_workers());
    if (s->parsed()) return cmd_simulate(sim, out);
    if (ap->parsed()) return cmd_apply(app_args, out, err);
    if (co->parsed()) return cmd_corpus(corp, out);
    if (pt->parsed()) return cmd_pretrain(pre, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (in->parsed()) return cmd_infer(inf, out, err);
    if (e->parsed()) return cmd_eval(ev, out, err);
  } catch (const ConfigError& ex) {
    err << "plc: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& ex) {
    err << "plc: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& ex) {
    err << "plc: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "plc: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace plc::cli
