#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "plc/checkpoint.hpp"
#include "plc/config.hpp"
#include "plc/errors.hpp"
#include "plc/ops.hpp"
#include "plc/training.hpp"
#include "support/toy_config.hpp"

using namespace plc;
using namespace plc::train;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("plc_training_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::vector<Real> flatten(const std::vector<NamedParameter>& params) {
  std::vector<Real> out;
  for (const auto& p : params) out.insert(out.end(), p.var.value().values().begin(), p.var.value().values().end());
  return out;
}

const Corpus& toy_corpus() {
  static const Corpus corpus = make_synthetic_corpus(3, 0.5, 5);
  return corpus;
}

// Sets grad = g by back-propagating sum(p * g).
void set_grad(const Var& p, const Tensor& g) { backward(sum(mul(p, Var(g)))); }

}  // namespace

TEST_CASE("adam matches the bias-corrected update") {
  const AdamConfig cfg{0.01, 0.8, 0.99, 1e-8};
  Var p(Tensor({3}, {0.5, -0.25, 1.0}), true);
  Adam adam({{"p", p}}, cfg);
  const Tensor g1({3}, {0.1, -2.0, 0.0});
  const Tensor g2({3}, {0.3, 1.0, -0.5});

  std::vector<double> x = {0.5, -0.25, 1.0}, m(3, 0), v(3, 0);
  int t = 0;
  for (const Tensor* g : {&g1, &g2}) {
    adam.zero_grad();
    set_grad(p, *g);
    adam.step();
    ++t;
    for (std::size_t i = 0; i < 3; ++i) {
      const double gi = (*g)[i];
      m[i] = float(cfg.beta1 * m[i] + (1 - cfg.beta1) * gi);
      v[i] = float(cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi);
      const double mh = m[i] / (1 - std::pow(cfg.beta1, t)), vh = v[i] / (1 - std::pow(cfg.beta2, t));
      x[i] = float(x[i] - cfg.lr * mh / (std::sqrt(vh) + cfg.eps));
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(p.value()[i] == doctest::Approx(x[i]).epsilon(1e-6));
  }
  CHECK(adam.steps() == 2);
  CHECK(adam.state().size() == 2);
}

TEST_CASE("adam leaves parameters without a gradient untouched") {
  Var a(Tensor({2}, {1.0, 2.0}), true), b(Tensor({2}, {3.0, 4.0}), true);
  Adam adam({{"a", a}, {"b", b}}, AdamConfig{});
  set_grad(a, Tensor({2}, {1.0, 1.0}));
  adam.step();
  CHECK(b.value()[0] == 3.0);
  CHECK(b.value()[1] == 4.0);
  CHECK(a.value()[0] < 1.0);
  CHECK_THROWS_AS(adam.load_state({}), CorruptionError);
}

TEST_CASE("checkpoints round-trip bit-exactly and detect corruption") {
  TempDir tmp("ck");
  model::ConcealmentModel m(testing::toy_model_config(), 3);
  Checkpoint ck;
  ck.stage = kStageContrastive;
  ck.step = 17;
  ck.seed = 3;
  ck.frozen = {"semantic"};
  ck.config = to_json(testing::toy_run_config());
  ck.parameters = snapshot(m.named_parameters());
  save_checkpoint(tmp.path, ck);

  const Checkpoint back = load_checkpoint(tmp.path);
  CHECK(back.stage == ck.stage);
  CHECK(back.step == 17);
  CHECK(back.seed == 3);
  CHECK(back.frozen == ck.frozen);
  CHECK(back.config == ck.config);
  REQUIRE(back.parameters.size() == ck.parameters.size());
  for (std::size_t i = 0; i < ck.parameters.size(); ++i) {
    REQUIRE(back.parameters[i].first == ck.parameters[i].first);
    REQUIRE(back.parameters[i].second.shape() == ck.parameters[i].second.shape());
    const auto a = back.parameters[i].second.values();
    const auto b = ck.parameters[i].second.values();
    REQUIRE(std::equal(a.begin(), a.end(), b.begin()));
  }

  SUBCASE("manifest lists every parameter once") {
    std::ifstream in(tmp.path / kManifestName);
    const auto j = nlohmann::json::parse(in);
    std::set<std::string> names;
    for (const auto& e : j.at("parameters")) CHECK(names.insert(e.at("name").get<std::string>()).second);
    CHECK(names.size() == m.named_parameters().size());
  }
  SUBCASE("a restored model reproduces the parameters") {
    auto rebuilt = load_model(back);
    CHECK(flatten(rebuilt->named_parameters()) == flatten(m.named_parameters()));
  }
  SUBCASE("truncated blob names the tensor that no longer fits") {
    const auto size = fs::file_size(tmp.path / kBlobName);
    fs::resize_file(tmp.path / kBlobName, size - 4);
    try {
      load_checkpoint(tmp.path);
      FAIL("expected CorruptionError");
    } catch (const CorruptionError& e) {
      CHECK(std::string(e.what()).find(ck.parameters.back().first) != std::string::npos);
    }
  }
  SUBCASE("missing directory is a configuration error") {
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "nothing"), ConfigError);
  }
}

TEST_CASE("config JSON round trip and validation") {
  RunConfig c = testing::toy_run_config();
  c.seed = 42;
  c.stage2.lr_decay = 0.5;
  const RunConfig back = from_json(to_json(c), RunConfig{});
  CHECK(to_json(back) == to_json(c));
  CHECK(back.seed == 42);

  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"stage1": {"stepz": 3}})"), RunConfig{}), ConfigError);
  try {
    from_json(nlohmann::json::parse(R"({"data": {"bogus": 1}})"), RunConfig{});
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("data.bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"seed": "one"})"), RunConfig{}), ConfigError);

  const RunConfig partial = from_json(nlohmann::json::parse(R"({"stage1": {"steps": 7}})"), RunConfig{});
  CHECK(partial.stage1.steps == 7);
  CHECK(partial.stage1.batch_size == RunConfig{}.stage1.batch_size);

  const RunConfig paper = preset_config("paper");
  CHECK(paper.stage1.epochs == 240);
  CHECK(paper.stage1.batch_size == 256);
  CHECK(paper.stage2.epochs == 50);
  CHECK(paper.stage2.batch_size == 64);
  CHECK_THROWS_AS(preset_config("laptop"), ConfigError);

  TempDir tmp("cfg");
  save_config(tmp.path / "run.json", c);
  CHECK(to_json(load_config(tmp.path / "run.json", RunConfig{})) == to_json(c));
  {
    std::ofstream out(tmp.path / "commented.json");
    out << "{\n  // a comment\n  \"seed\": 3\n}\n";
  }
  CHECK_THROWS_AS(load_config(tmp.path / "commented.json", RunConfig{}), ConfigError);
  CHECK_THROWS_AS(load_config(tmp.path / "absent.json", RunConfig{}), ConfigError);
}

TEST_CASE("worker count comes from the environment") {
  ::unsetenv("PLC_NUM_WORKERS");
  CHECK(configured_workers() == 1);
  ::setenv("PLC_NUM_WORKERS", "0", 1);
  CHECK(configured_workers() == 1);
  ::setenv("PLC_NUM_WORKERS", "3", 1);
  CHECK(configured_workers() == 3);
  ::setenv("PLC_NUM_WORKERS", "many", 1);
  CHECK_THROWS_AS(configured_workers(), ConfigError);
  ::unsetenv("PLC_NUM_WORKERS");
}

TEST_CASE("planned steps") {
  CHECK(steps_per_epoch(10, 4) == 3);
  CHECK(planned_steps(100, 0, 10, 4) == 100);
  CHECK(planned_steps(100, 2, 10, 4) == 6);
}

TEST_CASE("stage 1 is deterministic for a fixed seed") {
  const RunConfig cfg = testing::toy_run_config();
  auto run = [&] {
    model::ConcealmentModel m(cfg.model, cfg.seed);
    ContrastiveTrainer tr(m, toy_corpus(), cfg);
    std::vector<double> losses;
    for (int i = 0; i < 3; ++i) losses.push_back(tr.step().get("total"));
    return std::make_pair(losses, flatten(m.named_parameters()));
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  for (double l : a.first) CHECK(std::isfinite(l));
}

TEST_CASE("stage 2 keeps the semantic branch frozen and trains the rest") {
  const RunConfig cfg = testing::toy_run_config();
  model::ConcealmentModel m(cfg.model, cfg.seed);
  const auto semantic = flatten(m.semantic().named_parameters());
  const auto quantizer = flatten(m.quantizer().named_parameters());
  const auto generator = flatten(m.generator().named_parameters());
  const auto auxiliary = flatten(m.auxiliary().named_parameters());

  AdversarialTrainer tr(m, toy_corpus(), cfg);
  CHECK(AdversarialTrainer::frozen_groups() == std::vector<std::string>{"semantic", "quantizer"});
  for (int i = 0; i < 2; ++i) {
    const LossRecord r = tr.step();
    for (const auto& [name, value] : r.values) CHECK_MESSAGE(std::isfinite(value), name);
  }
  CHECK(flatten(m.semantic().named_parameters()) == semantic);
  CHECK(flatten(m.quantizer().named_parameters()) == quantizer);
  CHECK(flatten(m.generator().named_parameters()) != generator);
  CHECK(flatten(m.auxiliary().named_parameters()) != auxiliary);

  const Checkpoint ck = tr.checkpoint();
  CHECK(ck.stage == kStageAdversarial);
  CHECK(ck.frozen == AdversarialTrainer::frozen_groups());
  CHECK(ck.optimizers.size() == 2);
}

TEST_CASE("stage drivers write checkpoints and reject missing inputs") {
  TempDir tmp("stages");
  RunConfig cfg = testing::toy_run_config();
  cfg.stage1.steps = 2;
  cfg.stage2.steps = 1;
  CHECK_THROWS_AS(train_stage2(toy_corpus(), cfg, tmp.path / "missing", tmp.path / "s2"), ConfigError);

  std::size_t observed = 0;
  train_stage1(toy_corpus(), cfg, tmp.path / "s1", [&](const LossRecord&) { ++observed; });
  CHECK(observed == 2);
  CHECK(fs::exists(tmp.path / "s1" / kManifestName));
  CHECK(fs::exists(tmp.path / "s1" / "train_log.csv"));

  const Checkpoint s2 = train_stage2(toy_corpus(), cfg, tmp.path / "s1", tmp.path / "s2");
  CHECK(s2.step == 1);
  const auto pre = load_checkpoint(tmp.path / "s1");
  auto pretrained = load_model(pre);
  auto trained = load_model(tmp.path / "s2");
  CHECK(flatten(trained->semantic().named_parameters()) == flatten(pretrained->semantic().named_parameters()));

  fs::create_directories(tmp.path / "empty");
  CHECK_THROWS_AS(load_corpus(tmp.path / "empty"), ConfigError);
}
