#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "plc/errors.hpp"
#include "plc/quantizer.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"
#include "support/loss_oracles.hpp"

using namespace plc;
using namespace plc::model;
using plc::testing::grad_check;
using plc::testing::probe;
using plc::testing::random_tensor;

namespace {

oracle::Vec random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  oracle::Vec v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Packs anchor and candidates into the (1, C) and (1, K+1, C) layout.
std::pair<Var, Var> pack(const oracle::Vec& x, const oracle::Vec& y, const std::vector<oracle::Vec>& d,
                         bool requires_grad = false) {
  const std::size_t C = x.size();
  Tensor a({1, C}, std::vector<Real>(x));
  std::vector<Real> c(y);
  for (const auto& v : d) c.insert(c.end(), v.begin(), v.end());
  return {Var(a, requires_grad), Var(Tensor({1, d.size() + 1, C}, c), requires_grad)};
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

oracle::Vec column(const Tensor& x, std::size_t b, std::size_t t) {
  oracle::Vec v(x.dim(1));
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = x.at({b, c, t});
  return v;
}

// The contrastive loss evaluated from raw tensors and the candidate positions the library drew.
double oracle_pretrain(const Tensor& predicted, const Tensor& quantized, const Tensor& probs, std::size_t groups,
                       const Tensor& lossmap, const std::vector<FramePosition>& candidates, std::size_t K,
                       double kappa, double alpha) {
  std::vector<std::pair<std::size_t, std::size_t>> targets;
  for (std::size_t b = 0; b < lossmap.dim(0); ++b)
    for (std::size_t t = 0; t < lossmap.dim(1); ++t)
      if (lossmap.at({b, t}) == 1) targets.push_back({b, t});
  double lm = 0;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    const auto [b, t] = targets[n];
    REQUIRE(candidates[n * (K + 1)].batch == b);
    REQUIRE(candidates[n * (K + 1)].frame == t);
    std::vector<oracle::Vec> d;
    for (std::size_t j = 1; j <= K; ++j) {
      const auto& p = candidates[n * (K + 1) + j];
      d.push_back(column(quantized, p.batch, p.frame));
    }
    lm += oracle::contrastive(column(predicted, b, t), column(quantized, b, t), d, kappa);
  }
  lm /= double(targets.size());
  const std::size_t B = probs.dim(0), T = probs.dim(2), V = probs.dim(1) / groups;
  std::vector<oracle::Vec> pbar(groups, oracle::Vec(V, 0.0));
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t v = 0; v < V; ++v) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t) pbar[g][v] += probs.at({b, g * V + v, t});
      pbar[g][v] /= double(B * T);
    }
  return oracle::combined(lm, oracle::diversity(pbar), alpha);
}

Tensor random_probs(std::size_t B, std::size_t G, std::size_t V, std::size_t T, std::mt19937_64& rng) {
  return group_softmax(Var(random_tensor({B, G * V, T}, rng, 2.0)), G, 1.0).value();
}

}  // namespace

TEST_CASE("contrastive loss anchors") {
  std::mt19937_64 rng(1);
  const oracle::Vec x = random_vec(8, rng);
  std::vector<oracle::Vec> same(100, x);
  auto [a, c] = pack(x, x, same);
  CHECK(contrastive_loss(a, c, 0.1).item() == doctest::Approx(std::log(101.0)).epsilon(1e-12));

  oracle::Vec e0(101, 0.0);
  e0[0] = 1;
  std::vector<oracle::Vec> ortho;
  for (std::size_t i = 1; i <= 100; ++i) {
    oracle::Vec e(101, 0.0);
    e[i] = 1;
    ortho.push_back(e);
  }
  auto [a2, c2] = pack(e0, e0, ortho);
  const double expected = std::log(1 + 100 * std::exp(-10.0));
  CHECK(rel(contrastive_loss(a2, c2, 0.1).item(), expected) < 1e-9);
  CHECK(expected == doctest::Approx(4.530e-3).epsilon(1e-3));
}

TEST_CASE("contrastive loss matches the brute-force evaluator") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> dim(2, 16), count(1, 120);
  std::uniform_real_distribution<double> kappa(0.05, 1.0);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t C = dim(rng), K = count(rng);
    const double k = kappa(rng);
    const oracle::Vec x = random_vec(C, rng), y = random_vec(C, rng);
    std::vector<oracle::Vec> d;
    for (std::size_t i = 0; i < K; ++i) d.push_back(random_vec(C, rng));
    auto [a, c] = pack(x, y, d);
    const double got = contrastive_loss(a, c, k).item();
    CHECK(rel(got, oracle::contrastive(x, y, d, k)) < 1e-6);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("contrastive loss is scale invariant and rejects zero vectors") {
  std::mt19937_64 rng(3);
  const oracle::Vec x = random_vec(6, rng), y = random_vec(6, rng);
  std::vector<oracle::Vec> d{random_vec(6, rng), random_vec(6, rng), random_vec(6, rng)};
  auto [a, c] = pack(x, y, d);
  const double base = contrastive_loss(a, c, 0.1).item();
  for (double s : {0.01, 3.0, 250.0}) {
    std::vector<oracle::Vec> scaled = d;
    for (auto& v : scaled[1]) v *= s;
    oracle::Vec ys = y;
    for (auto& v : ys) v *= s;
    auto [a2, c2] = pack(x, ys, scaled);
    CHECK(std::abs(contrastive_loss(a2, c2, 0.1).item() - base) < 1e-6);
  }
  auto [a3, c3] = pack(oracle::Vec(6, 0.0), y, d);
  CHECK_THROWS_AS(contrastive_loss(a3, c3, 0.1), MathError);
  auto [a4, c4] = pack(x, oracle::Vec(6, 0.0), d);
  CHECK_THROWS_AS(contrastive_loss(a4, c4, 0.1), MathError);
}

TEST_CASE("diversity loss closed forms and oracle") {
  CHECK(diversity_loss(Var(Tensor({2, 320}, 1.0 / 320))).item() ==
        doctest::Approx(-std::log(320.0) / 320).epsilon(1e-12));
  CHECK(-std::log(320.0) / 320 == doctest::Approx(-0.018026).epsilon(1e-4));
  Tensor onehot({2, 5});
  onehot.at({0, 3}) = 1;
  onehot.at({1, 0}) = 1;
  CHECK(diversity_loss(Var(onehot)).item() == 0.0);
  CHECK(diversity_loss(Var(Tensor({1, 2}, 0.5))).item() == doctest::Approx(-std::log(2.0) / 2).epsilon(1e-12));
  CHECK_THROWS_AS(diversity_loss(Var(Tensor({1, 2}, 0.6))), MathError);

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> gdist(1, 3), vdist(1, 400);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t G = gdist(rng), V = vdist(rng);
    const Tensor p = group_softmax(Var(random_tensor({1, G * V, 1}, rng, 3.0)), G, 1.0).value().reshaped({G, V});
    std::vector<oracle::Vec> rows(G, oracle::Vec(V));
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t v = 0; v < V; ++v) rows[g][v] = p.at({g, v});
    const double got = diversity_loss(Var(p)).item();
    CHECK(rel(got, oracle::diversity(rows)) < 1e-6);
    CHECK(got <= 0.0);
    CHECK(got >= -std::log(double(V)) / double(V) - 1e-12);
  }
}

TEST_CASE("combined objective matches the brute-force evaluator") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> bdist(1, 3), tdist(3, 10), cdist(2, 8), kdist(1, 12);
  std::bernoulli_distribution lost(0.4);
  int evaluated = 0;
  for (int trial = 0; evaluated < 110; ++trial) {
    const std::size_t B = bdist(rng), T = tdist(rng), C = cdist(rng), G = 2, V = 5;
    Tensor lossmap({B, T});
    for (auto& v : lossmap.values()) v = lost(rng) ? 1.0 : 0.0;
    ContrastiveConfig cfg;
    cfg.distractors = kdist(rng);
    cfg.kappa = 0.1;
    cfg.diversity_weight = trial % 5 == 0 ? 0.0 : 0.1;
    const Tensor pred = random_tensor({B, C, T}, rng), quant = random_tensor({B, C, T}, rng);
    const Tensor probs = random_probs(B, G, V, T, rng);
    std::mt19937_64 draw(trial);
    const PretrainLoss l = pretrain_objective(Var(pred), Var(quant), Var(probs), G, lossmap, cfg, draw);
    if (l.skipped) {
      CHECK(lost_positions(lossmap).size() < 2);
      continue;
    }
    ++evaluated;
    const double expected =
        oracle_pretrain(pred, quant, probs, G, lossmap, l.candidates, cfg.distractors, cfg.kappa, cfg.diversity_weight);
    CHECK(rel(l.total.item(), expected) < 1e-6);
    if (cfg.diversity_weight == 0.0) CHECK(l.total.item() == l.contrastive.item());
  }
}

TEST_CASE("full pretraining loss on a toy batch matches the evaluator") {
  std::mt19937_64 rng(6);
  Initializer init(7);
  EncoderConfig ec;
  SemanticEncoder enc(ec, init);
  QuantizerConfig qc;
  GumbelQuantizer quant(qc, init);
  PretrainBatch batch;
  batch.clean = random_tensor({2, 2, 8, 161}, rng, 0.3);
  batch.lossy = batch.clean;
  batch.lossmap = Tensor({2, 8});
  batch.lossmap.at({0, 3}) = batch.lossmap.at({0, 4}) = batch.lossmap.at({1, 6}) = 1;
  for (std::size_t t : {3u, 4u})
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t f = 0; f < 161; ++f) batch.lossy.at({0, c, t, f}) = 0;
  ContrastiveConfig cfg;

  std::mt19937_64 draw(11), replay(11);
  const PretrainLoss l = pretrain_loss(enc, quant, batch, 1.5, cfg, draw);
  REQUIRE(!l.skipped);
  CHECK(l.targets == 3);
  CHECK(l.candidates.size() == 3 * 101);

  const Var clean = enc.extract(make_encoder_input(batch.clean, Tensor({2, 8})));
  const QuantizerOutput q = quant.forward(clean, 1.5, false, &replay);
  const Tensor pred = enc.forward(batch.lossy, batch.lossmap).value();
  const double expected = oracle_pretrain(pred, q.quantized.value(), q.probs.value(), 2, batch.lossmap, l.candidates,
                                          100, 0.1, 0.1);
  CHECK(rel(l.total.item(), expected) < 1e-6);

  PretrainBatch none = batch;
  none.lossmap = Tensor({2, 8});
  none.lossmap.at({1, 2}) = 1;
  CHECK(pretrain_loss(enc, quant, none, 1.5, cfg, draw).skipped);
}

TEST_CASE("loss gradients") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    Var a(random_tensor({3, 4}, rng), true), c(random_tensor({3, 6, 4}, rng), true);
    const auto r = grad_check([&] { return contrastive_loss(a, c, 0.1); }, {a, c});
    CHECK(r.relative_error < 1e-4);
  }
  Var p(random_probs(1, 2, 7, 1, rng).reshaped({2, 7}), true);
  CHECK(grad_check([&] { return diversity_loss(p); }, {p}).relative_error < 1e-4);

  Var logits(random_tensor({2, 12, 3}, rng), true);
  CHECK(grad_check([&] { return probe(group_softmax(logits, 3, 0.7)); }, {logits}).relative_error < 1e-6);
  Var w(random_tensor({2, 12, 3}, rng), true), cb(random_tensor({3, 4, 5}, rng), true);
  CHECK(grad_check([&] { return probe(codebook_lookup(w, cb)); }, {w, cb}).relative_error < 1e-6);
  Var probs(random_tensor({2, 12, 3}, rng), true);
  CHECK(grad_check([&] { return probe(average_probs(probs, 3)); }, {probs}).relative_error < 1e-6);
  Var x(random_tensor({2, 4, 5}, rng), true);
  const std::vector<FramePosition> pos{{0, 1}, {1, 4}, {0, 1}};
  CHECK(grad_check([&] { return probe(gather_frames(x, pos)); }, {x}).relative_error < 1e-6);
  // End to end through the softmax into logits.
  Var lg(random_tensor({2, 10, 3}, rng), true);
  CHECK(grad_check([&] { return diversity_loss(average_probs(group_softmax(lg, 2, 1.0), 2)); }, {lg})
            .relative_error < 1e-4);
}

TEST_CASE("straight-through gradients follow the soft weights") {
  std::mt19937_64 rng(9);
  Var logits(random_tensor({1, 8, 4}, rng), true);
  std::mt19937_64 n1(3), n2(3);
  const GumbelSelection sel = gumbel_select(logits, 2, 0.8, false, &n1);
  backward(probe(sel.weights));
  const Tensor straight = logits.grad();
  logits.zero_grad();

  // Same noise, differentiated through the soft weights directly.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor noise(logits.shape());
  for (auto& v : noise.values()) v = -std::log(-std::log(std::clamp(u(n2), 1e-12, 1.0 - 1e-12)));
  const Var soft = group_softmax(add(logits, Var(noise)), 2, 0.8);
  CHECK(max_abs_diff(soft.value(), sel.soft) < 1e-15);
  backward(probe(soft));
  CHECK(max_abs_diff(logits.grad(), straight) < 1e-15);
  for (double v : sel.weights.value().values()) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("quantizer forward") {
  std::mt19937_64 rng(10);
  Initializer init(11);
  QuantizerConfig qc;
  GumbelQuantizer quant(qc, init);
  const Var feats(random_tensor({2, 240, 6}, rng));
  const QuantizerOutput hard = quant.forward(feats, 1.0, true);
  CHECK(hard.quantized.shape() == Shape{2, 240, 6});
  // Identity projection at initialisation.
  CHECK(hard.quantized.value() == hard.codewords.value());
  const Tensor& cb = quant.codebook().value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t g = 0; g < 2; ++g)
      for (std::size_t t = 0; t < 6; ++t) {
        const std::size_t v = hard.selected[(b * 2 + g) * 6 + t];
        for (std::size_t d = 0; d < 120; ++d) CHECK(hard.codewords.value().at({b, g * 120 + d, t}) == cb.at({g, v, d}));
      }
  const Tensor& p = hard.probs.value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t g = 0; g < 2; ++g)
      for (std::size_t t = 0; t < 6; ++t) {
        double total = 0;
        for (std::size_t v = 0; v < 320; ++v) total += p.at({b, g * 320 + v, t});
        CHECK(std::abs(total - 1) < 1e-6);
      }
  CHECK_THROWS_AS(quant.forward(feats, 0.0, true), ParameterError);
  CHECK_THROWS_AS(quant.forward(feats, -1.0, false, &rng), ParameterError);

  QuantizerConfig single = qc;
  single.entries = 1;
  GumbelQuantizer one(single, init);
  const QuantizerOutput s = one.forward(feats, 0.7, false, &rng);
  for (double v : s.probs.value().values()) CHECK(v == doctest::Approx(1.0));
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t d = 0; d < 120; ++d) CHECK(s.codewords.value().at({1, g * 120 + d, 3}) == one.codebook().value().at({g, 0, d}));
}

TEST_CASE("soft selection concentrates as the temperature falls") {
  std::mt19937_64 rng(12);
  const Var logits(random_tensor({1, 320, 1}, rng));
  // Mean soft weight on the selected entry, and how often that entry carries
  // the majority of the weight.
  auto stats = [&](double tau) {
    const std::size_t draws = 4000;
    double mass = 0;
    std::size_t majority = 0;
    for (std::size_t i = 0; i < draws; ++i) {
      const GumbelSelection sel = gumbel_select(logits, 1, tau, false, &rng);
      const std::size_t chosen = sel.selected[0];
      REQUIRE(*std::max_element(sel.soft.values().begin(), sel.soft.values().end()) == sel.soft[chosen]);
      mass += sel.soft[chosen];
      majority += sel.soft[chosen] > 0.5;
    }
    return std::pair{mass / draws, double(majority) / draws};
  };
  const auto [mass_warm, major_warm] = stats(0.1);
  const auto [mass_cold, major_cold] = stats(0.01);
  CHECK(mass_cold >= 0.99);
  CHECK(major_cold >= 0.99);
  CHECK(mass_cold > mass_warm);
  CHECK(major_cold >= major_warm);
}

TEST_CASE("distractor sampling") {
  std::mt19937_64 rng(13);
  std::vector<FramePosition> pool;
  for (std::size_t i = 0; i < 6; ++i) pool.push_back({i % 2, i});
  const FramePosition target{0, 0};
  auto exact = sample_distractors(pool, target, 5, rng);
  CHECK(exact.size() == 5);
  for (const auto& p : pool) {
    if (p == target) continue;
    CHECK(std::count(exact.begin(), exact.end(), p) == 1);
  }
  const auto repeated = sample_distractors({{0, 0}, {1, 3}}, target, 3, rng);
  CHECK(repeated == std::vector<FramePosition>(3, FramePosition{1, 3}));
  CHECK_THROWS_AS(sample_distractors({{0, 0}}, target, 3, rng), MathError);

  std::mt19937_64 a(5), b(5);
  CHECK(sample_distractors(pool, target, 3, a) == sample_distractors(pool, target, 3, b));

  std::vector<FramePosition> eleven;
  for (std::size_t i = 0; i < 11; ++i) eleven.push_back({0, i});
  std::map<std::size_t, std::size_t> hits;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) ++hits[sample_distractors(eleven, {0, 4}, 1, rng)[0].frame];
  CHECK(hits.size() == 10);
  CHECK(hits.count(4) == 0);
  for (const auto& [frame, count] : hits) CHECK(std::abs(double(count) / n - 0.1) <= 0.01);
}

TEST_CASE("temperature annealing") {
  QuantizerConfig c;
  CHECK(anneal_temperature(0, c) == 2.0);
  CHECK(anneal_temperature(10000000, c) == 0.5);
  CHECK(anneal_temperature(138629, c) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(anneal_temperature(1, c) == doctest::Approx(2.0 * 0.999995));
}
