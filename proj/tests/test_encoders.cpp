#include <random>

#include "doctest.h"
#include "plc/auxiliary_encoder.hpp"
#include "plc/errors.hpp"
#include "plc/semantic_encoder.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"

using namespace plc;
using namespace plc::model;
using plc::testing::frames;
using plc::testing::grad_check;
using plc::testing::probe;
using plc::testing::random_tensor;

namespace {

Tensor random_lossmap(std::size_t b, std::size_t t, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution lost(rate);
  Tensor m({b, t});
  for (auto& v : m.values()) v = lost(rng) ? 1.0 : 0.0;
  return m;
}

void zero_parameters(Module& m) {
  for (Var p : m.parameters()) p.mutable_value().fill(0.0);
}

// Largest difference over frames [0, t) of two (B, C, T[, F]) tensors.
double prefix_diff(const Tensor& a, const Tensor& b, std::size_t t) {
  if (t == 0) return 0;
  return max_abs_diff(frames(a, 0, t), frames(b, 0, t));
}

// Runs `step` on consecutive chunks of `chunk` frames and concatenates along time.
template <typename Step>
Tensor chunked(std::size_t total, std::size_t chunk, Step step) {
  std::vector<Tensor> parts;
  for (std::size_t s = 0; s < total; s += chunk) parts.push_back(step(s, std::min(chunk, total - s)));
  return concat(parts, 2);
}

// Textbook causal grouped attention: softmax over visible keys, scaled by 1/sqrt(d).
Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& valid, std::size_t groups,
                       std::size_t window) {
  const std::size_t B = q.dim(0), C = q.dim(1), T = q.dim(2), d = C / groups;
  Tensor y(q.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> logits;
        std::vector<std::size_t> keys;
        for (std::size_t s = (t >= window ? t - window : 0); s <= t; ++s) {
          if (valid.at({b, s}) == 0) continue;
          double acc = 0;
          for (std::size_t c = 0; c < d; ++c) acc += q.at({b, g * d + c, t}) * k.at({b, g * d + c, s});
          logits.push_back(acc / std::sqrt(double(d)));
          keys.push_back(s);
        }
        if (keys.empty()) continue;
        double mx = *std::max_element(logits.begin(), logits.end()), z = 0;
        for (auto& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t c = 0; c < d; ++c) {
          double acc = 0;
          for (std::size_t i = 0; i < keys.size(); ++i) acc += logits[i] / z * v.at({b, g * d + c, keys[i]});
          y.at({b, g * d + c, t}) = acc;
        }
      }
    }
  }
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// Semantic branch

TEST_CASE("encoder geometry") {
  EncoderConfig c;
  CHECK(c.out_bins() == 6);
  CHECK(c.channels.back() * c.out_bins() == 240);
  CHECK(c.aggregator_receptive_field() == 113);
  EncoderConfig bad = c;
  bad.channels.back() = 41;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("semantic encoder shapes and input stacking") {
  std::mt19937_64 rng(1);
  Initializer init(3);
  SemanticEncoder enc(EncoderConfig{}, init);
  const Tensor cspec = random_tensor({2, 2, 10, 161}, rng);
  const Tensor lossmap = random_lossmap(2, 10, 0.3, 4);

  const Tensor input = make_encoder_input(cspec, lossmap);
  CHECK(input.shape() == Shape{2, 3, 10, 161});
  CHECK(input.at({1, 2, 7, 100}) == lossmap.at({1, 7}));
  CHECK(input.at({1, 1, 7, 100}) == cspec.at({1, 1, 7, 100}));
  CHECK_THROWS_AS(make_encoder_input(cspec, Tensor({2, 9})), ShapeError);

  Var features = enc.extractor().forward(Var(input));
  CHECK(features.shape() == Shape{2, 40, 10, 6});
  CHECK(enc.extract(input).shape() == Shape{2, 240, 10});
  const Var xs = enc.forward(cspec, lossmap);
  CHECK(xs.shape() == Shape{2, 240, 10});
  CHECK(enc.forward(cspec, lossmap).value() == xs.value());
}

TEST_CASE("zeroed semantic encoder maps zero to zero") {
  Initializer init(3);
  SemanticEncoder enc(EncoderConfig{}, init);
  zero_parameters(enc);
  const Var xs = enc.forward(Tensor({1, 2, 6, 161}), Tensor({1, 6}));
  for (double v : xs.value().values()) CHECK(v == 0.0);
}

TEST_CASE("semantic causality probes") {
  std::mt19937_64 rng(2);
  Initializer init(5);
  SemanticEncoder enc(EncoderConfig{}, init);
  const std::size_t T = 12;
  const Tensor cspec = random_tensor({1, 2, T, 161}, rng);
  const Tensor lossmap = random_lossmap(1, T, 0.3, 1);
  const Tensor input = make_encoder_input(cspec, lossmap);
  const Tensor base_features = enc.extractor().forward(Var(input)).value();
  const Tensor base = enc.forward(cspec, lossmap).value();

  for (std::size_t t : {0u, 5u, 7u, 11u}) {
    Tensor c2 = cspec, m2 = lossmap;
    for (std::size_t f = 0; f < 161; ++f) c2.at({0, 0, t, f}) += 1.0;
    m2.at({0, t}) = 1 - m2.at({0, t});
    const Tensor features = enc.extractor().forward(Var(make_encoder_input(c2, m2))).value();
    const Tensor out = enc.forward(c2, m2).value();
    CHECK(prefix_diff(features, base_features, t) == 0.0);
    CHECK(prefix_diff(out, base, t) == 0.0);
    CHECK(max_abs_diff(frames(out, t, 1), frames(base, t, 1)) > 0.0);
  }
}

TEST_CASE("aggregator receptive field is 113 frames") {
  std::mt19937_64 rng(3);
  Initializer init(6);
  EncoderConfig c;
  ContextAggregator agg(c, init);
  const std::size_t T = 130, t = 125;
  const Tensor x = random_tensor({1, 240, T}, rng);
  const Tensor base = agg.forward(Var(x)).value();
  auto perturbed = [&](std::size_t frame) {
    Tensor y = x;
    for (std::size_t ch = 0; ch < 240; ++ch) y.at({0, ch, frame}) += 0.5;
    return agg.forward(Var(y)).value();
  };
  CHECK(max_abs_diff(frames(perturbed(t - 113), t, 1), frames(base, t, 1)) == 0.0);
  CHECK(max_abs_diff(frames(perturbed(t - 112), t, 1), frames(base, t, 1)) > 0.0);
  // Future frames never reach the past.
  CHECK(prefix_diff(perturbed(60), base, 60) == 0.0);
}

TEST_CASE("semantic streaming matches offline") {
  std::mt19937_64 rng(4);
  Initializer init(7);
  SemanticEncoder enc(EncoderConfig{}, init);
  const std::size_t T = 40;
  const Tensor cspec = random_tensor({1, 2, T, 161}, rng);
  const Tensor lossmap = random_lossmap(1, T, 0.3, 2);
  const Tensor offline = enc.forward(cspec, lossmap).value();
  for (std::size_t chunk : {1u, 2u, 7u}) {
    StreamCache cache;
    const Tensor streamed = chunked(T, chunk, [&](std::size_t s, std::size_t n) {
      return enc.forward(frames(cspec, s, n), lossmap.slice(1, s, n), &cache).value();
    });
    CHECK(max_abs_diff(streamed, offline) < 1e-9);
  }
}

TEST_CASE("semantic parameter gradients") {
  std::mt19937_64 rng(5);
  Initializer init(8);
  SemanticEncoder enc(EncoderConfig{}, init);
  const Tensor cspec = random_tensor({1, 2, 5, 161}, rng, 0.5);
  const Tensor lossmap = random_lossmap(1, 5, 0.4, 3);
  const auto r = grad_check([&] { return probe(enc.forward(cspec, lossmap)); }, enc.parameters(), 1e-6, 8);
  CHECK(r.numeric_norm > 0);
  CHECK(r.relative_error < 1e-4);
}

// ---------------------------------------------------------------------------
// Masked attention

TEST_CASE("masked attention without losses is causal attention") {
  std::mt19937_64 rng(6);
  const Tensor q = random_tensor({2, 8, 9}, rng), k = random_tensor({2, 8, 9}, rng), v = random_tensor({2, 8, 9}, rng);
  const Tensor none({2, 9});
  const Tensor all_valid({2, 9}, 1.0);
  const Tensor y = masked_attention(Var(q), Var(k), Var(v), none, 2, 20).value();
  CHECK(max_abs_diff(y, naive_attention(q, k, v, all_valid, 2, 20)) < 1e-12);
  const Tensor yw = masked_attention(Var(q), Var(k), Var(v), none, 2, 3).value();
  CHECK(max_abs_diff(yw, naive_attention(q, k, v, all_valid, 2, 3)) < 1e-12);
}

TEST_CASE("lost query returns the mean of visible received values") {
  std::mt19937_64 rng(7);
  const std::size_t C = 6, T = 6;
  const Tensor q = random_tensor({1, C, T}, rng), k = random_tensor({1, C, T}, rng), v = random_tensor({1, C, T}, rng);
  Tensor lossmap({1, T});
  lossmap.at({0, 1}) = 1;  // lost key inside the window
  lossmap.at({0, 5}) = 1;  // lost query
  // Window 4 at t=5 covers frames 1..5; received among them: 2, 3, 4.
  Tensor weights;
  const Tensor y = masked_attention(Var(q), Var(k), Var(v), lossmap, 1, 4, &weights).value();
  for (std::size_t c = 0; c < C; ++c) {
    const double mean = (v.at({0, c, 2}) + v.at({0, c, 3}) + v.at({0, c, 4})) / 3.0;
    CHECK(std::abs(y.at({0, c, 5}) - mean) < 1e-12);
  }
  // Slot s of query t addresses key t - window + s.
  for (std::size_t t = 0; t < T; ++t) {
    double total = 0;
    for (std::size_t s = 0; s < 5; ++s) {
      const long key = long(t) - 4 + long(s);
      const double w = weights.at({0, 0, t, s});
      CHECK(w >= 0.0);
      total += w;
      if (key < 0 || lossmap.at({0, std::size_t(key)}) != 0) CHECK(w == 0.0);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("query with no visible received frame yields zero") {
  std::mt19937_64 rng(8);
  const Tensor q = random_tensor({1, 4, 5}, rng), k = random_tensor({1, 4, 5}, rng), v = random_tensor({1, 4, 5}, rng);
  Tensor lossmap({1, 5});
  lossmap.at({0, 0}) = 1;
  lossmap.at({0, 3}) = 1;
  lossmap.at({0, 4}) = 1;
  const Tensor y = masked_attention(Var(q), Var(k), Var(v), lossmap, 2, 1).value();
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(y.at({0, c, 0}) == 0.0);  // first frame lost, nothing in the past
    CHECK(y.at({0, c, 4}) == 0.0);  // window 1 sees only frames 3 and 4, both lost
  }
  CHECK_THROWS_AS(masked_attention(Var(q), Var(k), Var(v), Tensor({1, 4}), 2, 1), ShapeError);
}

TEST_CASE("masked attention window invariance") {
  std::mt19937_64 rng(9);
  const std::size_t T = 30, N = 6;
  Tensor q = random_tensor({1, 8, T}, rng), k = random_tensor({1, 8, T}, rng), v = random_tensor({1, 8, T}, rng);
  const Tensor lossmap = random_lossmap(1, T, 0.3, 5);
  const Tensor base = masked_attention(Var(q), Var(k), Var(v), lossmap, 2, N).value();
  const std::size_t t = 25;
  for (std::size_t s = 0; s < t - N; ++s) {
    for (std::size_t c = 0; c < 8; ++c) {
      k.at({0, c, s}) = 9.0 * std::sin(double(s + c));
      v.at({0, c, s}) = -7.0;
    }
  }
  const Tensor out = masked_attention(Var(q), Var(k), Var(v), lossmap, 2, N).value();
  CHECK(max_abs_diff(frames(out, t, T - t), frames(base, t, T - t)) == 0.0);
}

// ---------------------------------------------------------------------------
// Auxiliary branch

TEST_CASE("auxiliary encoder shapes, causality and window") {
  std::mt19937_64 rng(10);
  Initializer init(11);
  AuxiliaryConfig c;
  c.window = 4;
  AuxiliaryEncoder aux(c, init);
  const std::size_t T = 14;
  const Tensor cspec = random_tensor({1, 2, T, 161}, rng);
  const Tensor lossmap = random_lossmap(1, T, 0.3, 6);
  const Tensor base = aux.forward(cspec, lossmap).value();
  CHECK(base.shape() == Shape{1, 240, T});

  for (std::size_t t : {3u, 9u}) {
    Tensor c2 = cspec, m2 = lossmap;
    for (std::size_t f = 0; f < 161; ++f) c2.at({0, 1, t, f}) -= 0.7;
    m2.at({0, t}) = 1 - m2.at({0, t});
    const Tensor out = aux.forward(c2, m2).value();
    CHECK(prefix_diff(out, base, t) == 0.0);
    CHECK(max_abs_diff(frames(out, t, 1), frames(base, t, 1)) > 0.0);
  }
}

TEST_CASE("single attention block ignores frames older than the window") {
  std::mt19937_64 rng(12);
  Initializer init(13);
  AuxiliaryConfig c;
  c.latent = 16;
  c.groups = 2;
  c.ffn_hidden = 8;
  c.window = 5;
  AttentionBlock block(c, init);
  const std::size_t T = 16, t = 13;
  const Tensor x = random_tensor({1, 16, T}, rng);
  const Tensor lossmap = random_lossmap(1, T, 0.3, 7);
  const Tensor base = block.forward(Var(x), lossmap).value();
  Tensor x2 = x;
  for (std::size_t ch = 0; ch < 16; ++ch) x2.at({0, ch, t - c.window - 1}) += 3.0;
  const Tensor far = block.forward(Var(x2), lossmap).value();
  CHECK(max_abs_diff(frames(far, t, 1), frames(base, t, 1)) == 0.0);

  Tensor x3 = x;
  std::size_t near = t - c.window;
  Tensor m3 = lossmap;
  m3.at({0, near}) = 0;
  Tensor base3 = block.forward(Var(x), m3).value();
  for (std::size_t ch = 0; ch < 16; ++ch) x3.at({0, ch, near}) += 3.0;
  CHECK(max_abs_diff(frames(block.forward(Var(x3), m3).value(), t, 1), frames(base3, t, 1)) > 0.0);
}

TEST_CASE("auxiliary streaming matches offline") {
  std::mt19937_64 rng(14);
  Initializer init(15);
  AuxiliaryConfig c;
  c.window = 6;
  AuxiliaryEncoder aux(c, init);
  const std::size_t T = 24;
  const Tensor cspec = random_tensor({1, 2, T, 161}, rng);
  const Tensor lossmap = random_lossmap(1, T, 0.4, 8);
  const Tensor offline = aux.forward(cspec, lossmap).value();
  for (std::size_t chunk : {1u, 2u, 5u}) {
    StreamCache cache;
    const Tensor streamed = chunked(T, chunk, [&](std::size_t s, std::size_t n) {
      return aux.forward(frames(cspec, s, n), lossmap.slice(1, s, n), &cache).value();
    });
    CHECK(max_abs_diff(streamed, offline) < 1e-9);
  }
}

TEST_CASE("auxiliary parameter gradients") {
  std::mt19937_64 rng(16);
  Initializer init(17);
  AuxiliaryConfig c;
  c.latent = 16;
  c.groups = 2;
  c.ffn_hidden = 8;
  c.window = 3;
  c.conv_channels = 2;
  AuxiliaryEncoder aux(c, init);
  const Tensor cspec = random_tensor({1, 2, 5, 161}, rng, 0.5);
  const Tensor lossmap = random_lossmap(1, 5, 0.4, 9);
  const auto r = grad_check([&] { return probe(aux.forward(cspec, lossmap)); }, aux.parameters(), 1e-6, 8);
  CHECK(r.numeric_norm > 0);
  CHECK(r.relative_error < 1e-4);
}
