#include "plc/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plc/errors.hpp"
#include "plc/kernels.hpp"

namespace plc::model {

void QuantizerConfig::validate() const {
  if (groups == 0 || entries == 0 || latent % groups) throw ShapeError("quantizer: groups must divide the latent width");
  if (!(tau_min > 0 && tau_init >= tau_min)) throw ParameterError("quantizer: need 0 < tau_min <= tau_init");
  if (!(anneal > 0 && anneal <= 1)) throw ParameterError("quantizer: anneal factor must lie in (0, 1]");
}

void ContrastiveConfig::validate() const {
  if (distractors < 1) throw ParameterError("contrastive: need at least one distractor");
  if (!(kappa > 0)) throw ParameterError("contrastive: kappa must be positive");
  if (!(diversity_weight >= 0)) throw ParameterError("contrastive: diversity weight must be >= 0");
}

double anneal_temperature(std::uint64_t step, const QuantizerConfig& config) {
  return std::max(config.tau_min, config.tau_init * std::pow(config.anneal, static_cast<double>(step)));
}

// ---------------------------------------------------------------------------
// Selection

namespace {

void check_logits(const Var& logits, std::size_t groups) {
  if (logits.shape().size() != 3 || groups == 0 || logits.dim(1) % groups) {
    throw ShapeError("quantizer logits " + shape_str(logits.shape()) + " for " + std::to_string(groups) + " groups");
  }
}

// Softmax of (values / tau) over entries v of group g at (b, t).
void softmax_groups(const Tensor& in, std::size_t groups, double tau, Tensor& out) {
  const std::size_t B = in.dim(0), GV = in.dim(1), T = in.dim(2), V = GV / groups;
  out = Tensor(in.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t base = (b * GV + g * V) * T + t;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < V; ++v) mx = std::max(mx, in[base + v * T] / tau);
        double z = 0;
        for (std::size_t v = 0; v < V; ++v) z += (out[base + v * T] = std::exp(in[base + v * T] / tau - mx));
        for (std::size_t v = 0; v < V; ++v) out[base + v * T] /= z;
      }
    }
  }
}

Var softmax_op(const Var& scores, std::size_t groups, double tau) {
  Tensor out;
  softmax_groups(scores.value(), groups, tau, out);
  const std::size_t B = scores.dim(0), GV = scores.dim(1), T = scores.dim(2), V = GV / groups;
  Tensor y = out;
  return make_result(std::move(out), {scores}, [scores, y, B, GV, T, V, groups, tau](const Node& self) {
    Tensor* g = grad_target(scores);
    if (!g) return;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < groups; ++k) {
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t base = (b * GV + k * V) * T + t;
          double dot = 0;
          for (std::size_t v = 0; v < V; ++v) dot += self.grad[base + v * T] * y[base + v * T];
          for (std::size_t v = 0; v < V; ++v) {
            (*g)[base + v * T] += y[base + v * T] * (self.grad[base + v * T] - dot) / tau;
          }
        }
      }
    }
  });
}

}  // namespace

Var group_softmax(const Var& logits, std::size_t groups, double tau) {
  check_logits(logits, groups);
  if (!(tau > 0)) throw ParameterError("softmax temperature must be positive");
  return softmax_op(logits, groups, tau);
}

GumbelSelection gumbel_select(const Var& logits, std::size_t groups, double tau, bool hard, std::mt19937_64* rng) {
  check_logits(logits, groups);
  if (!(tau > 0)) throw ParameterError("Gumbel temperature must be positive, got " + std::to_string(tau));
  const std::size_t B = logits.dim(0), GV = logits.dim(1), T = logits.dim(2), V = GV / groups;

  GumbelSelection sel;
  Tensor scores = logits.value();
  Var soft;
  if (!hard) {
    if (!rng) throw ParameterError("soft Gumbel selection needs a random source");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor noise(logits.shape());
    for (auto& n : noise.values()) {
      const double draw = std::clamp(u(*rng), 1e-12, 1.0 - 1e-12);
      n = -std::log(-std::log(draw));
    }
    soft = softmax_op(add(logits, Var(noise)), groups, tau);
    scores = soft.value();
    sel.soft = soft.value();
  }

  Tensor onehot(logits.shape());
  sel.selected.resize(B * groups * T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t base = (b * GV + g * V) * T + t;
        std::size_t best = 0;
        for (std::size_t v = 1; v < V; ++v) {
          if (scores[base + v * T] > scores[base + best * T]) best = v;
        }
        onehot[base + best * T] = 1;
        sel.selected[(b * groups + g) * T + t] = static_cast<std::uint32_t>(best);
      }
    }
  }
  if (hard) {
    sel.weights = Var(std::move(onehot));
  } else {
    sel.weights = make_result(std::move(onehot), {soft}, [soft](const Node& self) {
      if (Tensor* g = grad_target(soft)) *g += self.grad;
    });
  }
  return sel;
}

Var codebook_lookup(const Var& weights, const Var& codebook) {
  if (codebook.shape().size() != 3 || weights.shape().size() != 3 ||
      weights.dim(1) != codebook.dim(0) * codebook.dim(1)) {
    throw ShapeError("codebook_lookup: weights " + shape_str(weights.shape()) + " for codebook " +
                     shape_str(codebook.shape()));
  }
  const std::size_t B = weights.dim(0), T = weights.dim(2);
  const std::size_t G = codebook.dim(0), V = codebook.dim(1), D = codebook.dim(2);
  Tensor out({B, G * D, T});
  const Tensor& w = weights.value();
  const Tensor& cb = codebook.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t v = 0; v < V; ++v)
        for (std::size_t t = 0; t < T; ++t) {
          const double a = w[(b * G * V + g * V + v) * T + t];
          if (a == 0) continue;
          for (std::size_t d = 0; d < D; ++d) out[(b * G * D + g * D + d) * T + t] += a * cb[(g * V + v) * D + d];
        }
  return make_result(std::move(out), {weights, codebook}, [weights, codebook, B, G, V, D, T](const Node& self) {
    Tensor* gw = grad_target(weights);
    Tensor* gc = grad_target(codebook);
    const Tensor& w = weights.value();
    const Tensor& cb = codebook.value();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t g = 0; g < G; ++g)
        for (std::size_t v = 0; v < V; ++v)
          for (std::size_t t = 0; t < T; ++t) {
            const std::size_t wi = (b * G * V + g * V + v) * T + t;
            double acc = 0;
            for (std::size_t d = 0; d < D; ++d) {
              const double gy = self.grad[(b * G * D + g * D + d) * T + t];
              acc += gy * cb[(g * V + v) * D + d];
              if (gc && w[wi] != 0) (*gc)[(g * V + v) * D + d] += gy * w[wi];
            }
            if (gw) (*gw)[wi] += acc;
          }
  });
}

// ---------------------------------------------------------------------------
// Quantizer module

namespace {

Conv1dSpec pointwise(std::size_t in, std::size_t out, bool bias) {
  Conv1dSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.bias = bias;
  return s;
}

}  // namespace

GumbelQuantizer::GumbelQuantizer(const QuantizerConfig& config, Initializer& init)
    : config_(config),
      logits_(pointwise(config.latent, config.groups * config.entries, true), init),
      projection_(pointwise(config.latent, config.latent, false), init) {
  config.validate();
  codebook_ = add_parameter("codebook", init.normal({config.groups, config.entries, config.entry_dim()}, 1.0));
  Var w = projection_.weight();
  w.mutable_value().fill(0.0);
  for (std::size_t c = 0; c < config.latent; ++c) w.mutable_value()[c * config.latent + c] = 1.0;
  add_child("logits", logits_);
  add_child("projection", projection_);
}

QuantizerOutput GumbelQuantizer::forward(const Var& features, double tau, bool hard, std::mt19937_64* rng) const {
  if (!(tau > 0)) throw ParameterError("Gumbel temperature must be positive, got " + std::to_string(tau));
  if (features.shape().size() != 3 || features.dim(1) != config_.latent) {
    throw ShapeError("quantizer input " + shape_str(features.shape()));
  }
  const Var logits = logits_.forward(features);
  GumbelSelection sel = gumbel_select(logits, config_.groups, tau, hard, rng);
  QuantizerOutput out;
  out.codewords = codebook_lookup(sel.weights, codebook_);
  out.quantized = projection_.forward(out.codewords);
  out.probs = softmax_op(logits, config_.groups, 1.0);
  out.selected = std::move(sel.selected);
  return out;
}

// ---------------------------------------------------------------------------
// Losses

Var average_probs(const Var& probs, std::size_t groups) {
  check_logits(probs, groups);
  const std::size_t B = probs.dim(0), GV = probs.dim(1), T = probs.dim(2), V = GV / groups;
  const double inv = 1.0 / static_cast<double>(B * T);
  Tensor out({groups, V});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < GV; ++i)
      for (std::size_t t = 0; t < T; ++t) out[i] += probs.value()[(b * GV + i) * T + t] * inv;
  return make_result(std::move(out), {probs}, [probs, B, GV, T, inv](const Node& self) {
    Tensor* g = grad_target(probs);
    if (!g) return;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < GV; ++i)
        for (std::size_t t = 0; t < T; ++t) (*g)[(b * GV + i) * T + t] += self.grad[i] * inv;
  });
}

Var diversity_loss(const Var& mean_probs) {
  if (mean_probs.shape().size() != 2) throw ShapeError("diversity_loss expects (G, V)");
  const std::size_t G = mean_probs.dim(0), V = mean_probs.dim(1);
  const Tensor& p = mean_probs.value();
  for (std::size_t g = 0; g < G; ++g) {
    double row = 0;
    for (std::size_t v = 0; v < V; ++v) row += p[g * V + v];
    if (std::abs(row - 1) > 1e-4) {
      throw MathError("diversity_loss: group " + std::to_string(g) + " sums to " + std::to_string(row));
    }
  }
  constexpr double floor = 1e-12;
  const double norm = 1.0 / static_cast<double>(G * V);
  double total = 0;
  for (double x : p.values()) total += x * std::log(std::max(x, floor));
  return make_result(Tensor({}, total * norm), {mean_probs}, [mean_probs, norm](const Node& self) {
    Tensor* g = grad_target(mean_probs);
    if (!g) return;
    const Tensor& p = mean_probs.value();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] > floor ? std::log(p[i]) + 1 : std::log(floor);
      (*g)[i] += self.grad[0] * norm * d;
    }
  });
}

std::vector<FramePosition> lost_positions(const Tensor& lossmap) {
  if (lossmap.rank() != 2) throw ShapeError("loss map must be (B, T)");
  std::vector<FramePosition> out;
  for (std::size_t b = 0; b < lossmap.dim(0); ++b)
    for (std::size_t t = 0; t < lossmap.dim(1); ++t)
      if (lossmap.at({b, t}) != 0) out.push_back({b, t});
  return out;
}

std::vector<FramePosition> sample_distractors(const std::vector<FramePosition>& pool, FramePosition target,
                                              std::size_t count, std::mt19937_64& rng) {
  std::vector<FramePosition> candidates;
  candidates.reserve(pool.size());
  for (const auto& p : pool) {
    if (!(p == target)) candidates.push_back(p);
  }
  if (candidates.empty()) throw MathError("no distractor candidates besides the target");
  std::vector<FramePosition> out;
  out.reserve(count);
  if (candidates.size() >= count) {
    std::sample(candidates.begin(), candidates.end(), std::back_inserter(out), count, rng);
    std::shuffle(out.begin(), out.end(), rng);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(candidates[pick(rng)]);
  }
  return out;
}

Var gather_frames(const Var& x, const std::vector<FramePosition>& positions) {
  if (x.shape().size() != 3) throw ShapeError("gather_frames expects (B, C, T)");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  for (const auto& p : positions) {
    if (p.batch >= B || p.frame >= T) throw ShapeError("gather_frames: position out of range");
  }
  Tensor out({positions.size(), C});
  for (std::size_t n = 0; n < positions.size(); ++n)
    for (std::size_t c = 0; c < C; ++c) out[n * C + c] = x.value()[(positions[n].batch * C + c) * T + positions[n].frame];
  return make_result(std::move(out), {x}, [x, positions, C, T](const Node& self) {
    Tensor* g = grad_target(x);
    if (!g) return;
    for (std::size_t n = 0; n < positions.size(); ++n)
      for (std::size_t c = 0; c < C; ++c) (*g)[(positions[n].batch * C + c) * T + positions[n].frame] += self.grad[n * C + c];
  });
}

Var contrastive_loss(const Var& anchors, const Var& candidates, double kappa) {
  if (!(kappa > 0)) throw ParameterError("contrastive temperature must be positive");
  if (anchors.shape().size() != 2 || candidates.shape().size() != 3 || candidates.dim(0) != anchors.dim(0) ||
      candidates.dim(2) != anchors.dim(1) || candidates.dim(1) < 1) {
    throw ShapeError("contrastive_loss: anchors " + shape_str(anchors.shape()) + ", candidates " +
                     shape_str(candidates.shape()));
  }
  const std::size_t N = anchors.dim(0), J = candidates.dim(1), C = anchors.dim(1);
  if (N == 0) throw MathError("contrastive_loss over an empty set");
  const Tensor& a = anchors.value();
  const Tensor& y = candidates.value();

  std::vector<double> anorm(N), ynorm(N * J), cosine(N * J), weight(N * J);
  double total = 0;
  for (std::size_t n = 0; n < N; ++n) {
    anorm[n] = std::sqrt(kernels::dot(a.data() + n * C, a.data() + n * C, C));
    if (anorm[n] == 0) throw MathError("contrastive_loss: zero-norm anchor");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < J; ++j) {
      const Real* yj = y.data() + (n * J + j) * C;
      ynorm[n * J + j] = std::sqrt(kernels::dot(yj, yj, C));
      if (ynorm[n * J + j] == 0) throw MathError("contrastive_loss: zero-norm candidate");
      cosine[n * J + j] = kernels::dot(a.data() + n * C, yj, C) / (anorm[n] * ynorm[n * J + j]);
      mx = std::max(mx, cosine[n * J + j] / kappa);
    }
    double z = 0;
    for (std::size_t j = 0; j < J; ++j) z += (weight[n * J + j] = std::exp(cosine[n * J + j] / kappa - mx));
    for (std::size_t j = 0; j < J; ++j) weight[n * J + j] /= z;
    total += std::log(z) + mx - cosine[n * J] / kappa;
  }
  const double inv_n = 1.0 / static_cast<double>(N);
  return make_result(Tensor({}, total * inv_n), {anchors, candidates},
                     [anchors, candidates, N, J, C, kappa, inv_n, anorm = std::move(anorm), ynorm = std::move(ynorm),
                      cosine = std::move(cosine), weight = std::move(weight)](const Node& self) {
                       Tensor* ga = grad_target(anchors);
                       Tensor* gy = grad_target(candidates);
                       const Tensor& a = anchors.value();
                       const Tensor& y = candidates.value();
                       const double scale = self.grad[0] * inv_n / kappa;
                       for (std::size_t n = 0; n < N; ++n) {
                         for (std::size_t j = 0; j < J; ++j) {
                           // d loss / d cos_j = (softmax_j - [j == 0]) / kappa
                           const double d = scale * (weight[n * J + j] - (j == 0 ? 1.0 : 0.0));
                           if (d == 0) continue;
                           const double cs = cosine[n * J + j];
                           const double an = anorm[n], yn = ynorm[n * J + j];
                           for (std::size_t c = 0; c < C; ++c) {
                             const double ac = a[n * C + c], yc = y[(n * J + j) * C + c];
                             if (ga) (*ga)[n * C + c] += d * (yc / (an * yn) - cs * ac / (an * an));
                             if (gy) (*gy)[(n * J + j) * C + c] += d * (ac / (an * yn) - cs * yc / (yn * yn));
                           }
                         }
                       }
                     });
}

PretrainLoss pretrain_objective(const Var& predicted, const Var& quantized, const Var& probs, std::size_t groups,
                                const Tensor& lossmap, const ContrastiveConfig& config, std::mt19937_64& rng) {
  config.validate();
  if (predicted.shape() != quantized.shape() || predicted.shape().size() != 3 ||
      lossmap.shape() != Shape{predicted.dim(0), predicted.dim(2)}) {
    throw ShapeError("pretrain_objective: predictions " + shape_str(predicted.shape()) + ", targets " +
                     shape_str(quantized.shape()) + ", loss map " + shape_str(lossmap.shape()));
  }
  PretrainLoss out;
  const std::vector<FramePosition> pool = lost_positions(lossmap);
  if (pool.size() < 2) {
    out.skipped = true;
    return out;
  }
  out.candidates.reserve(pool.size() * (config.distractors + 1));
  for (const auto& target : pool) {
    out.candidates.push_back(target);
    for (const auto& d : sample_distractors(pool, target, config.distractors, rng)) out.candidates.push_back(d);
  }
  const std::size_t C = predicted.dim(1);
  const Var anchors = gather_frames(predicted, pool);
  const Var candidates = reshape(gather_frames(quantized, out.candidates), {pool.size(), config.distractors + 1, C});
  out.targets = pool.size();
  out.contrastive = contrastive_loss(anchors, candidates, config.kappa);
  out.diversity = diversity_loss(average_probs(probs, groups));
  out.total = add(out.contrastive, scale(out.diversity, config.diversity_weight));
  return out;
}

PretrainLoss pretrain_loss(const SemanticEncoder& encoder, const GumbelQuantizer& quantizer,
                           const PretrainBatch& batch, double tau, const ContrastiveConfig& config,
                           std::mt19937_64& rng) {
  if (lost_positions(batch.lossmap).size() < 2) {
    PretrainLoss out;
    out.skipped = true;
    return out;
  }
  const Tensor no_loss(batch.lossmap.shape());
  const Var clean_features = encoder.extract(make_encoder_input(batch.clean, no_loss));
  const QuantizerOutput q = quantizer.forward(clean_features, tau, false, &rng);
  const Var predicted = encoder.forward(batch.lossy, batch.lossmap);
  return pretrain_objective(predicted, q.quantized, q.probs, quantizer.config().groups, batch.lossmap, config, rng);
}

}  // namespace plc::model
