#pragma once

#include <random>

#include "plc/autograd.hpp"
#include "plc/ops.hpp"

namespace plc::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, Real scale = 1) {
  Tensor t(std::move(shape));
  std::normal_distribution<Real> d(0, scale);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

/// Fixed random weighting so every output element carries a distinct gradient.
inline Var probe(const Var& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, Var(random_tensor(y.shape(), rng))));
}

/// Frames [start, start + count) of a (B, C, T) or (B, C, T, F) tensor.
inline Tensor frames(const Tensor& x, std::size_t start, std::size_t count) { return x.slice(2, start, count); }

}  // namespace plc::testing
