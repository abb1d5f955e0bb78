#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "plc/kernels.hpp"

using namespace plc;
namespace k = plc::kernels;

namespace {

std::vector<Real> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> d(0, 1);
  std::vector<Real> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// A generator-like layer: 16 channels, kernel 7, dilation 3, 8000 samples.
k::Conv1dGeometry conv1d_geometry() {
  k::Conv1dGeometry g;
  g.batch = 2;
  g.in_channels = 16;
  g.out_channels = 16;
  g.in_length = 8000;
  g.kernel = 7;
  g.dilation = 3;
  g.pad_left = 18;
  return g;
}

// A feature-extractor-like layer over (frames, bins).
k::Conv2dGeometry conv2d_geometry() {
  k::Conv2dGeometry g;
  g.batch = 2;
  g.in_channels = 16;
  g.out_channels = 32;
  g.frames = 100;
  g.bins = 81;
  g.kernel_t = 2;
  g.kernel_f = 3;
  g.pad_t_left = 1;
  g.stride_f = 2;
  g.pad_f_left = 1;
  g.pad_f_right = 1;
  return g;
}

template <bool Reference>
void BM_Conv1dForward(benchmark::State& state) {
  const auto g = conv1d_geometry();
  const auto x = random_vector(g.batch * g.in_channels * g.in_length, 1);
  const auto w = random_vector(g.out_channels * g.in_channels * g.kernel, 2);
  std::vector<Real> y(g.batch * g.out_channels * g.out_length());
  for (auto _ : state) {
    if constexpr (Reference) k::reference::conv1d_forward(g, x.data(), w.data(), nullptr, y.data());
    else k::conv1d_forward(g, x.data(), w.data(), nullptr, y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * g.batch * g.out_channels * g.out_length() * g.in_channels * g.kernel);
}

template <bool Reference>
void BM_Conv1dBackward(benchmark::State& state) {
  const auto g = conv1d_geometry();
  const auto x = random_vector(g.batch * g.in_channels * g.in_length, 1);
  const auto w = random_vector(g.out_channels * g.in_channels * g.kernel, 2);
  const auto gy = random_vector(g.batch * g.out_channels * g.out_length(), 3);
  std::vector<Real> gx(x.size()), gw(w.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      k::reference::conv1d_backward_input(g, gy.data(), w.data(), gx.data());
      k::reference::conv1d_backward_weight(g, gy.data(), x.data(), gw.data(), nullptr);
    } else {
      k::conv1d_backward_input(g, gy.data(), w.data(), gx.data());
      k::conv1d_backward_weight(g, gy.data(), x.data(), gw.data(), nullptr);
    }
    benchmark::DoNotOptimize(gx.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Reference>
void BM_Conv2dForward(benchmark::State& state) {
  const auto g = conv2d_geometry();
  const auto x = random_vector(g.batch * g.in_channels * g.frames * g.bins, 1);
  const auto w = random_vector(g.out_channels * g.in_channels * g.kernel_t * g.kernel_f, 2);
  std::vector<Real> y(g.batch * g.out_channels * g.out_frames() * g.out_bins());
  for (auto _ : state) {
    if constexpr (Reference) k::reference::conv2d_forward(g, x.data(), w.data(), nullptr, y.data());
    else k::conv2d_forward(g, x.data(), w.data(), nullptr, y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Reference>
void BM_Attention(benchmark::State& state) {
  k::AttentionGeometry g;
  g.batch = 2;
  g.channels = 64;
  g.groups = 4;
  g.queries = 100;
  g.past = 0;
  g.window = 100;
  const std::size_t n = g.batch * g.channels * g.keys();
  const auto q = random_vector(n, 1), kk = random_vector(n, 2), v = random_vector(n, 3);
  std::vector<Real> valid(g.batch * g.keys(), 1.0);
  std::vector<Real> y(g.batch * g.channels * g.queries), wts(g.batch * g.groups * g.queries * g.span());
  for (auto _ : state) {
    if constexpr (Reference) k::reference::attention_forward(g, q.data(), kk.data(), v.data(), valid.data(), y.data(), wts.data());
    else k::attention_forward(g, q.data(), kk.data(), v.data(), valid.data(), y.data(), wts.data());
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Conv1dForward<false>)->Name("conv1d_forward/parallel");
BENCHMARK(BM_Conv1dForward<true>)->Name("conv1d_forward/reference");
BENCHMARK(BM_Conv1dBackward<false>)->Name("conv1d_backward/parallel");
BENCHMARK(BM_Conv1dBackward<true>)->Name("conv1d_backward/reference");
BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d_forward/parallel");
BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d_forward/reference");
BENCHMARK(BM_Attention<false>)->Name("attention_forward/parallel");
BENCHMARK(BM_Attention<true>)->Name("attention_forward/reference");

BENCHMARK_MAIN();
