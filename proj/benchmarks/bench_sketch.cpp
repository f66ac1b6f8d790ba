#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cforest/quantile_sketch.hpp"

namespace {

struct Points {
  std::vector<double> values;
  std::vector<double> weights;
};

Points make_points(std::size_t n) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> value(0.0, 1.0);
  std::uniform_real_distribution<double> weight(0.1, 4.0);
  Points p;
  p.values.reserve(n);
  p.weights.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.values.push_back(value(rng));
    p.weights.push_back(weight(rng));
  }
  return p;
}

void bm_sketch_build(benchmark::State& state) {
  const auto pts = make_points(static_cast<std::size_t>(state.range(0)));
  const double eps = 1.0 / static_cast<double>(state.range(1));
  for (auto _ : state) {
    auto sk = cforest::QuantileSketch::build(pts.values, pts.weights, eps);
    benchmark::DoNotOptimize(sk.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_sketch_merge(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto pts = make_points(n);
  const double eps = 0.01;
  const std::size_t half = n / 2;
  const auto a = cforest::QuantileSketch::build(
      std::span(pts.values).subspan(0, half), std::span(pts.weights).subspan(0, half), eps);
  const auto b = cforest::QuantileSketch::build(
      std::span(pts.values).subspan(half), std::span(pts.weights).subspan(half), eps);
  for (auto _ : state) {
    auto merged = cforest::QuantileSketch::merge(a, b);
    benchmark::DoNotOptimize(merged.size());
  }
}

void bm_sketch_rank(benchmark::State& state) {
  const auto pts = make_points(100000);
  const auto sk = cforest::QuantileSketch::build(pts.values, pts.weights, 0.01);
  double q = -3.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sk.rank(q));
    q += 0.01;
    if (q > 3.0) q = -3.0;
  }
}

void bm_sketch_candidates(benchmark::State& state) {
  const auto pts = make_points(100000);
  const auto sk = cforest::QuantileSketch::build(pts.values, pts.weights, 1.0 / 512.0);
  for (auto _ : state) {
    auto cuts = sk.split_candidates(static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(cuts.data());
  }
}

}  // namespace

BENCHMARK(bm_sketch_build)->Args({100000, 100})->Args({100000, 1000})->Args({1000000, 100});
BENCHMARK(bm_sketch_merge)->Arg(100000)->Arg(1000000);
BENCHMARK(bm_sketch_rank);
BENCHMARK(bm_sketch_candidates)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
