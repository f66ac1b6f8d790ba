#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "cforest/dataset.hpp"
#include "cforest/mart.hpp"

namespace {

cforest::Dataset make_data(std::size_t rows, std::size_t cols) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> feat(0.0, 1.0);
  std::uniform_real_distribution<double> flip(0.0, 1.0);
  cforest::Matrix x(rows, cols);
  std::vector<std::uint8_t> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) x.at(r, c) = feat(rng);
    const double p = 1.0 / (1.0 + std::exp(-1.4 * x.at(r, 0)));
    y[r] = flip(rng) < p ? 1 : 0;
  }
  y[0] = 0;
  y[rows - 1] = 1;
  return cforest::Dataset(std::move(x), std::move(y));
}

void bm_binned_build(benchmark::State& state) {
  const auto ds = make_data(static_cast<std::size_t>(state.range(0)), 20);
  std::vector<std::size_t> rows(ds.rows());
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
  for (auto _ : state) {
    auto binned =
        cforest::BinnedDataset::build(ds.view(), rows, ds.weights(), 256, 1.0 / 512.0);
    benchmark::DoNotOptimize(binned.rows());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 20);
}

void bm_train(benchmark::State& state) {
  const auto ds = make_data(static_cast<std::size_t>(state.range(0)), 20);
  cforest::MartParams params;
  params.num_trees = static_cast<int>(state.range(1));
  params.max_depth = 5;
  for (auto _ : state) {
    auto model = cforest::train_mart(ds, params);
    benchmark::DoNotOptimize(model.trees.size());
  }
}

void bm_predict(benchmark::State& state) {
  const auto ds = make_data(50000, 20);
  cforest::MartParams params;
  params.num_trees = 50;
  const auto model = cforest::train_mart(ds, params);
  for (auto _ : state) {
    auto scores = cforest::predict_proba(model, ds.view());
    benchmark::DoNotOptimize(scores.data());
  }
  state.SetItemsProcessed(state.iterations() * 50000);
}

}  // namespace

BENCHMARK(bm_binned_build)->Arg(10000)->Arg(100000);
BENCHMARK(bm_train)->Args({10000, 20})->Args({50000, 20})->Unit(benchmark::kMillisecond);
BENCHMARK(bm_predict)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
