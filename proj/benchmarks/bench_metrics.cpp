#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cforest/metrics.hpp"

namespace {

struct Scored {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

Scored make_scored(std::size_t n) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::bernoulli_distribution label(0.05);
  Scored s;
  s.scores.reserve(n);
  s.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = label(rng);
    // Positives score a little higher on average; ties stay plentiful.
    const double raw = score(rng) + (pos ? 0.15 : 0.0);
    s.scores.push_back(std::round(raw * 200.0) / 200.0);
    s.labels.push_back(pos ? 1 : 0);
  }
  s.labels[0] = 1;
  s.labels[n - 1] = 0;
  return s;
}

void bm_auc(benchmark::State& state) {
  const auto s = make_scored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cforest::auc(s.scores, s.labels));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_ks(benchmark::State& state) {
  const auto s = make_scored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cforest::ks(s.scores, s.labels));
}

void bm_recall_at_rate(benchmark::State& state) {
  const auto s = make_scored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(cforest::recall_at_rate(s.scores, s.labels, 0.01));
}

void bm_pr_curve(benchmark::State& state) {
  const auto s = make_scored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto curve = cforest::pr_curve(s.scores, s.labels);
    benchmark::DoNotOptimize(curve.data());
  }
}

}  // namespace

BENCHMARK(bm_auc)->Arg(100000)->Arg(1000000);
BENCHMARK(bm_ks)->Arg(100000)->Arg(1000000);
BENCHMARK(bm_recall_at_rate)->Arg(100000)->Arg(1000000);
BENCHMARK(bm_pr_curve)->Arg(100000);

BENCHMARK_MAIN();
