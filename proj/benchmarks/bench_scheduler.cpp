#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>
#include <string>

#include "cforest/scheduler.hpp"

namespace {

namespace fs = std::filesystem;

cforest::JobGraph make_dag(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  cforest::JobGraph g;
  for (int i = 0; i < n; ++i) {
    cforest::JobNode node;
    node.id = "n" + std::to_string(1000 + i);
    for (int j = 0; j < i; ++j) {
      if (coin(rng) < 0.1) node.deps.push_back("n" + std::to_string(1000 + j));
    }
    g.add(std::move(node));
  }
  return g;
}

fs::path scratch_dir() {
  const auto dir = fs::temp_directory_path() / "cforest_bench_sched";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void bm_execute_dag(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int pool = static_cast<int>(state.range(1));
  const auto dir = scratch_dir();
  const cforest::JobRunner runner = [](const cforest::JobNode&, const cforest::Checkpoint&) {
    return cforest::JobResult{};
  };
  unsigned seed = 0;
  for (auto _ : state) {
    state.PauseTiming();
    cforest::JobGraph g = make_dag(n, seed++);
    fs::remove_all(dir);
    fs::create_directories(dir);
    state.ResumeTiming();
    auto report = cforest::execute(g, pool, cforest::Checkpoint{dir}, runner);
    benchmark::DoNotOptimize(report.executed);
  }
  fs::remove_all(dir);
  state.SetItemsProcessed(state.iterations() * n);
}

void bm_resume_verified(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto dir = scratch_dir();
  const cforest::JobRunner runner = [](const cforest::JobNode&, const cforest::Checkpoint&) {
    return cforest::JobResult{};
  };
  {
    cforest::JobGraph g = make_dag(n, 99);
    cforest::execute(g, 4, cforest::Checkpoint{dir}, runner);
  }
  for (auto _ : state) {
    state.PauseTiming();
    cforest::JobGraph g = make_dag(n, 99);
    state.ResumeTiming();
    auto report = cforest::resume(g, cforest::Checkpoint{dir}, 4, runner);
    benchmark::DoNotOptimize(report.executed);
  }
  fs::remove_all(dir);
}

}  // namespace

BENCHMARK(bm_execute_dag)->Args({100, 1})->Args({100, 4})->Args({500, 4})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_resume_verified)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
