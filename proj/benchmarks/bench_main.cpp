#include <benchmark/benchmark.h>

#include <random>

#include "bllopt/cluster.hpp"
#include "bllopt/normalize.hpp"
#include "bllopt/optimize.hpp"

namespace {

// 42 neighborhoods, the size of the citywide panel.
bllopt::AllocationProblem citywide_problem() {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  bllopt::AllocationProblem p;
  double sx = 0, sy = 0;
  for (int i = 0; i < 42; ++i) {
    p.shares.geo_ids.push_back(100 + i);
    p.shares.x.push_back(u(rng));
    p.shares.y.push_back(u(rng) * u(rng));
    sx += p.shares.x.back();
    sy += p.shares.y.back();
    p.rates.push_back(0.002 + 0.02 * u(rng) * u(rng));
  }
  for (auto& v : p.shares.x) v /= sx;
  for (auto& v : p.shares.y) v /= sy;
  p.total_tests = 260000;
  for (double x : p.shares.x) p.child_population.push_back(static_cast<bllopt::Count>(x * 260000 * 3));
  return p;
}

void BM_GridSearchWide(benchmark::State& state) {
  const auto p = citywide_problem();
  const auto grid = bllopt::GridConfig::wide();
  for (auto _ : state) benchmark::DoNotOptimize(bllopt::grid_search(p, grid, {}));
  state.SetItemsProcessed(state.iterations() * 201 * 201);
}
BENCHMARK(BM_GridSearchWide)->Unit(benchmark::kMillisecond);

void BM_FinalizeTests(benchmark::State& state) {
  const auto p = citywide_problem();
  for (auto _ : state) benchmark::DoNotOptimize(bllopt::finalize_tests(p.shares.x, p.total_tests));
}
BENCHMARK(BM_FinalizeTests);

void BM_KMedoids(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(1.0, 0.4);
  std::vector<bllopt::SeriesVector> series;
  for (int i = 0; i < state.range(0); ++i) {
    bllopt::SeriesVector s{100 + i, std::vector<double>(17)};
    for (auto& v : s.values) v = d(rng);
    series.push_back(std::move(s));
  }
  for (auto _ : state) benchmark::DoNotOptimize(bllopt::k_medoids(series, 5));
}
BENCHMARK(BM_KMedoids)->Arg(42)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_NormalizeYear(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.001, 0.1);
  std::vector<double> v(42);
  for (auto& e : v) e = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(bllopt::mean_normalize_year(v));
}
BENCHMARK(BM_NormalizeYear);

}  // namespace
BENCHMARK_MAIN();
