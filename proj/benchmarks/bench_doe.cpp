// Microbenchmarks for the design-of-experiments and hull primitives.

#include <benchmark/benchmark.h>

#include <random>

#include "iuq/convex_hull.hpp"
#include "iuq/doe.hpp"
#include "iuq/tsa.hpp"

namespace {

Eigen::MatrixXd random_points(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd pts(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) pts(i, k) = unif(rng);
  return pts;
}

void BM_CenteredL2_78x4(benchmark::State& state) {
  const auto u = random_points(78, 4, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(iuq::doe::centered_l2_discrepancy(u));
}
BENCHMARK(BM_CenteredL2_78x4);

void BM_WraparoundL2_78x4(benchmark::State& state) {
  const auto u = random_points(78, 4, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(iuq::doe::wraparound_l2_discrepancy(u));
}
BENCHMARK(BM_WraparoundL2_78x4);

void BM_MaximinLhs_20x5(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(iuq::doe::maximin_lhs(20, 5, ++seed));
}
BENCHMARK(BM_MaximinLhs_20x5);

void BM_HullVolume_78x4(benchmark::State& state) {
  const auto pts = random_points(78, 4, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(iuq::tsa::convex_hull_volume(pts));
}
BENCHMARK(BM_HullVolume_78x4);

void BM_SequentialTsa_78x4(benchmark::State& state) {
  const auto pts = random_points(78, 4, 3);
  std::vector<int> ids(78);
  for (int i = 0; i < 78; ++i) ids[static_cast<std::size_t>(i)] = i + 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(iuq::tsa::sequential_tsa(
        ids, pts, 0.25, 0.05, iuq::tsa::Measure::WraparoundL2));
}
BENCHMARK(BM_SequentialTsa_78x4);

}  // namespace

BENCHMARK_MAIN();
