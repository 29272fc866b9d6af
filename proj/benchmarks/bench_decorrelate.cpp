#include <benchmark/benchmark.h>

#include <cmath>

#include "chaneq/decorrelate.hpp"
#include "chaneq/eigen.hpp"
#include "chaneq/rng.hpp"

namespace {

using namespace chaneq;

Matrix trace_one_spd(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix a(n, n + 4);
  for (double& v : a.values()) v = rng.normal();
  return trace_normalize(matmul(a, transpose(a)));
}

void BM_NewtonSchulz(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix s = trace_one_spd(n, 1);
  NewtonConfig cfg;
  cfg.iterations = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(newton_inv_sqrt(s, cfg));
}
BENCHMARK(BM_NewtonSchulz)->ArgsProduct({{4, 8, 16, 32, 64}, {3, 10}});

void BM_JacobiInvSqrt(benchmark::State& state) {
  const Matrix s = trace_one_spd(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(inv_sqrt_eigen(s));
}
BENCHMARK(BM_JacobiInvSqrt)->RangeMultiplier(2)->Range(4, 64);

void BM_Covariance(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  std::vector<double> v(32 * c * 8 * 8);
  for (double& x : v) x = rng.normal();
  const FeatureMap x({32, c, 8, 8}, std::move(v));
  const std::vector<double> gamma(c, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(covariance_bn(x, gamma));
}
BENCHMARK(BM_Covariance)->RangeMultiplier(2)->Range(8, 64);

}  // namespace
BENCHMARK_MAIN();
