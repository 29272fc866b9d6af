#include <benchmark/benchmark.h>

#include "chaneq/ce_block.hpp"
#include "chaneq/rng.hpp"

namespace {

using namespace chaneq;

FeatureMap gaussian(Shape4 s, Rng& rng) {
  std::vector<double> v(s.count());
  for (double& x : v) x = rng.normal();
  return FeatureMap(s, std::move(v));
}

void BM_CEForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  CEState s = CEState::create(c, rng);
  const FeatureMap x = gaussian({32, c, 8, 8}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ce_forward(x, s, false));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_CEForward)->RangeMultiplier(2)->Range(8, 64);

void BM_CEBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  CEState s = CEState::create(c, rng);
  const FeatureMap x = gaussian({32, c, 8, 8}, rng);
  const FeatureMap g = gaussian(x.shape(), rng);
  const CEOutput out = ce_forward(x, s, false);
  for (auto _ : state) benchmark::DoNotOptimize(ce_backward(g, out.cache, s));
}
BENCHMARK(BM_CEBackward)->RangeMultiplier(2)->Range(8, 64);

void BM_CEEvalVersusFused(benchmark::State& state) {
  const std::size_t c = 32;
  Rng rng(3);
  CEState s = CEState::create(c, rng);
  for (int i = 0; i < 3; ++i) ce_forward(gaussian({32, c, 4, 4}, rng), s);
  s.mode = Mode::Eval;
  const FeatureMap x = gaussian({32, c, 8, 8}, rng);
  if (state.range(0) == 0) {
    for (auto _ : state) benchmark::DoNotOptimize(ce_forward(x, s));
  } else {
    Matrix w(c, c);
    for (double& v : w.values()) v = rng.normal();
    const LinearMap lin{w, Vector(c)};
    for (auto _ : state) benchmark::DoNotOptimize(fuse_bd(s, lin));
  }
}
BENCHMARK(BM_CEEvalVersusFused)->Arg(0)->Arg(1);

}  // namespace
