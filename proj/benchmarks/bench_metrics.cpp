#include <random>

#include <benchmark/benchmark.h>

#include "dualstream/metrics.hpp"

namespace {

void BM_BinaryAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> score;
  std::bernoulli_distribution pos(0.3);
  std::vector<double> s(n);
  auto y = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = pos(rng);
    s[i] = score(rng) + (y[i] ? 0.5 : 0.0);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(dualstream::binary_auc(s, std::span<const bool>(y.get(), n)));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BinaryAuc)->RangeMultiplier(8)->Range(64, 1 << 18)->Complexity();

}  // namespace
