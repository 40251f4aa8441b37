#include <random>

#include <benchmark/benchmark.h>

#include "dualstream/flow.hpp"

namespace {

using dualstream::Image;

// Second frame is the first shifted right by three pixels.
void BM_BlockMatching(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image a(side, side, 1), b(side, side, 1);
  for (auto& p : a.pixels) p = u(rng);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) b.at(x, y) = a.at(std::max(0, x - 3), y);
  }
  dualstream::BlockMatchingOptions options;
  options.search_radius = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(dualstream::compute_flow(a, b, options));
}
BENCHMARK(BM_BlockMatching)->Args({64, 4})->Args({128, 8})->Args({224, 8});

}  // namespace
