#include <random>

#include <benchmark/benchmark.h>

#include "dualstream/model.hpp"

namespace {

using namespace dualstream;

Eigen::MatrixXd noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ModelConfig config(int dim) {
  ModelConfig c;
  c.encoder.dim = dim;
  c.encoder.heads = 4;
  c.embed_dim = 16;
  return c;
}

// Args: frames, dim.
void BM_EncodeSelfAttention(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto m = TemporalModel::initialize(config(static_cast<int>(state.range(1))), {"a", "b"}, 1);
  const auto x = noise(state.range(0), state.range(1), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_modality(x, m.encoder, EncodingMode::self_attention));
  }
}
BENCHMARK(BM_EncodeSelfAttention)->Args({8, 32})->Args({32, 32})->Args({64, 32})->Args({32, 128});

void BM_EncodeMeanPool(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto m = TemporalModel::initialize(config(32), {"a", "b"}, 1);
  const auto x = noise(state.range(0), 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode_modality(x, m.encoder, EncodingMode::mean_pool));
}
BENCHMARK(BM_EncodeMeanPool)->Arg(8)->Arg(64);

// One batch of 8 segments, forward and backward through both streams.
void BM_TrainStep(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const int frames = static_cast<int>(state.range(0));
  auto m = TemporalModel::initialize(config(32), {"a", "b", "c", "d"}, 2);
  std::vector<ModelInput> batch;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 8; ++i) {
    batch.push_back({noise(frames, 32, rng), noise(frames, 32, rng)});
    labels.push_back(i % 4);
  }
  const auto options = model_options(Ablation::full);
  for (auto _ : state) {
    auto grads = m.zeros_like();
    benchmark::DoNotOptimize(loss_and_gradients(m, options, batch, labels, &grads));
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32);

}  // namespace
