// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <cmath>

#include "s2ag/data.hpp"
#include "s2ag/layers.hpp"
#include "s2ag/metrics.hpp"
#include "s2ag/pipeline.hpp"
#include "s2ag/training.hpp"

using namespace s2ag;
using namespace s2ag::diff;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Mfcc(benchmark::State& state) {
  Waveform w;
  w.sample_rate = 16000.0;
  w.samples.resize(36267);
  Rng rng(1);
  for (double& s : w.samples) s = rng.uniform(-0.5, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(compute_mfcc(w, 267));
}
BENCHMARK(BM_Mfcc)->Unit(benchmark::kMicrosecond);

void BM_Conv1dForwardBackward(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  ParameterSet ps;
  Conv1dLayer conv(ps, "c", 64, 64, 3, 1, 1, rng);
  const Tensor x = random_tensor({B, 68, 64}, rng);
  for (auto _ : state) {
    Graph g;
    g.backward(sum(conv(g.constant(x))));
    ps.zero_grad();
  }
}
BENCHMARK(BM_Conv1dForwardBackward)->Arg(1)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_BiGruForwardBackward(benchmark::State& state) {
  const auto H = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  ParameterSet ps;
  BiGruLayer gru(ps, "g", 96, H, rng);
  const Tensor x = random_tensor({16, 34, 96}, rng);
  for (auto _ : state) {
    Graph g;
    auto [f, b] = gru(g.constant(x));
    g.backward(sum(add(f, b)));
    ps.zero_grad();
  }
}
BENCHMARK(BM_BiGruForwardBackward)->Arg(32)->Arg(150)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  SyntheticConfig sc;
  sc.records = 32;
  sc.sample_rate = 8000.0;
  const Dataset ds = generate_synthetic(sc);
  const ModelConfig mc = model_config_for(ds);
  std::vector<std::size_t> idx(ds.records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const TrainingSet set = build_training_set(ds, idx, mc, WordEmbeddingTable::hashed());
  GanModel model(mc);
  TrainConfig tc;
  tc.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(model, set, tc));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(set.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_FrechetDistance(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  FeatureSet a(200, std::vector<double>(d)), b(200, std::vector<double>(d));
  for (auto& r : a) {
    for (double& v : r) v = rng.normal();
  }
  for (auto& r : b) {
    for (double& v : r) v = 0.5 + rng.normal();
  }
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_FrechetDistance)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_DatasetRoundtrip(benchmark::State& state) {
  SyntheticConfig sc;
  sc.records = 64;
  const Dataset ds = generate_synthetic(sc);
  for (auto _ : state) benchmark::DoNotOptimize(deserialize(serialize(ds)));
}
BENCHMARK(BM_DatasetRoundtrip)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
