#include <benchmark/benchmark.h>

#include "divnorm/diverse_norm.hpp"
#include "divnorm/retrieval.hpp"
#include "divnorm/synth.hpp"
#include "divnorm/trainer.hpp"

using namespace divnorm;

namespace {

Dataset default_dataset(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  return generate(cfg);
}

void BM_DualBranchLossStep(benchmark::State& state) {
  const Dataset ds = default_dataset(1);
  ModelConfig mcfg;
  mcfg.n_classes = 50;
  SeededRng rng(1);
  DiverseNormModel model(mcfg, rng);
  SeededRng batch_rng(2);
  const auto batches = pk_batches(ds, 8, 8, batch_rng);
  Matrix x(64, ds.dim());
  std::vector<int> y(64);
  const auto labels = train_label_map(ds);
  for (size_t r = 0; r < batches[0].size(); ++r) {
    for (int c = 0; c < ds.dim(); ++c) x(static_cast<int>(r), c) = ds.features(batches[0][r], c);
    y[r] = labels.at(ds.meta[batches[0][r]].person_id);
  }
  for (auto _ : state) {
    model.zero_grads();
    benchmark::DoNotOptimize(model.dual_branch_loss(x, y, nullptr, false));
  }
}
BENCHMARK(BM_DualBranchLossStep);

void BM_TrainEpoch(benchmark::State& state) {
  const Dataset ds = default_dataset(2);
  for (auto _ : state) {
    TrainConfig tcfg;
    tcfg.epochs = 1;
    benchmark::DoNotOptimize(train_model(ds, ModelConfig{}, tcfg));
  }
}
BENCHMARK(BM_TrainEpoch);

void BM_EvaluateCc(benchmark::State& state) {
  const Dataset ds = default_dataset(3);
  TrainConfig tcfg;
  tcfg.epochs = 2;
  TrainOutput out = train_model(ds, ModelConfig{}, tcfg);
  const BranchFeatureStore q = build_store(*out.model, ds, Split::query);
  const BranchFeatureStore g = build_store(*out.model, ds, Split::gallery);
  const bool sum_features = state.range(0) != 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        evaluate(q, g, Protocol::cc, sum_features ? Strategy::feat_sum : Strategy::sim_sum));
  }
}
BENCHMARK(BM_EvaluateCc)->Arg(0)->Arg(1);

}  // namespace
