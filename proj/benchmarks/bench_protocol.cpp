#include <benchmark/benchmark.h>

#include "ff/oracle.hpp"
#include "ff/predict.hpp"
#include "ff/synth.hpp"
#include "ff/train.hpp"

namespace {

std::vector<ff::ClientShard> bench_shards(const ff::RawTable& table, int m, std::uint64_t seed) {
  std::vector<std::string> raw(table.n_rows());
  for (std::size_t r = 0; r < raw.size(); ++r) raw[r] = std::to_string(r);
  const auto ids = ff::hash_ids(raw, "bench");
  auto shards = ff::vertical_partition(table, ids, m, seed);
  shards = ff::align_shards(shards);
  ff::encode_features(shards, ff::mix_seed(seed, 0xE2C0DEu));
  return shards;
}

ff::TrainConfig bench_config(int m) {
  ff::TrainConfig config;
  config.n_trees = 8;
  config.max_depth = 4;
  config.m = m;
  config.seed = 99;
  return config;
}

void BM_FederatedTrain(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const auto table = ff::make_classification_table(400, 12, 2, 5);
  const auto shards = bench_shards(table, m, 5);
  const auto config = bench_config(m);
  for (auto _ : state) {
    auto run = ff::run_federated_training(shards, config);
    benchmark::DoNotOptimize(run);
  }
}
BENCHMARK(BM_FederatedTrain)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_CentralizedTrain(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const auto table = ff::make_classification_table(400, 12, 2, 5);
  const auto pooled = ff::pool_shards(bench_shards(table, m, 5));
  const auto config = bench_config(m);
  for (auto _ : state) {
    auto forest = ff::centralized_train(pooled, config);
    benchmark::DoNotOptimize(forest);
  }
}
BENCHMARK(BM_CentralizedTrain)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const bool classical = state.range(0) == 1;
  const int m = 2;
  const auto table = ff::make_classification_table(400, 12, 2, 7);
  const auto shards = bench_shards(table, m, 7);
  const auto config = bench_config(m);
  const auto run = ff::run_federated_training(shards, config);
  std::vector<ff::FeatureColumns> columns;
  for (const auto& shard : shards) columns.push_back(shard.features);

  for (auto _ : state) {
    auto report = ff::run_federated_prediction(
        run.complete, run.partials, columns, shards[0].n_rows(),
        classical ? ff::PredictMethod::Classical : ff::PredictMethod::Intersect);
    benchmark::DoNotOptimize(report);
  }
}
BENCHMARK(BM_Predict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Arg pair: (max_depth, 0 = intersect | 1 = classical). The intersect curve
// stays flat as depth grows; the classical curve follows the node count.
void BM_PredictByDepth(benchmark::State& state) {
  const int depth = static_cast<int>(state.range(0));
  const bool classical = state.range(1) == 1;
  const int m = 2;
  const auto table = ff::make_classification_table(600, 12, 2, 11, 0.15);
  const auto shards = bench_shards(table, m, 11);
  auto config = bench_config(m);
  config.max_depth = depth;
  const auto run = ff::run_federated_training(shards, config);
  std::vector<ff::FeatureColumns> columns;
  for (const auto& shard : shards) columns.push_back(shard.features);

  for (auto _ : state) {
    auto report = ff::run_federated_prediction(
        run.complete, run.partials, columns, shards[0].n_rows(),
        classical ? ff::PredictMethod::Classical : ff::PredictMethod::Intersect);
    benchmark::DoNotOptimize(report);
  }
}
BENCHMARK(BM_PredictByDepth)
    ->Args({4, 0})
    ->Args({4, 1})
    ->Args({8, 0})
    ->Args({8, 1})
    ->Args({16, 0})
    ->Args({16, 1})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
