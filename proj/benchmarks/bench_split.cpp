#include <benchmark/benchmark.h>

#include "ff/rng.hpp"
#include "ff/tree.hpp"

namespace {

void BM_BestSplitClassification(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ff::Xoshiro256ss rng(1);
  std::vector<double> values(n), labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = static_cast<double>(rng.next_below(1000));
    labels[i] = static_cast<double>(rng.next_below(3));
  }
  for (auto _ : state) {
    auto cand = ff::best_split_for_feature(values, labels, ff::Task::Classification, 3, 1);
    benchmark::DoNotOptimize(cand);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_BestSplitClassification)->Arg(256)->Arg(1024)->Arg(4096);

void BM_BestSplitRegression(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ff::Xoshiro256ss rng(2);
  std::vector<double> values(n), labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = static_cast<double>(rng.next_below(1000));
    labels[i] = static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
  }
  for (auto _ : state) {
    auto cand = ff::best_split_for_feature(values, labels, ff::Task::Regression, 0, 1);
    benchmark::DoNotOptimize(cand);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_BestSplitRegression)->Arg(256)->Arg(1024)->Arg(4096);

void BM_Gini(benchmark::State& state) {
  std::vector<std::int64_t> counts{123, 456, 789};
  for (auto _ : state) {
    benchmark::DoNotOptimize(ff::gini(counts));
  }
}
BENCHMARK(BM_Gini);

}  // namespace
