#pragma once

#include <cstdint>

#include "ff/csv.hpp"
#include "ff/tree.hpp"

namespace ff {

/// Deterministic synthetic datasets for tests, demos and benchmarks. Feature
/// columns are named f0..f<d-1>, the label column "y". Classification labels
/// come from axis-aligned threshold rules plus label noise, so small trees
/// can learn them; regression targets are a sparse linear signal plus noise.
RawTable make_classification_table(std::size_t n_rows, std::size_t n_features, int n_classes,
                                   std::uint64_t seed, double label_noise = 0.05);

RawTable make_regression_table(std::size_t n_rows, std::size_t n_features, std::uint64_t seed,
                               double noise = 0.1);

RawTable make_table(Task task, std::size_t n_rows, std::size_t n_features, int n_classes,
                    std::uint64_t seed);

/// Splits rows into train/test deterministically (seeded draw of
/// ceil(test_fraction * n) rows for the test side).
struct TrainTestSplit {
  RawTable train;
  RawTable test;
};
TrainTestSplit split_table(const RawTable& table, double test_fraction, std::uint64_t seed);

}  // namespace ff
