#include "ff/synth.hpp"

#include <algorithm>
#include <cmath>

#include "ff/errors.hpp"
#include "ff/rng.hpp"

namespace ff {
namespace {

double unit_double(Xoshiro256ss& rng) {
  return static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
}

std::vector<std::string> feature_names(std::size_t d) {
  std::vector<std::string> names(d);
  for (std::size_t c = 0; c < d; ++c) names[c] = "f" + std::to_string(c);
  return names;
}

}  // namespace

RawTable make_classification_table(std::size_t n_rows, std::size_t n_features, int n_classes,
                                   std::uint64_t seed, double label_noise) {
  if (n_rows == 0 || n_features == 0 || n_classes < 2) {
    throw UsageError("make_classification_table: bad shape");
  }
  Xoshiro256ss rng(mix_seed(seed, 0x51A7u));
  RawTable table;
  table.feature_names = feature_names(n_features);
  table.label_name = "y";

  // Two informative features define the class regions; the rest is noise.
  const std::size_t f_a = rng.next_below(n_features);
  std::size_t f_b = rng.next_below(n_features);
  if (n_features > 1) {
    while (f_b == f_a) f_b = rng.next_below(n_features);
  }
  const double t_a = 0.3 + 0.4 * unit_double(rng);
  const double t_b = 0.3 + 0.4 * unit_double(rng);

  for (std::size_t r = 0; r < n_rows; ++r) {
    std::vector<double> row(n_features);
    for (auto& v : row) v = unit_double(rng);
    int label = row[f_a] <= t_a ? 0 : 1;
    if (n_classes > 2 && row[f_b] > t_b) {
      label = 2 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_classes - 2)));
    }
    if (unit_double(rng) < label_noise) {
      label = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_classes)));
    }
    table.rows.push_back(std::move(row));
    table.labels.push_back(static_cast<double>(label));
  }
  return table;
}

RawTable make_regression_table(std::size_t n_rows, std::size_t n_features, std::uint64_t seed,
                               double noise) {
  if (n_rows == 0 || n_features == 0) throw UsageError("make_regression_table: bad shape");
  Xoshiro256ss rng(mix_seed(seed, 0x4E64u));
  RawTable table;
  table.feature_names = feature_names(n_features);
  table.label_name = "y";

  std::vector<double> weights(n_features, 0.0);
  const std::size_t informative = std::max<std::size_t>(1, n_features / 2);
  for (std::size_t c = 0; c < informative; ++c) {
    weights[c] = 2.0 * unit_double(rng) - 1.0;
  }
  shuffle_inplace(rng, weights);

  for (std::size_t r = 0; r < n_rows; ++r) {
    std::vector<double> row(n_features);
    for (auto& v : row) v = unit_double(rng);
    double y = 0.0;
    for (std::size_t c = 0; c < n_features; ++c) y += weights[c] * row[c];
    y += noise * (2.0 * unit_double(rng) - 1.0);
    table.rows.push_back(std::move(row));
    table.labels.push_back(y);
  }
  return table;
}

RawTable make_table(Task task, std::size_t n_rows, std::size_t n_features, int n_classes,
                    std::uint64_t seed) {
  return task == Task::Classification
             ? make_classification_table(n_rows, n_features, n_classes, seed)
             : make_regression_table(n_rows, n_features, seed);
}

TrainTestSplit split_table(const RawTable& table, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw UsageError("split_table: test_fraction must be in [0, 1)");
  }
  const std::size_t n = table.n_rows();
  const auto k_test =
      static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n)));
  Xoshiro256ss rng(mix_seed(seed, 0x5917u));
  const auto test_rows = sample_without_replacement(rng, n, k_test);

  std::vector<bool> is_test(n, false);
  for (const auto r : test_rows) is_test[static_cast<std::size_t>(r)] = true;

  TrainTestSplit split;
  split.train.feature_names = split.test.feature_names = table.feature_names;
  split.train.label_name = split.test.label_name = table.label_name;
  for (std::size_t r = 0; r < n; ++r) {
    auto& side = is_test[r] ? split.test : split.train;
    side.rows.push_back(table.rows[r]);
    if (!table.labels.empty()) side.labels.push_back(table.labels[r]);
  }
  return split;
}

}  // namespace ff
