#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ff/train.hpp"
#include "ff/tree.hpp"

namespace ff {

/// The pooled (non-federated) view of a dataset: every party's columns in one
/// place, canonical sample order. Party structure is retained because the
/// federated tie-break order (rank asc, feature asc) depends on it.
struct PooledData {
  FeatureColumns columns;
  std::vector<double> labels;
  MasterView view;
  std::size_t n_rows = 0;
};

PooledData pool_shards(const std::vector<ClientShard>& shards);

/// Centralized random-forest baseline. Consumes the identical RNG streams,
/// split search, stopping rules and tie-breaks as the federated path, with
/// zero transport involvement. Nodes are owned by a virtual rank 0.
CompleteForest centralized_train(const PooledData& data, const TrainConfig& config);

struct Divergence {
  int tree_id = 0;
  std::int32_t node_id = 0;
  std::string field;
  std::string federated_value;
  std::string centralized_value;
};

struct EquivalenceReport {
  bool structural_equal = false;
  std::optional<Divergence> first_divergence;
  bool prediction_equal = false;
  double accuracy_federated = 0.0;    // accuracy or RMSE, per task
  double accuracy_centralized = 0.0;

  std::string to_json() const;
};

/// Node-by-node comparison (shape, feature, threshold, leaf labels, all with
/// exact float equality) plus a prediction comparison over the given test
/// rows. Throws VerificationError when the config fingerprints differ.
EquivalenceReport assert_equivalent(const CompleteForest& federated,
                                    const CompleteForest& centralized,
                                    const FeatureColumns& test_columns,
                                    const std::vector<double>& test_labels);

}  // namespace ff
