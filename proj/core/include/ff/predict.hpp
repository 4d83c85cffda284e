#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ff/train.hpp"
#include "ff/transport.hpp"
#include "ff/tree.hpp"

namespace ff {

/// One party's per-tree assignment: leaf node id -> sorted test row indices
/// reaching it under multi-path traversal. Sets may overlap across leaves;
/// every row appears in at least one.
struct LeafAssignment {
  std::int32_t tree_id = 0;
  std::map<std::int32_t, std::vector<std::int32_t>> leaf_rows;
};

/// Routes test rows 0..n_rows-1 through a partial tree: owned internal nodes
/// split by threshold, opaque internal nodes send every row down both
/// branches. Throws DataError when an owned node's feature column is missing.
LeafAssignment client_leaf_assignments(const PartialTree& partial, const FeatureColumns& columns,
                                       std::size_t n_rows, std::int32_t tree_id);

/// Per-leaf intersection across all parties. Inputs must share the tree id
/// and have identical leaf-id sets (reconstruct empty leaves before calling);
/// throws DataError otherwise. On assignments produced from consistent
/// partial trees the result partitions the test set.
std::map<std::int32_t, std::vector<std::int32_t>> intersect_leaf_sets(
    std::span<const LeafAssignment> assignments);

/// Majority vote (ties toward the smaller class) or mean over per-tree
/// predictions [tree][row].
std::vector<double> aggregate_forest(const std::vector<std::vector<double>>& per_tree,
                                     Task task);

enum class PredictRounds { PerTree, OnePerForest };

struct PredictionReport {
  PredictMethod method = PredictMethod::Intersect;
  std::vector<double> predictions;                 // one per test row
  std::vector<std::vector<std::int32_t>> leaf_of;  // [tree][row] leaf id (master debug)
  MessageStats stats;                              // master side, "predict" phase
};

/// Master side of the one-round prediction: broadcast PredictInit, gather
/// leaf assignments (once per tree, or once for the forest), intersect, read
/// labels off the complete model.
PredictionReport master_intersect_predict(PartyEndpoint& ep, const CompleteForest& forest,
                                          std::size_t n_test, PredictRounds rounds);

/// Master side of the classical baseline: routes every batch node by node
/// with one round trip to the owning party per visited internal node.
PredictionReport master_classical_predict(PartyEndpoint& ep, const CompleteForest& forest,
                                          std::size_t n_test);

/// Client side of a prediction session (either method). Returns after
/// Shutdown.
void client_predict_loop(PartyEndpoint& ep, const PartialForest& forest,
                         const FeatureColumns& test_columns, std::size_t n_rows);

/// Hosts master + M clients on threads and runs one prediction session.
PredictionReport run_federated_prediction(const CompleteForest& complete,
                                          const std::vector<PartialForest>& partials,
                                          const std::vector<FeatureColumns>& test_columns,
                                          std::size_t n_test, PredictMethod method,
                                          PredictRounds rounds = PredictRounds::PerTree,
                                          const RunOptions& options = {});

}  // namespace ff
