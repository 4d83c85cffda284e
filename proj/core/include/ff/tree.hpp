#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ff/dataset.hpp"

namespace ff {

enum class Task { Classification, Regression };

std::string task_name(Task task);
Task task_from_name(const std::string& name);

enum class NodeKind : std::uint8_t { InternalOwned, InternalOpaque, Leaf };

/// A node of the shared binary structure. Ids are assigned in pre-order
/// during construction and double as indices into Tree::nodes. Split details
/// (feature, threshold) are present only on InternalOwned nodes; leaf labels
/// are present on every party's copy.
struct TreeNode {
  std::int32_t id = -1;
  NodeKind kind = NodeKind::Leaf;
  std::int32_t owner = -1;            // owning rank; -1 when unknown (opaque/leaf)
  std::optional<FeatureId> feature;   // InternalOwned only
  double threshold = 0.0;             // InternalOwned only
  double leaf_label = 0.0;            // Leaf only: class index or mean
  std::int32_t left = -1;
  std::int32_t right = -1;

  bool is_leaf() const { return kind == NodeKind::Leaf; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[i].id == i, root at 0

  const TreeNode& root() const { return nodes.front(); }
  std::size_t n_internal() const;
  std::vector<std::int32_t> leaf_ids() const;
};

/// A client's copy: full structure, split details only where owned.
struct PartialTree {
  int party_rank = 0;
  Tree tree;
};

/// The master's copy: full structure with every internal node's details and
/// owner recorded.
struct CompleteTree {
  Tree tree;
};

struct CompleteForest {
  Task task = Task::Classification;
  int m = 0;
  std::uint64_t config_fingerprint = 0;
  std::vector<CompleteTree> trees;
};

struct PartialForest {
  Task task = Task::Classification;
  int m = 0;
  std::uint64_t config_fingerprint = 0;
  int party_rank = 0;
  std::vector<PartialTree> trees;
};

/// A split proposed by one party: opaque feature, threshold, and the impurity
/// decrease it achieves. Counts satisfy the min_samples_leaf constraint the
/// search ran under.
struct SplitCandidate {
  FeatureId feature;
  double threshold = 0.0;
  double improvement = 0.0;
  std::int64_t left_count = 0;
  std::int64_t right_count = 0;
};

// --- impurity ----------------------------------------------------------------

/// Gini impurity 1 - sum p_k^2 of a class-count vector. Zero iff one class
/// holds every sample. Throws DataError when all counts are zero.
double gini(std::span<const std::int64_t> class_counts);

/// Mean squared deviation from the mean. Zero iff all values are equal.
/// Throws DataError on an empty vector.
double variance_impurity(std::span<const double> values);

// --- split search ------------------------------------------------------------

/// Scans midpoints between adjacent distinct sorted values of one feature
/// column and returns the threshold maximizing
///   improvement = I(parent) - (nL/n) I(left) - (nR/n) I(right),
/// ties toward the smallest threshold. Returns nothing when no threshold
/// yields a positive improvement under the leaf-size constraint.
/// n_classes is ignored for regression.
std::optional<SplitCandidate> best_split_for_feature(std::span<const double> values,
                                                     std::span<const double> labels,
                                                     Task task, int n_classes,
                                                     std::int64_t min_samples_leaf);

/// Best candidate over the allowed features of one shard at the given node
/// rows; feature ties toward the smallest id. Returns nothing when
/// allowed_features is empty or nothing splits. Throws DataError for a
/// feature id the shard does not hold.
std::optional<SplitCandidate> local_best_split(const ClientShard& shard,
                                               std::span<const std::int32_t> node_rows,
                                               std::span<const FeatureId> allowed_features,
                                               std::span<const double> labels,
                                               Task task, int n_classes,
                                               std::int64_t min_samples_leaf);

/// Majority class (ties toward the smaller index) for classification, mean
/// for regression. Throws DataError on empty labels.
double leaf_label(std::span<const double> labels, Task task);

/// Number of distinct classes implied by a label vector (max index + 1).
int count_classes(std::span<const double> labels);

// --- partial/complete plumbing -----------------------------------------------

/// Merges structurally identical partial trees into the complete tree,
/// requiring every internal node to be owned by exactly one party. Throws
/// DataError on structural mismatch or zero/multiple owners.
CompleteTree overlay(std::span<const PartialTree> partials);

/// Projects a complete tree down to what one party is allowed to store.
PartialTree make_partial_view(const CompleteTree& complete, int party_rank);

// --- routing -----------------------------------------------------------------

using FeatureColumns = std::map<FeatureId, std::vector<double>>;

/// Routes rows through a fully-detailed tree (x <= threshold goes left) and
/// returns the leaf node id for each row.
std::vector<std::int32_t> route_complete(const Tree& tree, const FeatureColumns& columns,
                                         std::span<const std::int32_t> rows);

/// Per-row prediction of a fully-detailed tree over rows 0..n_rows-1.
std::vector<double> predict_tree(const Tree& tree, const FeatureColumns& columns,
                                 std::size_t n_rows);

}  // namespace ff
