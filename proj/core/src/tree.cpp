#include "ff/tree.hpp"

#include <algorithm>
#include <cmath>

#include "ff/errors.hpp"

namespace ff {

std::string task_name(Task task) {
  return task == Task::Classification ? "classification" : "regression";
}

Task task_from_name(const std::string& name) {
  if (name == "classification") return Task::Classification;
  if (name == "regression") return Task::Regression;
  throw UsageError("unknown task '" + name + "' (expected classification|regression)");
}

std::size_t Tree::n_internal() const {
  std::size_t count = 0;
  for (const auto& n : nodes) {
    if (!n.is_leaf()) ++count;
  }
  return count;
}

std::vector<std::int32_t> Tree::leaf_ids() const {
  std::vector<std::int32_t> ids;
  for (const auto& n : nodes) {
    if (n.is_leaf()) ids.push_back(n.id);
  }
  return ids;
}

double gini(std::span<const std::int64_t> class_counts) {
  std::int64_t total = 0;
  for (auto c : class_counts) total += c;
  if (total <= 0) throw DataError("gini: all class counts are zero");
  double acc = 0.0;
  for (auto c : class_counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    acc += p * p;
  }
  return 1.0 - acc;
}

double variance_impurity(std::span<const double> values) {
  if (values.empty()) throw DataError("variance_impurity: empty vector");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) {
    const double d = v - mean;
    sq += d * d;
  }
  return sq / static_cast<double>(values.size());
}

int count_classes(std::span<const double> labels) {
  int max_class = 0;
  for (double y : labels) {
    const int c = static_cast<int>(std::lround(y));
    if (c > max_class) max_class = c;
  }
  return max_class + 1;
}

double leaf_label(std::span<const double> labels, Task task) {
  if (labels.empty()) throw DataError("leaf_label: empty labels");
  if (task == Task::Regression) {
    double sum = 0.0;
    for (double y : labels) sum += y;
    return sum / static_cast<double>(labels.size());
  }
  std::vector<std::int64_t> counts(static_cast<std::size_t>(count_classes(labels)), 0);
  for (double y : labels) counts[static_cast<std::size_t>(std::lround(y))]++;
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = c;  // strict: ties keep the smaller index
  }
  return static_cast<double>(best);
}

std::optional<SplitCandidate> best_split_for_feature(std::span<const double> values,
                                                     std::span<const double> labels,
                                                     Task task, int n_classes,
                                                     std::int64_t min_samples_leaf) {
  if (values.size() != labels.size()) {
    throw DataError("best_split_for_feature: values/labels length mismatch");
  }
  const std::size_t n = values.size();
  if (n < 2) return std::nullopt;

  // Total order (value, position) so equal values sort reproducibly.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });

  double parent_impurity = 0.0;
  std::vector<std::int64_t> left_counts, right_counts;
  double left_sum = 0.0, left_sq = 0.0, right_sum = 0.0, right_sq = 0.0;
  if (task == Task::Classification) {
    left_counts.assign(static_cast<std::size_t>(n_classes), 0);
    right_counts.assign(static_cast<std::size_t>(n_classes), 0);
    for (double y : labels) right_counts[static_cast<std::size_t>(std::lround(y))]++;
    parent_impurity = gini(right_counts);
  } else {
    for (double y : labels) {
      right_sum += y;
      right_sq += y * y;
    }
    parent_impurity = variance_impurity(labels);
  }
  if (parent_impurity == 0.0) return std::nullopt;

  const auto child_variance = [](double sum, double sq, std::int64_t cnt) {
    const double mean = sum / static_cast<double>(cnt);
    const double var = sq / static_cast<double>(cnt) - mean * mean;
    return var < 0.0 ? 0.0 : var;
  };

  std::optional<SplitCandidate> best;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double y = labels[order[i]];
    if (task == Task::Classification) {
      const auto c = static_cast<std::size_t>(std::lround(y));
      left_counts[c]++;
      right_counts[c]--;
    } else {
      left_sum += y;
      left_sq += y * y;
      right_sum -= y;
      right_sq -= y * y;
    }
    const double v = values[order[i]];
    const double v_next = values[order[i + 1]];
    if (v == v_next) continue;  // not a boundary between distinct values

    const auto n_left = static_cast<std::int64_t>(i + 1);
    const auto n_right = static_cast<std::int64_t>(n) - n_left;
    if (n_left < min_samples_leaf || n_right < min_samples_leaf) continue;

    double impurity_left = 0.0, impurity_right = 0.0;
    if (task == Task::Classification) {
      impurity_left = gini(left_counts);
      impurity_right = gini(right_counts);
    } else {
      impurity_left = child_variance(left_sum, left_sq, n_left);
      impurity_right = child_variance(right_sum, right_sq, n_right);
    }
    const double wl = static_cast<double>(n_left) / static_cast<double>(n);
    const double wr = static_cast<double>(n_right) / static_cast<double>(n);
    const double improvement = parent_impurity - wl * impurity_left - wr * impurity_right;
    if (improvement <= 0.0) continue;
    if (!best || improvement > best->improvement) {  // strict: ties keep the smaller threshold
      best = SplitCandidate{FeatureId{0}, (v + v_next) / 2.0, improvement, n_left, n_right};
    }
  }
  return best;
}

std::optional<SplitCandidate> local_best_split(const ClientShard& shard,
                                               std::span<const std::int32_t> node_rows,
                                               std::span<const FeatureId> allowed_features,
                                               std::span<const double> labels,
                                               Task task, int n_classes,
                                               std::int64_t min_samples_leaf) {
  if (allowed_features.empty()) return std::nullopt;

  std::vector<FeatureId> feats(allowed_features.begin(), allowed_features.end());
  std::sort(feats.begin(), feats.end());

  std::vector<double> node_labels;
  node_labels.reserve(node_rows.size());
  for (auto r : node_rows) node_labels.push_back(labels[static_cast<std::size_t>(r)]);

  std::optional<SplitCandidate> best;
  std::vector<double> node_values(node_rows.size());
  for (const auto fid : feats) {
    auto it = shard.features.find(fid);
    if (it == shard.features.end()) {
      throw DataError("local_best_split: unknown feature id " + std::to_string(fid.value));
    }
    const auto& col = it->second;
    for (std::size_t i = 0; i < node_rows.size(); ++i) {
      node_values[i] = col[static_cast<std::size_t>(node_rows[i])];
    }
    auto cand = best_split_for_feature(node_values, node_labels, task, n_classes, min_samples_leaf);
    if (!cand) continue;
    cand->feature = fid;
    if (!best || cand->improvement > best->improvement) {  // ties keep the smaller feature id
      best = cand;
    }
  }
  return best;
}

namespace {

void check_same_structure(const Tree& a, const Tree& b, const std::string& what) {
  if (a.nodes.size() != b.nodes.size()) throw DataError("overlay: node count mismatch " + what);
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    const auto& na = a.nodes[i];
    const auto& nb = b.nodes[i];
    if (na.id != nb.id || na.is_leaf() != nb.is_leaf() || na.left != nb.left ||
        na.right != nb.right) {
      throw DataError("overlay: structural mismatch at node " + std::to_string(na.id) + " " + what);
    }
    if (na.is_leaf() && na.leaf_label != nb.leaf_label) {
      throw DataError("overlay: leaf label mismatch at node " + std::to_string(na.id) + " " + what);
    }
  }
}

}  // namespace

CompleteTree overlay(std::span<const PartialTree> partials) {
  if (partials.empty()) throw DataError("overlay: no partial trees");
  for (std::size_t i = 1; i < partials.size(); ++i) {
    check_same_structure(partials[0].tree, partials[i].tree,
                         "(ranks " + std::to_string(partials[0].party_rank) + " vs " +
                             std::to_string(partials[i].party_rank) + ")");
  }

  CompleteTree complete;
  complete.tree = partials[0].tree;
  for (auto& node : complete.tree.nodes) {
    if (node.is_leaf()) {
      node.owner = -1;
      continue;
    }
    int owner = -1;
    std::optional<FeatureId> feature;
    double threshold = 0.0;
    for (const auto& partial : partials) {
      const auto& pn = partial.tree.nodes[static_cast<std::size_t>(node.id)];
      if (pn.kind == NodeKind::InternalOwned) {
        if (owner != -1) {
          throw DataError("overlay: node " + std::to_string(node.id) +
                          " owned by multiple parties (" + std::to_string(owner) + " and " +
                          std::to_string(partial.party_rank) + ")");
        }
        owner = partial.party_rank;
        feature = pn.feature;
        threshold = pn.threshold;
      }
    }
    if (owner == -1) {
      throw DataError("overlay: internal node " + std::to_string(node.id) + " has no owner");
    }
    node.kind = NodeKind::InternalOwned;
    node.owner = owner;
    node.feature = feature;
    node.threshold = threshold;
  }
  return complete;
}

PartialTree make_partial_view(const CompleteTree& complete, int party_rank) {
  PartialTree partial;
  partial.party_rank = party_rank;
  partial.tree = complete.tree;
  for (auto& node : partial.tree.nodes) {
    if (node.is_leaf()) continue;
    if (node.owner == party_rank) {
      node.kind = NodeKind::InternalOwned;
      node.owner = party_rank;
    } else {
      node.kind = NodeKind::InternalOpaque;
      node.owner = -1;
      node.feature.reset();
      node.threshold = 0.0;
    }
  }
  return partial;
}

std::vector<std::int32_t> route_complete(const Tree& tree, const FeatureColumns& columns,
                                         std::span<const std::int32_t> rows) {
  std::vector<std::int32_t> leaf(rows.size(), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto row = static_cast<std::size_t>(rows[i]);
    std::int32_t cur = 0;
    while (!tree.nodes[static_cast<std::size_t>(cur)].is_leaf()) {
      const auto& node = tree.nodes[static_cast<std::size_t>(cur)];
      if (!node.feature) throw DataError("route_complete: opaque node in complete tree");
      auto it = columns.find(*node.feature);
      if (it == columns.end()) {
        throw DataError("route_complete: missing feature column " +
                        std::to_string(node.feature->value));
      }
      cur = it->second[row] <= node.threshold ? node.left : node.right;
    }
    leaf[i] = cur;
  }
  return leaf;
}

std::vector<double> predict_tree(const Tree& tree, const FeatureColumns& columns,
                                 std::size_t n_rows) {
  std::vector<std::int32_t> rows(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) rows[i] = static_cast<std::int32_t>(i);
  const auto leaves = route_complete(tree, columns, rows);
  std::vector<double> out(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) {
    out[i] = tree.nodes[static_cast<std::size_t>(leaves[i])].leaf_label;
  }
  return out;
}

}  // namespace ff
