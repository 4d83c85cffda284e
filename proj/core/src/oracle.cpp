#include "ff/oracle.hpp"

#include <cmath>
#include <sstream>

#include "ff/csv.hpp"
#include "ff/errors.hpp"
#include "ff/metrics.hpp"
#include "ff/predict.hpp"

namespace ff {

PooledData pool_shards(const std::vector<ClientShard>& shards) {
  if (shards.empty()) throw DataError("pool_shards: no shards");
  PooledData data;
  data.n_rows = shards[0].n_rows();
  data.labels = shards[0].labels;
  for (const auto& shard : shards) {
    if (shard.n_rows() != data.n_rows) throw DataError("pool_shards: shards are not aligned");
    std::vector<FeatureId> fids;
    for (const auto& [fid, col] : shard.features) {
      data.columns.emplace(fid, col);
      fids.push_back(fid);
    }
    data.view.emplace(shard.party_rank, std::move(fids));
  }
  return data;
}

namespace {

/// The same recursion the master runs, with each party's local search
/// executed in place of a gather. Shares every arithmetic path with the
/// federated code (local_best_split, leaf_label, should_stop), so the result
/// is bit-identical, not merely close.
class CentralTrainer {
 public:
  CentralTrainer(const PooledData& data, const TrainConfig& config)
      : data_(data), config_(config), n_classes_(count_classes(data.labels)) {
    // Per-party single-shard views so local_best_split sees the exact same
    // inputs it sees on a real client.
    for (const auto& [rank, fids] : data_.view) {
      ClientShard shard;
      shard.party_rank = rank;
      shard.labels = data_.labels;
      for (const auto fid : fids) shard.features.emplace(fid, data_.columns.at(fid));
      shards_.push_back(std::move(shard));
    }
  }

  CompleteForest run() {
    CompleteForest forest;
    forest.task = config_.task;
    forest.m = config_.m;
    forest.config_fingerprint = config_.fingerprint();
    for (std::int32_t t = 0; t < config_.n_trees; ++t) {
      forest.trees.push_back(build_tree(t));
    }
    return forest;
  }

 private:
  CompleteTree build_tree(std::int32_t tree_id) {
    Xoshiro256ss rng(mix_seed(config_.seed, static_cast<std::uint64_t>(tree_id)));
    const TreeInputs inputs = sample_tree_inputs(rng, data_.n_rows, data_.view, config_);
    features_by_rank_ = inputs.features;
    tree_ = Tree{};
    build_node(NodeContext{tree_id, 0, 0, inputs.sample_rows});
    CompleteTree complete;
    complete.tree = std::move(tree_);
    return complete;
  }

  std::int32_t new_node() {
    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    TreeNode node;
    node.id = id;
    tree_.nodes.push_back(node);
    return id;
  }

  void settle_leaf(std::int32_t id, std::span<const std::int32_t> rows) {
    std::vector<double> node_labels;
    node_labels.reserve(rows.size());
    for (const auto r : rows) node_labels.push_back(data_.labels[static_cast<std::size_t>(r)]);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.kind = NodeKind::Leaf;
    node.leaf_label = leaf_label(node_labels, config_.task);
  }

  std::int32_t build_node(NodeContext ctx) {
    const std::int32_t id = new_node();
    ctx.node_id = id;
    if (should_stop(ctx, data_.labels, config_)) {
      settle_leaf(id, ctx.rows);
      return id;
    }

    // Rank-ascending scan mirrors the gather + argmax tie order exactly.
    std::optional<SplitCandidate> best;
    for (const auto& shard : shards_) {
      const auto& allowed = features_by_rank_.at(shard.party_rank);
      auto cand = local_best_split(shard, ctx.rows, allowed, data_.labels, config_.task,
                                   n_classes_, config_.min_samples_leaf);
      if (cand && (!best || cand->improvement > best->improvement)) best = cand;
    }

    if (!best || best->improvement < config_.min_impurity_decrease) {
      settle_leaf(id, ctx.rows);
      return id;
    }

    const auto& col = data_.columns.at(best->feature);
    std::vector<std::int32_t> left_rows, right_rows;
    for (const auto r : ctx.rows) {
      (col[static_cast<std::size_t>(r)] <= best->threshold ? left_rows : right_rows).push_back(r);
    }

    {
      auto& node = tree_.nodes[static_cast<std::size_t>(id)];
      node.kind = NodeKind::InternalOwned;
      node.owner = 0;  // virtual owner: everything lives in one place
      node.feature = best->feature;
      node.threshold = best->threshold;
    }
    const std::int32_t left =
        build_node(NodeContext{ctx.tree_id, -1, ctx.depth + 1, std::move(left_rows)});
    const std::int32_t right =
        build_node(NodeContext{ctx.tree_id, -1, ctx.depth + 1, std::move(right_rows)});
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.left = left;
    node.right = right;
    return id;
  }

  const PooledData& data_;
  const TrainConfig& config_;
  int n_classes_;
  std::vector<ClientShard> shards_;
  std::map<int, std::vector<FeatureId>> features_by_rank_;
  Tree tree_;
};

std::string node_field(const TreeNode& n, const std::string& field) {
  if (field == "kind") {
    return n.is_leaf() ? "leaf" : "internal";
  }
  if (field == "feature") {
    return n.feature ? std::to_string(n.feature->value) : "none";
  }
  if (field == "threshold") return format_double(n.threshold);
  if (field == "label") return format_double(n.leaf_label);
  if (field == "children") {
    return std::to_string(n.left) + "/" + std::to_string(n.right);
  }
  return "?";
}

std::optional<Divergence> compare_trees(int tree_id, const Tree& fed, const Tree& central) {
  if (fed.nodes.size() != central.nodes.size()) {
    return Divergence{tree_id, -1, "node_count", std::to_string(fed.nodes.size()),
                      std::to_string(central.nodes.size())};
  }
  for (std::size_t i = 0; i < fed.nodes.size(); ++i) {
    const auto& a = fed.nodes[i];
    const auto& b = central.nodes[i];
    const auto id = a.id;
    if (a.is_leaf() != b.is_leaf()) {
      return Divergence{tree_id, id, "kind", node_field(a, "kind"), node_field(b, "kind")};
    }
    if (a.left != b.left || a.right != b.right) {
      return Divergence{tree_id, id, "children", node_field(a, "children"),
                        node_field(b, "children")};
    }
    if (a.is_leaf()) {
      if (a.leaf_label != b.leaf_label) {
        return Divergence{tree_id, id, "label", node_field(a, "label"), node_field(b, "label")};
      }
    } else {
      if (a.feature != b.feature) {
        return Divergence{tree_id, id, "feature", node_field(a, "feature"),
                          node_field(b, "feature")};
      }
      if (a.threshold != b.threshold) {
        return Divergence{tree_id, id, "threshold", node_field(a, "threshold"),
                          node_field(b, "threshold")};
      }
    }
  }
  return std::nullopt;
}

}  // namespace

CompleteForest centralized_train(const PooledData& data, const TrainConfig& config) {
  config.validate();
  if (static_cast<int>(data.view.size()) != config.m) {
    throw DataError("centralized_train: config m=" + std::to_string(config.m) + " but pooled data has " +
                    std::to_string(data.view.size()) + " parties");
  }
  return CentralTrainer(data, config).run();
}

EquivalenceReport assert_equivalent(const CompleteForest& federated,
                                    const CompleteForest& centralized,
                                    const FeatureColumns& test_columns,
                                    const std::vector<double>& test_labels) {
  if (federated.config_fingerprint != centralized.config_fingerprint) {
    throw VerificationError("config fingerprint mismatch between models");
  }

  EquivalenceReport report;
  report.structural_equal = true;
  if (federated.trees.size() != centralized.trees.size()) {
    report.structural_equal = false;
    report.first_divergence = Divergence{-1, -1, "n_trees", std::to_string(federated.trees.size()),
                                         std::to_string(centralized.trees.size())};
  } else {
    for (std::size_t t = 0; t < federated.trees.size(); ++t) {
      auto div = compare_trees(static_cast<int>(t), federated.trees[t].tree,
                               centralized.trees[t].tree);
      if (div) {
        report.structural_equal = false;
        report.first_divergence = div;
        break;
      }
    }
  }

  const std::size_t n_test = test_labels.size();
  std::vector<std::vector<double>> fed_preds, central_preds;
  for (const auto& tree : federated.trees) {
    fed_preds.push_back(predict_tree(tree.tree, test_columns, n_test));
  }
  for (const auto& tree : centralized.trees) {
    central_preds.push_back(predict_tree(tree.tree, test_columns, n_test));
  }
  const auto fed = aggregate_forest(fed_preds, federated.task);
  const auto central = aggregate_forest(central_preds, centralized.task);
  report.prediction_equal = fed == central;
  if (federated.task == Task::Classification) {
    report.accuracy_federated = accuracy(fed, test_labels);
    report.accuracy_centralized = accuracy(central, test_labels);
  } else {
    report.accuracy_federated = rmse(fed, test_labels);
    report.accuracy_centralized = rmse(central, test_labels);
  }
  return report;
}

std::string EquivalenceReport::to_json() const {
  std::ostringstream out;
  out << "{\"structural_equal\":" << (structural_equal ? "true" : "false");
  if (first_divergence) {
    out << ",\"first_divergence\":{\"tree\":" << first_divergence->tree_id
        << ",\"node\":" << first_divergence->node_id << ",\"field\":\"" << first_divergence->field
        << "\",\"federated\":\"" << first_divergence->federated_value << "\",\"centralized\":\""
        << first_divergence->centralized_value << "\"}";
  }
  out << ",\"prediction_equal\":" << (prediction_equal ? "true" : "false")
      << ",\"metric_federated\":" << format_double(accuracy_federated)
      << ",\"metric_centralized\":" << format_double(accuracy_centralized) << "}";
  return out.str();
}

}  // namespace ff
