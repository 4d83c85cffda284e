#include "ff/model_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "ff/errors.hpp"

namespace ff {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string fingerprint_hex(std::uint64_t fp) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fp;
  return out.str();
}

std::uint64_t fingerprint_from_hex(const std::string& hex) {
  return std::stoull(hex, nullptr, 16);
}

std::string kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::InternalOwned:
      return "internal_owned";
    case NodeKind::InternalOpaque:
      return "internal_opaque";
    case NodeKind::Leaf:
      return "leaf";
  }
  return "leaf";
}

NodeKind kind_from_name(const std::string& name) {
  if (name == "internal_owned") return NodeKind::InternalOwned;
  if (name == "internal_opaque") return NodeKind::InternalOpaque;
  if (name == "leaf") return NodeKind::Leaf;
  throw DataError("model: unknown node kind '" + name + "'");
}

ordered_json node_to_json(const TreeNode& node, bool with_owner) {
  ordered_json j;
  j["id"] = node.id;
  j["kind"] = kind_name(node.kind);
  if (with_owner) {
    if (node.is_leaf()) {
      j["owner"] = nullptr;
    } else {
      j["owner"] = node.owner;
    }
  }
  if (node.feature) {
    j["feature"] = node.feature->value;
    j["threshold"] = node.threshold;
  } else {
    j["feature"] = nullptr;
    j["threshold"] = nullptr;
  }
  if (node.is_leaf()) {
    j["label"] = node.leaf_label;
    j["left"] = nullptr;
    j["right"] = nullptr;
  } else {
    j["label"] = nullptr;
    j["left"] = node.left;
    j["right"] = node.right;
  }
  return j;
}

TreeNode node_from_json(const nlohmann::json& j, bool with_owner) {
  TreeNode node;
  node.id = j.at("id").get<std::int32_t>();
  node.kind = kind_from_name(j.at("kind").get<std::string>());
  if (with_owner && !j.at("owner").is_null()) node.owner = j.at("owner").get<std::int32_t>();
  if (!j.at("feature").is_null()) {
    node.feature = FeatureId{j.at("feature").get<std::uint32_t>()};
    node.threshold = j.at("threshold").get<double>();
  }
  if (node.is_leaf()) {
    node.leaf_label = j.at("label").get<double>();
  } else {
    node.left = j.at("left").get<std::int32_t>();
    node.right = j.at("right").get<std::int32_t>();
  }
  return node;
}

ordered_json tree_to_json(const Tree& tree, bool with_owner) {
  ordered_json nodes = ordered_json::array();
  for (const auto& node : tree.nodes) nodes.push_back(node_to_json(node, with_owner));
  ordered_json j;
  j["nodes"] = std::move(nodes);
  return j;
}

Tree tree_from_json(const nlohmann::json& j, bool with_owner) {
  Tree tree;
  for (const auto& node : j.at("nodes")) tree.nodes.push_back(node_from_json(node, with_owner));
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (tree.nodes[i].id != static_cast<std::int32_t>(i)) {
      throw DataError("model: node ids are not the pre-order sequence");
    }
  }
  if (tree.nodes.empty()) throw DataError("model: empty tree");
  return tree;
}

ordered_json header_json(Task task, std::size_t n_trees, int m, std::uint64_t fingerprint) {
  ordered_json j;
  j["version"] = 1;
  j["task"] = task_name(task);
  j["n_trees"] = n_trees;
  j["m"] = m;
  j["config_fingerprint"] = fingerprint_hex(fingerprint);
  return j;
}

nlohmann::json load_checked(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model file " + path + ": " + e.what());
  }
  if (j.at("version").get<int>() != 1) throw DataError("unsupported model version in " + path);
  return j;
}

void dump_to(const std::string& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

void write_complete_model(const std::string& path, const CompleteForest& forest) {
  ordered_json j = header_json(forest.task, forest.trees.size(), forest.m,
                               forest.config_fingerprint);
  ordered_json trees = ordered_json::array();
  for (const auto& tree : forest.trees) trees.push_back(tree_to_json(tree.tree, true));
  j["trees"] = std::move(trees);
  dump_to(path, j);
}

CompleteForest read_complete_model(const std::string& path) {
  const auto j = load_checked(path);
  CompleteForest forest;
  forest.task = task_from_name(j.at("task").get<std::string>());
  forest.m = j.at("m").get<int>();
  forest.config_fingerprint = fingerprint_from_hex(j.at("config_fingerprint").get<std::string>());
  for (const auto& tj : j.at("trees")) {
    CompleteTree tree;
    tree.tree = tree_from_json(tj, true);
    for (const auto& node : tree.tree.nodes) {
      if (!node.is_leaf() && (node.kind != NodeKind::InternalOwned || !node.feature)) {
        throw DataError("complete model has an opaque internal node in " + path);
      }
    }
    forest.trees.push_back(std::move(tree));
  }
  if (static_cast<int>(forest.trees.size()) != j.at("n_trees").get<int>()) {
    throw DataError("model: n_trees header mismatch in " + path);
  }
  return forest;
}

void write_partial_model(const std::string& path, const PartialForest& forest) {
  ordered_json j = header_json(forest.task, forest.trees.size(), forest.m,
                               forest.config_fingerprint);
  j["party_rank"] = forest.party_rank;
  ordered_json trees = ordered_json::array();
  for (const auto& tree : forest.trees) trees.push_back(tree_to_json(tree.tree, false));
  j["trees"] = std::move(trees);
  dump_to(path, j);
}

PartialForest read_partial_model(const std::string& path) {
  const auto j = load_checked(path);
  PartialForest forest;
  forest.task = task_from_name(j.at("task").get<std::string>());
  forest.m = j.at("m").get<int>();
  forest.config_fingerprint = fingerprint_from_hex(j.at("config_fingerprint").get<std::string>());
  forest.party_rank = j.at("party_rank").get<int>();
  for (const auto& tj : j.at("trees")) {
    PartialTree tree;
    tree.party_rank = forest.party_rank;
    tree.tree = tree_from_json(tj, false);
    for (auto& node : tree.tree.nodes) {
      if (node.kind == NodeKind::InternalOwned) node.owner = forest.party_rank;
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

}  // namespace ff
