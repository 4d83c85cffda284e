#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ff/dataset.hpp"

namespace ff {

// The closed wire vocabulary between master (rank 0) and clients (1..M).
// Sample ids on the wire are dense row indices into the canonical aligned
// order; hashed digests never travel after ingestion.

/// Master -> client, once per tree: the shared sample subset plus that
/// client's own sampled feature ids (and nothing about anyone else's).
struct TrainInit {
  std::int32_t tree_id = 0;
  std::vector<std::int32_t> sample_rows;
  std::vector<FeatureId> feature_ids;

  bool operator==(const TrainInit&) const = default;
};

/// Client -> master: best local impurity improvement at a node, or absent
/// when the client cannot split. Deliberately carries no feature identity
/// and no threshold.
struct LocalBest {
  std::int32_t tree_id = 0;
  std::int32_t node_id = 0;
  std::optional<double> improvement;

  bool operator==(const LocalBest&) const = default;
};

/// Master -> winning client only.
struct WinnerNotify {
  std::int32_t tree_id = 0;
  std::int32_t node_id = 0;

  bool operator==(const WinnerNotify&) const = default;
};

/// Winning client -> master: the partition its threshold induces, plus the
/// split details the master records into the complete model.
struct SplitIndices {
  std::int32_t tree_id = 0;
  std::int32_t node_id = 0;
  FeatureId feature;
  double threshold = 0.0;
  std::vector<std::int32_t> left_rows;
  std::vector<std::int32_t> right_rows;

  bool operator==(const SplitIndices&) const = default;
};

/// Master -> all clients: the partition only; no owner, feature or threshold.
struct SplitBroadcast {
  std::int32_t tree_id = 0;
  std::int32_t node_id = 0;
  std::vector<std::int32_t> left_rows;
  std::vector<std::int32_t> right_rows;

  bool operator==(const SplitBroadcast&) const = default;
};

/// Master -> all clients: the node becomes a leaf. Required when no party
/// proposed a usable split (clients cannot deduce that themselves); also sent
/// for every leaf when the debug consistency check is on.
struct MakeLeaf {
  std::int32_t tree_id = 0;
  std::int32_t node_id = 0;

  bool operator==(const MakeLeaf&) const = default;
};

struct TreeDone {
  std::int32_t tree_id = 0;

  bool operator==(const TreeDone&) const = default;
};

enum class PredictMethod : std::uint8_t { Intersect = 0, Classical = 1 };

/// Master -> all clients, opening a prediction session.
struct PredictInit {
  std::int32_t n_test = 0;
  PredictMethod method = PredictMethod::Intersect;
  bool batch_all_trees = false;  // one gather for the whole forest

  bool operator==(const PredictInit&) const = default;
};

/// Leaf id -> sorted test row indices reaching it. Empty leaves are omitted
/// from the wire.
struct TreeLeafSets {
  std::int32_t tree_id = 0;
  std::vector<std::pair<std::int32_t, std::vector<std::int32_t>>> leaf_rows;

  bool operator==(const TreeLeafSets&) const = default;
};

/// Client -> master: one gather's worth of leaf assignments (a single tree in
/// per-tree mode, all trees in one-per-forest mode).
struct LeafAssignmentsMsg {
  std::vector<TreeLeafSets> trees;

  bool operator==(const LeafAssignmentsMsg&) const = default;
};

/// Master -> owning client: split this batch at your node.
struct ClassicalRoute {
  std::int32_t tree_id = 0;
  std::int32_t node_id = 0;
  std::vector<std::int32_t> rows;

  bool operator==(const ClassicalRoute&) const = default;
};

struct ClassicalRouteReply {
  std::int32_t tree_id = 0;
  std::int32_t node_id = 0;
  std::vector<std::int32_t> left_rows;
  std::vector<std::int32_t> right_rows;

  bool operator==(const ClassicalRouteReply&) const = default;
};

struct Shutdown {
  bool operator==(const Shutdown&) const = default;
};

using Message = std::variant<TrainInit, LocalBest, WinnerNotify, SplitIndices, SplitBroadcast,
                             MakeLeaf, TreeDone, PredictInit, LeafAssignmentsMsg, ClassicalRoute,
                             ClassicalRouteReply, Shutdown>;

/// Frame layout: 4-byte big-endian length prefix, then a 1-byte tag, then the
/// canonical field serialization. Length counts tag + fields. Bit-exact:
/// decode(encode(m)) == m for every variant.
std::vector<std::uint8_t> wire_encode(const Message& msg);

/// Throws ProtocolError on truncated frames, trailing bytes, unknown tags, or
/// length overflow.
Message wire_decode(std::span<const std::uint8_t> frame);

/// Human-readable message kind ("TrainInit", ...).
std::string message_kind(const Message& msg);

/// Number of ids (sample rows, feature ids, leaf ids) the payload carries;
/// the unit MessageStats::total_payload_ids accumulates.
std::uint64_t payload_id_count(const Message& msg);

}  // namespace ff
