#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ff/dataset.hpp"
#include "ff/rng.hpp"
#include "ff/transport.hpp"
#include "ff/tree.hpp"

namespace ff {

struct TrainConfig {
  Task task = Task::Classification;
  int n_trees = 10;
  int max_depth = 16;
  std::int64_t min_samples_split = 2;
  std::int64_t min_samples_leaf = 1;
  double min_impurity_decrease = 0.0;
  double feature_fraction = 1.0;   // drawn once per tree, globally
  double sample_fraction = 0.8;    // rows, without replacement
  std::uint64_t seed = 0;
  int m = 2;                       // party count

  /// Throws UsageError when any field is out of range.
  void validate() const;

  /// FNV-1a over the canonical key=value rendering; embedded in model files
  /// and compared before any equivalence check.
  std::uint64_t fingerprint() const;

  std::string to_text() const;
};

TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);

/// The recursion state every party derives identically from shared messages.
struct NodeContext {
  std::int32_t tree_id = 0;
  std::int32_t node_id = 0;
  int depth = 0;
  std::vector<std::int32_t> rows;  // sorted ascending
};

/// Per-tree draw: the shared sample subset and each party's own slice of the
/// global feature draw (possibly empty). Row count is ceil(sample_fraction*N);
/// feature count is max(1, ceil(feature_fraction*|F|)) before routing.
struct TreeInputs {
  std::vector<std::int32_t> sample_rows;          // sorted
  std::map<int, std::vector<FeatureId>> features;  // rank -> sorted ids
};

TreeInputs sample_tree_inputs(Xoshiro256ss& rng, std::size_t n_samples, const MasterView& view,
                              const TrainConfig& config);

/// Shared pre-pruning predicate: depth, node size, purity. A pure function of
/// state every party holds, so all parties stop identically without a
/// message. The improvement threshold is checked separately by the master
/// after the gather.
bool should_stop(const NodeContext& ctx, std::span<const double> labels,
                 const TrainConfig& config);

struct TrainOptions {
  bool debug_leaf_check = false;  // broadcast MakeLeaf on every leaf and assert on clients
};

/// What the master knows: shared labels, the view, and nothing else.
struct MasterData {
  std::size_t n_samples = 0;
  std::vector<double> labels;
  MasterView view;
};

struct MasterTrainResult {
  CompleteForest forest;
  std::vector<MessageStats> per_tree_stats;
};

/// Coordinator state machine. Drives one tree at a time: per node it either
/// settles a leaf locally, or gathers LocalBest from every client, notifies
/// the winner, receives the split (indices + details), and broadcasts the
/// partition. Ties: improvement desc, then rank asc.
MasterTrainResult master_train(PartyEndpoint& ep, const MasterData& data,
                               const TrainConfig& config, const TrainOptions& options = {});

/// Participant state machine mirroring the master's recursion from shared
/// state. Returns after Shutdown.
PartialForest client_train_loop(PartyEndpoint& ep, const ClientShard& shard,
                                const TrainConfig& config, const TrainOptions& options = {});

// --- harness ------------------------------------------------------------------

enum class TransportKind { Inproc, Tcp };

struct RunOptions {
  TransportKind transport = TransportKind::Inproc;
  bool deterministic_schedule = false;  // inproc only: serialize party execution
  bool record_trace = false;
  TrainOptions train;
  std::uint16_t tcp_port = 0;  // 0 = ephemeral
};

struct TrainRun {
  CompleteForest complete;
  std::vector<PartialForest> partials;        // rank order 1..M
  MessageStats train_stats;                   // master side, "train" phase
  std::vector<MessageStats> per_tree_stats;
  std::shared_ptr<TraceSink> trace;           // null unless recorded
};

/// Hosts master + M clients on threads over the chosen transport and runs the
/// whole training protocol. Shards must be aligned and encoded.
TrainRun run_federated_training(const std::vector<ClientShard>& shards, const TrainConfig& config,
                                const RunOptions& options = {});

}  // namespace ff
