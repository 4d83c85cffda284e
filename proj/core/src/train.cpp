#include "ff/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "ff/errors.hpp"

namespace ff {

// --- config ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (n_trees < 1) throw UsageError("config: n_trees must be >= 1");
  if (max_depth < 1) throw UsageError("config: max_depth must be >= 1");
  if (min_samples_split < 2) throw UsageError("config: min_samples_split must be >= 2");
  if (min_samples_leaf < 1) throw UsageError("config: min_samples_leaf must be >= 1");
  if (min_impurity_decrease < 0) throw UsageError("config: min_impurity_decrease must be >= 0");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) {
    throw UsageError("config: feature_fraction must be in (0, 1]");
  }
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw UsageError("config: sample_fraction must be in (0, 1]");
  }
  if (m < 1) throw UsageError("config: m must be >= 1");
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "task = " << task_name(task) << '\n'
      << "n_trees = " << n_trees << '\n'
      << "max_depth = " << max_depth << '\n'
      << "min_samples_split = " << min_samples_split << '\n'
      << "min_samples_leaf = " << min_samples_leaf << '\n'
      << "min_impurity_decrease = " << format_double(min_impurity_decrease) << '\n'
      << "feature_fraction = " << format_double(feature_fraction) << '\n'
      << "sample_fraction = " << format_double(sample_fraction) << '\n'
      << "seed = " << seed << '\n'
      << "m = " << m << '\n';
  return out.str();
}

std::uint64_t TrainConfig::fingerprint() const {
  const std::string text = to_text();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (blank) continue;
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    try {
      if (key == "task") {
        config.task = task_from_name(value);
      } else if (key == "n_trees") {
        config.n_trees = std::stoi(value);
      } else if (key == "max_depth") {
        config.max_depth = std::stoi(value);
      } else if (key == "min_samples_split") {
        config.min_samples_split = std::stoll(value);
      } else if (key == "min_samples_leaf") {
        config.min_samples_leaf = std::stoll(value);
      } else if (key == "min_impurity_decrease") {
        config.min_impurity_decrease = std::stod(value);
      } else if (key == "feature_fraction") {
        config.feature_fraction = std::stod(value);
      } else if (key == "sample_fraction") {
        config.sample_fraction = std::stod(value);
      } else if (key == "seed") {
        config.seed = std::stoull(value);
      } else if (key == "m") {
        config.m = std::stoi(value);
      } else {
        throw UsageError("config: unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw UsageError("config: bad value for '" + key + "': " + value);
    } catch (const std::out_of_range&) {
      throw UsageError("config: value out of range for '" + key + "': " + value);
    }
  }
  return config;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

// --- sampling --------------------------------------------------------------------

TreeInputs sample_tree_inputs(Xoshiro256ss& rng, std::size_t n_samples, const MasterView& view,
                              const TrainConfig& config) {
  if (n_samples == 0) throw DataError("sample_tree_inputs: empty dataset");

  TreeInputs out;
  const auto k_rows = static_cast<std::size_t>(
      std::ceil(config.sample_fraction * static_cast<double>(n_samples)));
  out.sample_rows = sample_without_replacement(rng, n_samples, std::min(k_rows, n_samples));

  // Global feature pool in (rank asc, id asc) order; the draw happens over
  // the pool, the routing back to parties is a lookup.
  std::vector<std::pair<int, FeatureId>> pool;
  for (const auto& [rank, fids] : view) {
    out.features[rank] = {};
    for (const auto fid : fids) pool.emplace_back(rank, fid);
  }
  const std::size_t n_features = pool.size();
  if (n_features == 0) throw DataError("sample_tree_inputs: no features in master view");
  const auto k_feats = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(config.feature_fraction * static_cast<double>(n_features))));
  const auto picks = sample_without_replacement(rng, n_features, std::min(k_feats, n_features));
  for (const auto p : picks) {
    const auto& [rank, fid] = pool[static_cast<std::size_t>(p)];
    out.features[rank].push_back(fid);
  }
  for (auto& [rank, fids] : out.features) std::sort(fids.begin(), fids.end());
  return out;
}

bool should_stop(const NodeContext& ctx, std::span<const double> labels,
                 const TrainConfig& config) {
  // Depth counts levels: a tree of max_depth k keeps its nodes on levels
  // 0..k-1, so a single-leaf tree has max_depth 1 and a depth-k tree at most
  // 2^(k-1) leaves.
  if (ctx.depth + 1 >= config.max_depth) return true;
  if (static_cast<std::int64_t>(ctx.rows.size()) < config.min_samples_split) return true;
  const double first = labels[static_cast<std::size_t>(ctx.rows.front())];
  for (const auto r : ctx.rows) {
    if (labels[static_cast<std::size_t>(r)] != first) return false;
  }
  return true;  // pure node
}

namespace {

std::vector<double> labels_at(std::span<const double> labels, std::span<const std::int32_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto r : rows) out.push_back(labels[static_cast<std::size_t>(r)]);
  return out;
}

template <typename M>
M expect(Message&& msg, const std::string& what) {
  if (auto* m = std::get_if<M>(&msg)) return std::move(*m);
  throw ProtocolError("expected " + what + ", got " + message_kind(msg));
}

void check_partition(std::span<const std::int32_t> parent, const std::vector<std::int32_t>& left,
                     const std::vector<std::int32_t>& right) {
  if (left.size() + right.size() != parent.size()) {
    throw ProtocolError("split indices do not partition the node samples");
  }
  std::vector<std::int32_t> merged;
  merged.reserve(parent.size());
  std::merge(left.begin(), left.end(), right.begin(), right.end(), std::back_inserter(merged));
  if (!std::equal(merged.begin(), merged.end(), parent.begin())) {
    throw ProtocolError("split indices do not partition the node samples");
  }
}

// --- master ----------------------------------------------------------------------

class MasterTrainer {
 public:
  MasterTrainer(PartyEndpoint& ep, const MasterData& data, const TrainConfig& config,
                const TrainOptions& options)
      : ep_(ep), data_(data), config_(config), options_(options) {}

  MasterTrainResult run() {
    MasterTrainResult result;
    result.forest.task = config_.task;
    result.forest.m = config_.m;
    result.forest.config_fingerprint = config_.fingerprint();
    ep_.set_phase("train");
    MessageStats before = ep_.current_stats();
    for (std::int32_t t = 0; t < config_.n_trees; ++t) {
      result.forest.trees.push_back(build_tree(t));
      const MessageStats after = ep_.current_stats();
      result.per_tree_stats.push_back(after - before);
      before = after;
    }
    return result;
  }

 private:
  CompleteTree build_tree(std::int32_t tree_id) {
    Xoshiro256ss rng(mix_seed(config_.seed, static_cast<std::uint64_t>(tree_id)));
    const TreeInputs inputs = sample_tree_inputs(rng, data_.n_samples, data_.view, config_);
    for (int c = 1; c <= ep_.n_clients(); ++c) {
      ep_.send(c, TrainInit{tree_id, inputs.sample_rows, inputs.features.at(c)});
    }
    tree_ = Tree{};
    tree_id_ = tree_id;
    build_node(NodeContext{tree_id, 0, 0, inputs.sample_rows});
    ep_.broadcast(TreeDone{tree_id});
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
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.kind = NodeKind::Leaf;
    const auto node_labels = labels_at(data_.labels, rows);
    node.leaf_label = leaf_label(node_labels, config_.task);
  }

  std::int32_t build_node(NodeContext ctx) {
    const std::int32_t id = new_node();
    ctx.node_id = id;

    if (should_stop(ctx, data_.labels, config_)) {
      settle_leaf(id, ctx.rows);
      if (options_.debug_leaf_check) ep_.broadcast(MakeLeaf{tree_id_, id});
      return id;
    }

    // Every client reports its best improvement (or nothing); the winner is
    // the max, ties to the smaller rank. Feature identity stays hidden.
    int winner = -1;
    double best = 0.0;
    for (const auto& [rank, msg] : ep_.gather()) {
      auto lb = expect<LocalBest>(Message(msg), "LocalBest");
      if (lb.tree_id != tree_id_ || lb.node_id != id) {
        throw ProtocolError("LocalBest out of context from rank " + std::to_string(rank));
      }
      if (lb.improvement && (winner == -1 || *lb.improvement > best)) {
        winner = rank;
        best = *lb.improvement;
      }
    }

    if (winner == -1 || best < config_.min_impurity_decrease) {
      // No party can usefully split; the clients cannot know that, so the
      // demotion is announced.
      ep_.broadcast(MakeLeaf{tree_id_, id});
      settle_leaf(id, ctx.rows);
      return id;
    }

    ep_.send(winner, WinnerNotify{tree_id_, id});
    auto split = expect<SplitIndices>(ep_.recv(winner), "SplitIndices");
    if (split.tree_id != tree_id_ || split.node_id != id) {
      throw ProtocolError("SplitIndices out of context from rank " + std::to_string(winner));
    }
    check_partition(ctx.rows, split.left_rows, split.right_rows);
    ep_.broadcast(SplitBroadcast{tree_id_, id, split.left_rows, split.right_rows});

    {
      auto& node = tree_.nodes[static_cast<std::size_t>(id)];
      node.kind = NodeKind::InternalOwned;
      node.owner = winner;
      node.feature = split.feature;
      node.threshold = split.threshold;
    }
    const std::int32_t left =
        build_node(NodeContext{tree_id_, -1, ctx.depth + 1, std::move(split.left_rows)});
    const std::int32_t right =
        build_node(NodeContext{tree_id_, -1, ctx.depth + 1, std::move(split.right_rows)});
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.left = left;
    node.right = right;
    return id;
  }

  PartyEndpoint& ep_;
  const MasterData& data_;
  const TrainConfig& config_;
  const TrainOptions& options_;
  Tree tree_;
  std::int32_t tree_id_ = 0;
};

// --- client ----------------------------------------------------------------------

class ClientTrainer {
 public:
  ClientTrainer(PartyEndpoint& ep, const ClientShard& shard, const TrainConfig& config,
                const TrainOptions& options)
      : ep_(ep), shard_(shard), config_(config), options_(options),
        n_classes_(count_classes(shard.labels)) {
    if (shard_.labels.empty()) throw DataError("client shard has no labels");
  }

  PartialForest run() {
    PartialForest forest;
    forest.task = config_.task;
    forest.m = config_.m;
    forest.config_fingerprint = config_.fingerprint();
    forest.party_rank = ep_.rank();
    ep_.set_phase("train");
    for (;;) {
      Message msg = ep_.recv(0);
      if (std::holds_alternative<Shutdown>(msg)) return forest;
      auto init = expect<TrainInit>(std::move(msg), "TrainInit or Shutdown");
      forest.trees.push_back(build_tree(init));
    }
  }

 private:
  PartialTree build_tree(const TrainInit& init) {
    tree_ = Tree{};
    tree_id_ = init.tree_id;
    allowed_ = init.feature_ids;
    build_node(NodeContext{init.tree_id, 0, 0, init.sample_rows});
    expect<TreeDone>(ep_.recv(0), "TreeDone");
    PartialTree partial;
    partial.party_rank = ep_.rank();
    partial.tree = std::move(tree_);
    return partial;
  }

  std::int32_t new_node() {
    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    TreeNode node;
    node.id = id;
    tree_.nodes.push_back(node);
    return id;
  }

  void settle_leaf(std::int32_t id, std::span<const std::int32_t> rows) {
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.kind = NodeKind::Leaf;
    node.leaf_label = leaf_label(labels_at(shard_.labels, rows), config_.task);
  }

  std::int32_t build_node(NodeContext ctx) {
    const std::int32_t id = new_node();
    ctx.node_id = id;

    if (should_stop(ctx, shard_.labels, config_)) {
      settle_leaf(id, ctx.rows);
      if (options_.debug_leaf_check) {
        auto ml = expect<MakeLeaf>(ep_.recv(0), "MakeLeaf (debug check)");
        if (ml.tree_id != tree_id_ || ml.node_id != id) {
          throw ProtocolError("debug leaf check: master and client disagree at node " +
                              std::to_string(id));
        }
      }
      return id;
    }

    const auto cand = local_best_split(shard_, ctx.rows, allowed_, shard_.labels, config_.task,
                                       n_classes_, config_.min_samples_leaf);
    LocalBest report{tree_id_, id, std::nullopt};
    if (cand) report.improvement = cand->improvement;
    ep_.send(0, report);

    Message verdict = ep_.recv(0);
    if (std::holds_alternative<MakeLeaf>(verdict)) {
      settle_leaf(id, ctx.rows);
      return id;
    }

    std::vector<std::int32_t> left_rows, right_rows;
    if (std::holds_alternative<WinnerNotify>(verdict)) {
      if (!cand) throw ProtocolError("selected as winner without a candidate split");
      const auto& col = shard_.features.at(cand->feature);
      for (const auto r : ctx.rows) {
        (col[static_cast<std::size_t>(r)] <= cand->threshold ? left_rows : right_rows).push_back(r);
      }
      ep_.send(0, SplitIndices{tree_id_, id, cand->feature, cand->threshold, left_rows,
                               right_rows});
      auto bc = expect<SplitBroadcast>(ep_.recv(0), "SplitBroadcast");
      left_rows = std::move(bc.left_rows);
      right_rows = std::move(bc.right_rows);

      auto& node = tree_.nodes[static_cast<std::size_t>(id)];
      node.kind = NodeKind::InternalOwned;
      node.owner = ep_.rank();
      node.feature = cand->feature;
      node.threshold = cand->threshold;
    } else if (auto* bc = std::get_if<SplitBroadcast>(&verdict)) {
      // Someone else won; all this party learns is the partition.
      left_rows = std::move(bc->left_rows);
      right_rows = std::move(bc->right_rows);
      auto& node = tree_.nodes[static_cast<std::size_t>(id)];
      node.kind = NodeKind::InternalOpaque;
    } else {
      throw ProtocolError("expected MakeLeaf, WinnerNotify or SplitBroadcast, got " +
                          message_kind(verdict));
    }

    const std::int32_t left =
        build_node(NodeContext{tree_id_, -1, ctx.depth + 1, std::move(left_rows)});
    const std::int32_t right =
        build_node(NodeContext{tree_id_, -1, ctx.depth + 1, std::move(right_rows)});
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.left = left;
    node.right = right;
    return id;
  }

  PartyEndpoint& ep_;
  const ClientShard& shard_;
  const TrainConfig& config_;
  const TrainOptions& options_;
  int n_classes_;
  Tree tree_;
  std::int32_t tree_id_ = 0;
  std::vector<FeatureId> allowed_;
};

}  // namespace

MasterTrainResult master_train(PartyEndpoint& ep, const MasterData& data,
                               const TrainConfig& config, const TrainOptions& options) {
  return MasterTrainer(ep, data, config, options).run();
}

PartialForest client_train_loop(PartyEndpoint& ep, const ClientShard& shard,
                                const TrainConfig& config, const TrainOptions& options) {
  return ClientTrainer(ep, shard, config, options).run();
}

// --- harness ------------------------------------------------------------------------

TrainRun run_federated_training(const std::vector<ClientShard>& shards, const TrainConfig& config,
                                const RunOptions& options) {
  config.validate();
  const int m = static_cast<int>(shards.size());
  if (m != config.m) {
    throw DataError("config says m=" + std::to_string(config.m) + " but " + std::to_string(m) +
                    " shards given");
  }
  for (int r = 1; r <= m; ++r) {
    if (shards[static_cast<std::size_t>(r - 1)].party_rank != r) {
      throw DataError("shards must be ordered by rank 1..M");
    }
  }

  MasterData data;
  data.n_samples = shards[0].n_rows();
  data.labels = shards[0].labels;  // the shared label copy
  for (const auto& shard : shards) {
    std::vector<FeatureId> fids;
    for (const auto& [fid, col] : shard.features) fids.push_back(fid);
    data.view.emplace(shard.party_rank, std::move(fids));
  }

  TrainRun run;
  if (options.record_trace) run.trace = std::make_shared<TraceSink>();
  TraceSink* trace = run.trace.get();

  std::unique_ptr<Baton> baton;
  if (options.transport == TransportKind::Inproc && options.deterministic_schedule) {
    baton = std::make_unique<Baton>();
  }

  std::unique_ptr<InprocHub> hub;
  std::atomic<std::uint16_t> ready_port{options.tcp_port};
  std::atomic<bool> master_failed{false};
  std::unique_ptr<PartyEndpoint> master_ep;
  if (options.transport == TransportKind::Inproc) {
    hub = std::make_unique<InprocHub>(m, baton.get());
    master_ep = std::make_unique<PartyEndpoint>(hub->links(0), trace);
  }

  run.partials.resize(static_cast<std::size_t>(m));
  std::vector<std::exception_ptr> client_errors(static_cast<std::size_t>(m));
  std::exception_ptr master_error;

  MasterTrainResult master_result;

  auto client_body = [&](int rank) {
    try {
      std::unique_ptr<PartyLinks> links;
      if (options.transport == TransportKind::Inproc) {
        links = hub->links(rank);
      } else {
        links = TcpClientLinks::connect(rank, m, "127.0.0.1", ready_port.load());
      }
      PartyEndpoint ep(std::move(links), trace);
      run.partials[static_cast<std::size_t>(rank - 1)] =
          client_train_loop(ep, shards[static_cast<std::size_t>(rank - 1)], config, options.train);
    } catch (...) {
      client_errors[static_cast<std::size_t>(rank - 1)] = std::current_exception();
      if (hub) hub->close_all();
    }
  };

  auto run_with_baton = [&](auto&& fn) {
    if (baton) baton->acquire();
    fn();
    if (baton) baton->release();
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(m) + 1);
  threads.emplace_back([&] {
    try {
      run_with_baton([&] {
        if (options.transport == TransportKind::Tcp) {
          TcpListener listener(options.tcp_port);
          ready_port.store(listener.port());
          master_ep = std::make_unique<PartyEndpoint>(listener.accept_clients(m), trace);
        }
        master_result = master_train(*master_ep, data, config, options.train);
        master_ep->set_phase("shutdown");
        master_ep->broadcast(Shutdown{});
      });
    } catch (...) {
      master_error = std::current_exception();
      master_failed.store(true);
      if (baton) baton->release();
      if (hub) hub->close_all();
      if (master_ep) master_ep->close();
    }
  });

  if (options.transport == TransportKind::Tcp) {
    // Clients need the resolved port; with an ephemeral port the master
    // publishes it once bound.
    while (ready_port.load() == 0 && !master_failed.load()) std::this_thread::yield();
    if (master_failed.load()) {
      threads.front().join();
      std::rethrow_exception(master_error);
    }
  }
  for (int rank = 1; rank <= m; ++rank) {
    threads.emplace_back([&, rank] {
      if (baton) {
        baton->acquire();
        client_body(rank);
        baton->release();
      } else {
        client_body(rank);
      }
    });
  }
  for (auto& t : threads) t.join();

  if (master_error) std::rethrow_exception(master_error);
  for (const auto& err : client_errors) {
    if (err) std::rethrow_exception(err);
  }

  run.complete = std::move(master_result.forest);
  run.per_tree_stats = std::move(master_result.per_tree_stats);
  run.train_stats = master_ep->phase_stats("train");
  return run;
}

}  // namespace ff
