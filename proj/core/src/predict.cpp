#include "ff/predict.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "ff/errors.hpp"

namespace ff {
namespace {

void assign_rows(const Tree& tree, const FeatureColumns& columns, std::int32_t node_id,
                 std::vector<std::int32_t> rows,
                 std::map<std::int32_t, std::vector<std::int32_t>>& out) {
  const auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
  if (node.is_leaf()) {
    out[node.id] = std::move(rows);
    return;
  }
  if (node.kind == NodeKind::InternalOwned) {
    if (!node.feature) throw DataError("owned node without split details");
    auto it = columns.find(*node.feature);
    if (it == columns.end()) {
      throw DataError("missing feature column " + std::to_string(node.feature->value) +
                      " for owned node " + std::to_string(node.id));
    }
    const auto& col = it->second;
    std::vector<std::int32_t> left, right;
    for (const auto r : rows) {
      (col[static_cast<std::size_t>(r)] <= node.threshold ? left : right).push_back(r);
    }
    assign_rows(tree, columns, node.left, std::move(left), out);
    assign_rows(tree, columns, node.right, std::move(right), out);
  } else {
    // Opaque: the threshold lives elsewhere, so every row takes both branches.
    assign_rows(tree, columns, node.left, rows, out);
    assign_rows(tree, columns, node.right, std::move(rows), out);
  }
}

}  // namespace

LeafAssignment client_leaf_assignments(const PartialTree& partial, const FeatureColumns& columns,
                                       std::size_t n_rows, std::int32_t tree_id) {
  LeafAssignment out;
  out.tree_id = tree_id;
  std::vector<std::int32_t> all(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) all[i] = static_cast<std::int32_t>(i);
  assign_rows(partial.tree, columns, 0, std::move(all), out.leaf_rows);
  return out;
}

std::map<std::int32_t, std::vector<std::int32_t>> intersect_leaf_sets(
    std::span<const LeafAssignment> assignments) {
  if (assignments.empty()) throw DataError("intersect_leaf_sets: no assignments");
  const auto& first = assignments.front();
  for (const auto& a : assignments) {
    if (a.tree_id != first.tree_id) {
      throw DataError("intersect_leaf_sets: mismatched tree ids");
    }
    if (a.leaf_rows.size() != first.leaf_rows.size() ||
        !std::equal(a.leaf_rows.begin(), a.leaf_rows.end(), first.leaf_rows.begin(),
                    [](const auto& x, const auto& y) { return x.first == y.first; })) {
      throw DataError("intersect_leaf_sets: leaf id sets differ between parties");
    }
  }

  std::map<std::int32_t, std::vector<std::int32_t>> out;
  for (const auto& [leaf, rows] : first.leaf_rows) {
    std::vector<std::int32_t> acc = rows;
    for (std::size_t i = 1; i < assignments.size(); ++i) {
      const auto& other = assignments[i].leaf_rows.at(leaf);
      std::vector<std::int32_t> next;
      std::set_intersection(acc.begin(), acc.end(), other.begin(), other.end(),
                            std::back_inserter(next));
      acc = std::move(next);
    }
    out[leaf] = std::move(acc);
  }
  return out;
}

std::vector<double> aggregate_forest(const std::vector<std::vector<double>>& per_tree,
                                     Task task) {
  if (per_tree.empty()) throw DataError("aggregate_forest: no tree predictions");
  const std::size_t n = per_tree.front().size();
  for (const auto& p : per_tree) {
    if (p.size() != n) throw DataError("aggregate_forest: missing tree prediction for a sample");
  }

  std::vector<double> out(n, 0.0);
  if (task == Task::Regression) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (const auto& p : per_tree) sum += p[i];
      out[i] = sum / static_cast<double>(per_tree.size());
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    int max_class = 0;
    for (const auto& p : per_tree) {
      max_class = std::max(max_class, static_cast<int>(std::lround(p[i])));
    }
    std::vector<int> votes(static_cast<std::size_t>(max_class) + 1, 0);
    for (const auto& p : per_tree) votes[static_cast<std::size_t>(std::lround(p[i]))]++;
    std::size_t best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
      if (votes[c] > votes[best]) best = c;  // ties keep the smaller class
    }
    out[i] = static_cast<double>(best);
  }
  return out;
}

namespace {

template <typename M>
M expect(Message&& msg, const std::string& what) {
  if (auto* m = std::get_if<M>(&msg)) return std::move(*m);
  throw ProtocolError("expected " + what + ", got " + message_kind(msg));
}

/// Reconstructs the full per-leaf map (empty leaves included) from one wire
/// entry, then intersects across parties and reads predictions off the
/// complete model.
std::vector<std::int32_t> intersect_one_tree(const CompleteTree& tree,
                                             const std::vector<TreeLeafSets>& per_party,
                                             std::int32_t tree_id, std::size_t n_test) {
  const auto leaf_ids = tree.tree.leaf_ids();
  std::vector<LeafAssignment> assignments;
  assignments.reserve(per_party.size());
  for (const auto& sets : per_party) {
    if (sets.tree_id != tree_id) throw ProtocolError("leaf assignments for the wrong tree");
    LeafAssignment a;
    a.tree_id = tree_id;
    for (const auto leaf : leaf_ids) a.leaf_rows[leaf] = {};
    for (const auto& [leaf, rows] : sets.leaf_rows) {
      auto it = a.leaf_rows.find(leaf);
      if (it == a.leaf_rows.end()) {
        throw ProtocolError("leaf assignment names unknown leaf " + std::to_string(leaf));
      }
      it->second = rows;
    }
    assignments.push_back(std::move(a));
  }
  const auto intersected = intersect_leaf_sets(assignments);

  std::vector<std::int32_t> leaf_of(n_test, -1);
  for (const auto& [leaf, rows] : intersected) {
    for (const auto r : rows) {
      if (leaf_of[static_cast<std::size_t>(r)] != -1) {
        throw ProtocolError("test row " + std::to_string(r) + " landed in two leaves");
      }
      leaf_of[static_cast<std::size_t>(r)] = leaf;
    }
  }
  for (std::size_t r = 0; r < n_test; ++r) {
    if (leaf_of[r] == -1) {
      throw ProtocolError("test row " + std::to_string(r) + " reached no leaf");
    }
  }
  return leaf_of;
}

}  // namespace

PredictionReport master_intersect_predict(PartyEndpoint& ep, const CompleteForest& forest,
                                          std::size_t n_test, PredictRounds rounds) {
  PredictionReport report;
  report.method = PredictMethod::Intersect;
  ep.set_phase("predict");
  const bool batch = rounds == PredictRounds::OnePerForest;
  ep.broadcast(PredictInit{static_cast<std::int32_t>(n_test), PredictMethod::Intersect, batch});

  const auto n_trees = forest.trees.size();
  std::vector<std::vector<TreeLeafSets>> per_tree_party(n_trees);
  if (batch) {
    for (auto& [rank, msg] : ep.gather()) {
      auto la = expect<LeafAssignmentsMsg>(std::move(msg), "LeafAssignments");
      if (la.trees.size() != n_trees) {
        throw ProtocolError("batched assignments cover " + std::to_string(la.trees.size()) +
                            " trees, expected " + std::to_string(n_trees));
      }
      for (std::size_t t = 0; t < n_trees; ++t) per_tree_party[t].push_back(std::move(la.trees[t]));
    }
  } else {
    for (std::size_t t = 0; t < n_trees; ++t) {
      for (auto& [rank, msg] : ep.gather()) {
        auto la = expect<LeafAssignmentsMsg>(std::move(msg), "LeafAssignments");
        if (la.trees.size() != 1) throw ProtocolError("expected one tree per gather");
        per_tree_party[t].push_back(std::move(la.trees[0]));
      }
    }
  }

  std::vector<std::vector<double>> tree_preds(n_trees);
  report.leaf_of.resize(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    const auto leaf_of = intersect_one_tree(forest.trees[t], per_tree_party[t],
                                            static_cast<std::int32_t>(t), n_test);
    report.leaf_of[t] = leaf_of;
    auto& preds = tree_preds[t];
    preds.resize(n_test);
    for (std::size_t r = 0; r < n_test; ++r) {
      preds[r] = forest.trees[t].tree.nodes[static_cast<std::size_t>(leaf_of[r])].leaf_label;
    }
  }
  if (n_test > 0) {
    report.predictions = aggregate_forest(tree_preds, forest.task);
  }
  report.stats = ep.phase_stats("predict");
  return report;
}

PredictionReport master_classical_predict(PartyEndpoint& ep, const CompleteForest& forest,
                                          std::size_t n_test) {
  PredictionReport report;
  report.method = PredictMethod::Classical;
  ep.set_phase("predict");
  ep.broadcast(PredictInit{static_cast<std::int32_t>(n_test), PredictMethod::Classical, false});

  const auto n_trees = forest.trees.size();
  std::vector<std::vector<double>> tree_preds(n_trees);
  report.leaf_of.resize(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    const auto& tree = forest.trees[t].tree;
    std::vector<std::int32_t> leaf_of(n_test, -1);

    // Iterative node-by-node routing; one round trip to the owner per
    // visited internal node with a non-empty batch.
    std::vector<std::pair<std::int32_t, std::vector<std::int32_t>>> agenda;
    std::vector<std::int32_t> all(n_test);
    for (std::size_t i = 0; i < n_test; ++i) all[i] = static_cast<std::int32_t>(i);
    agenda.emplace_back(0, std::move(all));
    while (!agenda.empty()) {
      auto [node_id, rows] = std::move(agenda.back());
      agenda.pop_back();
      if (rows.empty()) continue;
      const auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
      if (node.is_leaf()) {
        for (const auto r : rows) leaf_of[static_cast<std::size_t>(r)] = node.id;
        continue;
      }
      ep.send(node.owner, ClassicalRoute{static_cast<std::int32_t>(t), node_id, rows});
      auto reply = expect<ClassicalRouteReply>(ep.recv(node.owner), "ClassicalRouteReply");
      if (reply.tree_id != static_cast<std::int32_t>(t) || reply.node_id != node_id) {
        throw ProtocolError("ClassicalRouteReply out of context");
      }
      agenda.emplace_back(node.right, std::move(reply.right_rows));
      agenda.emplace_back(node.left, std::move(reply.left_rows));
    }

    report.leaf_of[t] = leaf_of;
    auto& preds = tree_preds[t];
    preds.resize(n_test);
    for (std::size_t r = 0; r < n_test; ++r) {
      preds[r] = tree.nodes[static_cast<std::size_t>(leaf_of[r])].leaf_label;
    }
  }
  if (n_test > 0) {
    report.predictions = aggregate_forest(tree_preds, forest.task);
  }
  report.stats = ep.phase_stats("predict");
  return report;
}

void client_predict_loop(PartyEndpoint& ep, const PartialForest& forest,
                         const FeatureColumns& test_columns, std::size_t n_rows) {
  ep.set_phase("predict");
  const auto init = expect<PredictInit>(ep.recv(0), "PredictInit");
  if (static_cast<std::size_t>(init.n_test) != n_rows) {
    throw DataError("master expects " + std::to_string(init.n_test) + " test rows, shard has " +
                    std::to_string(n_rows));
  }

  if (init.method == PredictMethod::Intersect) {
    std::vector<TreeLeafSets> all_trees;
    all_trees.reserve(forest.trees.size());
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
      const auto assignment = client_leaf_assignments(forest.trees[t], test_columns, n_rows,
                                                      static_cast<std::int32_t>(t));
      TreeLeafSets sets;
      sets.tree_id = assignment.tree_id;
      for (const auto& [leaf, rows] : assignment.leaf_rows) {
        if (!rows.empty()) sets.leaf_rows.emplace_back(leaf, rows);  // empty leaves stay off the wire
      }
      all_trees.push_back(std::move(sets));
    }
    if (init.batch_all_trees) {
      ep.send(0, LeafAssignmentsMsg{std::move(all_trees)});
    } else {
      for (auto& sets : all_trees) {
        ep.send(0, LeafAssignmentsMsg{{std::move(sets)}});
      }
    }
    expect<Shutdown>(ep.recv(0), "Shutdown");
    return;
  }

  // Classical: serve routing queries until shutdown.
  for (;;) {
    Message msg = ep.recv(0);
    if (std::holds_alternative<Shutdown>(msg)) return;
    auto route = expect<ClassicalRoute>(std::move(msg), "ClassicalRoute or Shutdown");
    if (route.tree_id < 0 || static_cast<std::size_t>(route.tree_id) >= forest.trees.size()) {
      throw ProtocolError("ClassicalRoute names unknown tree " + std::to_string(route.tree_id));
    }
    const auto& tree = forest.trees[static_cast<std::size_t>(route.tree_id)].tree;
    if (route.node_id < 0 || static_cast<std::size_t>(route.node_id) >= tree.nodes.size()) {
      throw ProtocolError("ClassicalRoute names unknown node " + std::to_string(route.node_id));
    }
    const auto& node = tree.nodes[static_cast<std::size_t>(route.node_id)];
    if (node.kind != NodeKind::InternalOwned || !node.feature) {
      throw ProtocolError("asked to route at a node this party does not own");
    }
    auto it = test_columns.find(*node.feature);
    if (it == test_columns.end()) {
      throw DataError("missing feature column " + std::to_string(node.feature->value));
    }
    const auto& col = it->second;
    ClassicalRouteReply reply{route.tree_id, route.node_id, {}, {}};
    for (const auto r : route.rows) {
      (col[static_cast<std::size_t>(r)] <= node.threshold ? reply.left_rows : reply.right_rows)
          .push_back(r);
    }
    ep.send(0, reply);
  }
}

PredictionReport run_federated_prediction(const CompleteForest& complete,
                                          const std::vector<PartialForest>& partials,
                                          const std::vector<FeatureColumns>& test_columns,
                                          std::size_t n_test, PredictMethod method,
                                          PredictRounds rounds, const RunOptions& options) {
  const int m = static_cast<int>(partials.size());
  if (test_columns.size() != partials.size()) {
    throw DataError("per-party test columns count mismatch");
  }

  std::shared_ptr<TraceSink> trace;
  if (options.record_trace) trace = std::make_shared<TraceSink>();

  std::unique_ptr<Baton> baton;
  if (options.transport == TransportKind::Inproc && options.deterministic_schedule) {
    baton = std::make_unique<Baton>();
  }
  std::unique_ptr<InprocHub> hub;
  std::unique_ptr<PartyEndpoint> master_ep;
  std::atomic<std::uint16_t> ready_port{options.tcp_port};
  std::atomic<bool> master_failed{false};
  if (options.transport == TransportKind::Inproc) {
    hub = std::make_unique<InprocHub>(m, baton.get());
    master_ep = std::make_unique<PartyEndpoint>(hub->links(0), trace.get());
  }

  PredictionReport report;
  std::exception_ptr master_error;
  std::vector<std::exception_ptr> client_errors(static_cast<std::size_t>(m));

  std::vector<std::thread> threads;
  threads.emplace_back([&] {
    try {
      if (baton) baton->acquire();
      if (options.transport == TransportKind::Tcp) {
        TcpListener listener(options.tcp_port);
        ready_port.store(listener.port());
        master_ep = std::make_unique<PartyEndpoint>(listener.accept_clients(m), trace.get());
      }
      report = method == PredictMethod::Intersect
                   ? master_intersect_predict(*master_ep, complete, n_test, rounds)
                   : master_classical_predict(*master_ep, complete, n_test);
      master_ep->set_phase("shutdown");
      master_ep->broadcast(Shutdown{});
      if (baton) baton->release();
    } catch (...) {
      master_error = std::current_exception();
      master_failed.store(true);
      if (baton) baton->release();
      if (hub) hub->close_all();
      if (master_ep) master_ep->close();
    }
  });
  if (options.transport == TransportKind::Tcp) {
    while (ready_port.load() == 0 && !master_failed.load()) std::this_thread::yield();
    if (master_failed.load()) {
      threads.front().join();
      std::rethrow_exception(master_error);
    }
  }
  for (int rank = 1; rank <= m; ++rank) {
    threads.emplace_back([&, rank] {
      try {
        if (baton) baton->acquire();
        std::unique_ptr<PartyLinks> links;
        if (options.transport == TransportKind::Inproc) {
          links = hub->links(rank);
        } else {
          links = TcpClientLinks::connect(rank, m, "127.0.0.1", ready_port.load());
        }
        PartyEndpoint ep(std::move(links), trace.get());
        client_predict_loop(ep, partials[static_cast<std::size_t>(rank - 1)],
                            test_columns[static_cast<std::size_t>(rank - 1)], n_test);
        if (baton) baton->release();
      } catch (...) {
        client_errors[static_cast<std::size_t>(rank - 1)] = std::current_exception();
        if (baton) baton->release();
        if (hub) hub->close_all();
      }
    });
  }
  for (auto& t : threads) t.join();

  if (master_error) std::rethrow_exception(master_error);
  for (const auto& err : client_errors) {
    if (err) std::rethrow_exception(err);
  }
  return report;
}

}  // namespace ff
