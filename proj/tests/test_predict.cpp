#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "ff/errors.hpp"
#include "ff/predict.hpp"
#include "ff/synth.hpp"
#include "ff/train.hpp"
#include "support/random_trees.hpp"

using namespace ff;

namespace {

/// Depth-2 tree from the worked example: root n0 owned by client 1
/// (f_a <= 5), its left child n1 owned by client 2 (f_b <= 3), leaves
/// l1 = node 2, l2 = node 3 under n1, and leaf l3 = node 4 right of the root.
CompleteTree worked_example_tree() {
  CompleteTree complete;
  auto& nodes = complete.tree.nodes;
  nodes.resize(5);
  for (int i = 0; i < 5; ++i) nodes[static_cast<std::size_t>(i)].id = i;
  nodes[0].kind = NodeKind::InternalOwned;
  nodes[0].owner = 1;
  nodes[0].feature = FeatureId{0};  // f_a
  nodes[0].threshold = 5.0;
  nodes[0].left = 1;
  nodes[0].right = 4;
  nodes[1].kind = NodeKind::InternalOwned;
  nodes[1].owner = 2;
  nodes[1].feature = FeatureId{1};  // f_b
  nodes[1].threshold = 3.0;
  nodes[1].left = 2;
  nodes[1].right = 3;
  nodes[2].kind = NodeKind::Leaf;
  nodes[2].leaf_label = 0.0;
  nodes[3].kind = NodeKind::Leaf;
  nodes[3].leaf_label = 1.0;
  nodes[4].kind = NodeKind::Leaf;
  nodes[4].leaf_label = 2.0;
  return complete;
}

}  // namespace

TEST_CASE("client_leaf_assignments: fully owned tree routes each row to one leaf") {
  const auto complete = worked_example_tree();
  auto owned = complete;
  for (auto& node : owned.tree.nodes) {
    if (!node.is_leaf()) node.owner = 1;
  }
  const auto partial = make_partial_view(owned, 1);

  FeatureColumns columns;
  columns[FeatureId{0}] = {4.0, 7.0};
  columns[FeatureId{1}] = {7.0, 1.0};
  const auto assignment = client_leaf_assignments(partial, columns, 2, 0);

  CHECK(assignment.leaf_rows.at(2).empty());
  CHECK(assignment.leaf_rows.at(3) == std::vector<std::int32_t>{0});  // f_a<=5, f_b>3
  CHECK(assignment.leaf_rows.at(4) == std::vector<std::int32_t>{1});  // f_a>5
  std::size_t total = 0;
  for (const auto& [leaf, rows] : assignment.leaf_rows) total += rows.size();
  CHECK(total == 2);
}

TEST_CASE("client_leaf_assignments: fully opaque tree sends every row to every leaf") {
  const auto complete = worked_example_tree();
  const auto partial = make_partial_view(complete, 3);  // owns nothing
  const auto assignment = client_leaf_assignments(partial, {}, 2, 0);
  for (const auto& [leaf, rows] : assignment.leaf_rows) {
    CHECK(rows == std::vector<std::int32_t>{0, 1});
  }
  CHECK(assignment.leaf_rows.size() == 3);
}

TEST_CASE("worked two-client example: intersection matches complete-tree routing") {
  const auto complete = worked_example_tree();
  const auto p1 = make_partial_view(complete, 1);
  const auto p2 = make_partial_view(complete, 2);

  // Sample h: f_a = 4, f_b = 7.
  FeatureColumns cols1;
  cols1[FeatureId{0}] = {4.0};
  FeatureColumns cols2;
  cols2[FeatureId{1}] = {7.0};

  const auto a1 = client_leaf_assignments(p1, cols1, 1, 0);
  const auto a2 = client_leaf_assignments(p2, cols2, 1, 0);

  // Client 1 owns the root only: h goes left there, then both ways at n1.
  CHECK(a1.leaf_rows.at(2) == std::vector<std::int32_t>{0});
  CHECK(a1.leaf_rows.at(3) == std::vector<std::int32_t>{0});
  CHECK(a1.leaf_rows.at(4).empty());
  // Client 2 owns n1 only: both ways at the root, f_b > 3 at n1.
  CHECK(a2.leaf_rows.at(2).empty());
  CHECK(a2.leaf_rows.at(3) == std::vector<std::int32_t>{0});
  CHECK(a2.leaf_rows.at(4) == std::vector<std::int32_t>{0});

  const auto intersected = intersect_leaf_sets(std::vector<LeafAssignment>{a1, a2});
  CHECK(intersected.at(2).empty());
  CHECK(intersected.at(3) == std::vector<std::int32_t>{0});
  CHECK(intersected.at(4).empty());

  // Direct routing through the complete tree lands on the same leaf.
  FeatureColumns pooled;
  pooled[FeatureId{0}] = {4.0};
  pooled[FeatureId{1}] = {7.0};
  const auto leaves = route_complete(complete.tree, pooled, std::vector<std::int32_t>{0});
  CHECK(leaves == std::vector<std::int32_t>{3});
}

TEST_CASE("intersect_leaf_sets: M=1 is the identity") {
  LeafAssignment a;
  a.tree_id = 0;
  a.leaf_rows[5] = {0, 2};
  a.leaf_rows[6] = {1};
  const auto out = intersect_leaf_sets(std::vector<LeafAssignment>{a});
  CHECK(out.at(5) == std::vector<std::int32_t>{0, 2});
  CHECK(out.at(6) == std::vector<std::int32_t>{1});
}

TEST_CASE("intersect_leaf_sets rejects mismatched inputs") {
  LeafAssignment a, b;
  a.tree_id = 0;
  b.tree_id = 1;
  a.leaf_rows[1] = {0};
  b.leaf_rows[1] = {0};
  CHECK_THROWS_AS(intersect_leaf_sets(std::vector<LeafAssignment>{a, b}), DataError);

  b.tree_id = 0;
  b.leaf_rows.clear();
  b.leaf_rows[2] = {0};  // different leaf ids
  CHECK_THROWS_AS(intersect_leaf_sets(std::vector<LeafAssignment>{a, b}), DataError);
}

TEST_CASE("proposition 1 property: intersection equals direct routing") {
  Xoshiro256ss rng(4242);
  int nontrivial = 0;
  for (int trial = 0; trial < 150; ++trial) {
    ff::testing::RandomTreeParams params;
    params.max_depth = 1 + static_cast<int>(rng.next_below(6));
    params.m = 1 + static_cast<int>(rng.next_below(4));
    params.n_features = 1 + static_cast<int>(rng.next_below(5));
    const auto complete = ff::testing::random_complete_tree(rng, params);

    const std::size_t n_rows = 1 + rng.next_below(40);
    const auto columns = ff::testing::random_columns(rng, params.n_features, n_rows);

    std::vector<LeafAssignment> assignments;
    for (int r = 1; r <= params.m; ++r) {
      const auto partial = make_partial_view(complete, r);
      assignments.push_back(client_leaf_assignments(partial, columns, n_rows, 0));
    }
    const auto intersected = intersect_leaf_sets(assignments);

    std::vector<std::int32_t> all(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) all[i] = static_cast<std::int32_t>(i);
    const auto direct = route_complete(complete.tree, columns, all);

    // Per row: exactly one leaf, and the one direct routing picks.
    std::vector<std::int32_t> from_intersection(n_rows, -1);
    for (const auto& [leaf, rows] : intersected) {
      for (const auto r : rows) {
        CHECK(from_intersection[static_cast<std::size_t>(r)] == -1);  // disjoint cover
        from_intersection[static_cast<std::size_t>(r)] = leaf;
      }
    }
    for (std::size_t i = 0; i < n_rows; ++i) {
      REQUIRE(from_intersection[i] != -1);  // no row dropped
      CHECK(from_intersection[i] == direct[i]);
    }
    if (complete.tree.nodes.size() > 1) ++nontrivial;
  }
  CHECK(nontrivial > 100);
}

TEST_CASE("aggregate_forest voting and averaging") {
  CHECK(aggregate_forest({{0}, {0}, {1}}, Task::Classification) == std::vector<double>{0});
  CHECK(aggregate_forest({{0}, {1}}, Task::Classification) == std::vector<double>{0});
  CHECK(aggregate_forest({{1.0}, {2.0}, {6.0}}, Task::Regression) == std::vector<double>{3.0});
  CHECK_THROWS_AS(aggregate_forest({{0.0, 1.0}, {0.0}}, Task::Classification), DataError);
  CHECK_THROWS_AS(aggregate_forest({}, Task::Classification), DataError);
}

namespace {

struct PredictFixture {
  CompleteForest complete;
  std::vector<PartialForest> partials;
  std::vector<FeatureColumns> test_columns;
  std::size_t n_test = 0;
};

PredictFixture trained_fixture(Task task, int m, std::uint64_t seed, int n_trees = 3,
                               int max_depth = 4) {
  const auto table = make_table(task, 80, 6, 3, seed);
  std::vector<std::string> raw(table.n_rows());
  for (std::size_t r = 0; r < raw.size(); ++r) raw[r] = std::to_string(r);
  const auto ids = hash_ids(raw, "pf");
  auto shards = vertical_partition(table, ids, m, seed);
  shards = align_shards(shards);
  encode_features(shards, mix_seed(seed, 0xE2C0DEu));

  TrainConfig config;
  config.task = task;
  config.n_trees = n_trees;
  config.max_depth = max_depth;
  config.m = m;
  config.seed = seed;
  const auto run = run_federated_training(shards, config);

  PredictFixture fx;
  fx.complete = run.complete;
  fx.partials = run.partials;
  // Reuse the training rows as the test batch; routing does not care.
  for (const auto& shard : shards) fx.test_columns.push_back(shard.features);
  fx.n_test = shards[0].n_rows();
  return fx;
}

}  // namespace

TEST_CASE("intersect and classical prediction agree and stats scale as designed") {
  for (const auto task : {Task::Classification, Task::Regression}) {
    const auto fx = trained_fixture(task, 2, task == Task::Classification ? 51 : 52);

    const auto intersect = run_federated_prediction(fx.complete, fx.partials, fx.test_columns,
                                                    fx.n_test, PredictMethod::Intersect);
    const auto classical = run_federated_prediction(fx.complete, fx.partials, fx.test_columns,
                                                    fx.n_test, PredictMethod::Classical);
    CHECK(intersect.predictions == classical.predictions);
    CHECK(intersect.leaf_of == classical.leaf_of);

    // One gather per tree, M messages each, plus the PredictInit broadcast.
    CHECK(intersect.stats.gathers == fx.complete.trees.size());
    CHECK(intersect.stats.broadcasts == 1);
    CHECK(intersect.stats.point_to_point == 2 + 2 * fx.complete.trees.size());
    CHECK(classical.stats.gathers == 0);
  }
}

TEST_CASE("one-per-forest batches all assignments into a single gather") {
  const auto fx = trained_fixture(Task::Classification, 3, 61);
  const auto per_tree = run_federated_prediction(fx.complete, fx.partials, fx.test_columns,
                                                 fx.n_test, PredictMethod::Intersect,
                                                 PredictRounds::PerTree);
  const auto batched = run_federated_prediction(fx.complete, fx.partials, fx.test_columns,
                                                fx.n_test, PredictMethod::Intersect,
                                                PredictRounds::OnePerForest);
  CHECK(per_tree.predictions == batched.predictions);
  CHECK(per_tree.stats.gathers == fx.complete.trees.size());
  CHECK(batched.stats.gathers == 1);
  CHECK(batched.stats.point_to_point == 3 + 3);  // init broadcast + one message per client
}

TEST_CASE("single-leaf trees need zero classical round trips") {
  PredictFixture fx;
  fx.complete.task = Task::Classification;
  fx.complete.m = 2;
  CompleteTree stump;
  stump.tree.nodes.resize(1);
  stump.tree.nodes[0].id = 0;
  stump.tree.nodes[0].kind = NodeKind::Leaf;
  stump.tree.nodes[0].leaf_label = 1.0;
  fx.complete.trees.push_back(stump);
  for (int r = 1; r <= 2; ++r) {
    PartialForest pf;
    pf.task = Task::Classification;
    pf.m = 2;
    pf.party_rank = r;
    pf.trees.push_back(make_partial_view(stump, r));
    fx.partials.push_back(pf);
    fx.test_columns.push_back({});
  }
  fx.n_test = 4;

  const auto report = run_federated_prediction(fx.complete, fx.partials, fx.test_columns,
                                               fx.n_test, PredictMethod::Classical);
  CHECK(report.predictions == std::vector<double>(4, 1.0));
  // Only the PredictInit broadcast went out.
  CHECK(report.stats.point_to_point == 2);
  CHECK(report.stats.total_payload_ids == 0);
}

TEST_CASE("classical round trips are bounded by non-empty internal nodes") {
  const auto complete = worked_example_tree();
  PredictFixture fx;
  fx.complete.task = Task::Classification;
  fx.complete.m = 2;
  fx.complete.trees.push_back(complete);
  FeatureColumns cols1, cols2;
  cols1[FeatureId{0}] = {4.0, 7.0, 1.0};
  cols2[FeatureId{1}] = {7.0, 1.0, 2.0};
  for (int r = 1; r <= 2; ++r) {
    PartialForest pf;
    pf.task = Task::Classification;
    pf.m = 2;
    pf.party_rank = r;
    pf.trees.push_back(make_partial_view(complete, r));
    fx.partials.push_back(pf);
  }
  fx.test_columns = {cols1, cols2};
  fx.n_test = 3;

  const auto report = run_federated_prediction(fx.complete, fx.partials, fx.test_columns,
                                               fx.n_test, PredictMethod::Classical);
  // <= 3 round trips (2 messages each) + 2 PredictInit sends.
  CHECK(report.stats.point_to_point <= 2 + 2 * 3);
  CHECK(report.predictions == std::vector<double>{1.0, 2.0, 0.0});
}

TEST_CASE("cross-method agreement on 100 random instances") {
  Xoshiro256ss rng(808);
  for (int trial = 0; trial < 100; ++trial) {
    ff::testing::RandomTreeParams params;
    params.max_depth = 1 + static_cast<int>(rng.next_below(4));
    params.m = 1 + static_cast<int>(rng.next_below(3));
    params.n_features = 2 + static_cast<int>(rng.next_below(4));
    const auto tree = ff::testing::random_complete_tree(rng, params);

    PredictFixture fx;
    fx.complete.task = Task::Classification;
    fx.complete.m = params.m;
    fx.complete.trees.push_back(tree);
    fx.n_test = 1 + rng.next_below(20);
    const auto columns = ff::testing::random_columns(rng, params.n_features, fx.n_test);
    for (int r = 1; r <= params.m; ++r) {
      PartialForest pf;
      pf.task = Task::Classification;
      pf.m = params.m;
      pf.party_rank = r;
      pf.trees.push_back(make_partial_view(tree, r));
      fx.partials.push_back(pf);
      fx.test_columns.push_back(columns);
    }

    const auto a = run_federated_prediction(fx.complete, fx.partials, fx.test_columns, fx.n_test,
                                            PredictMethod::Intersect);
    const auto b = run_federated_prediction(fx.complete, fx.partials, fx.test_columns, fx.n_test,
                                            PredictMethod::Classical);
    REQUIRE(a.predictions == b.predictions);
  }
}

TEST_CASE("prediction is transport-equivalent for both methods") {
  const auto fx = trained_fixture(Task::Classification, 2, 91);
  RunOptions inproc;
  RunOptions tcp;
  tcp.transport = TransportKind::Tcp;
  for (const auto method : {PredictMethod::Intersect, PredictMethod::Classical}) {
    const auto a = run_federated_prediction(fx.complete, fx.partials, fx.test_columns, fx.n_test,
                                            method, PredictRounds::PerTree, inproc);
    const auto b = run_federated_prediction(fx.complete, fx.partials, fx.test_columns, fx.n_test,
                                            method, PredictRounds::PerTree, tcp);
    CHECK(a.predictions == b.predictions);
    CHECK(a.leaf_of == b.leaf_of);
    CHECK(a.stats == b.stats);
  }
}

TEST_CASE("empty test set: empty predictions, zero payload ids") {
  const auto fx = trained_fixture(Task::Classification, 2, 71);
  const auto report = run_federated_prediction(fx.complete, fx.partials, fx.test_columns, 0,
                                               PredictMethod::Intersect);
  CHECK(report.predictions.empty());
  CHECK(report.stats.total_payload_ids == 0);
  CHECK(report.stats.gathers == fx.complete.trees.size());
}

TEST_CASE("client fails loudly when an owned feature column is missing") {
  const auto complete = worked_example_tree();
  const auto partial = make_partial_view(complete, 1);
  CHECK_THROWS_AS(client_leaf_assignments(partial, {}, 2, 0), DataError);
}
