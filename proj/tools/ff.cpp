// ff: vertical federated random forest trainer, predictor and verifier.
//
// Subcommands: partition, train, predict, verify, bench.
// Exit codes: 0 success, 1 usage, 2 data error, 3 protocol error,
// 4 verification failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ff/csv.hpp"
#include "ff/dataset.hpp"
#include "ff/errors.hpp"
#include "ff/metrics.hpp"
#include "ff/model_io.hpp"
#include "ff/oracle.hpp"
#include "ff/predict.hpp"
#include "ff/synth.hpp"
#include "ff/train.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct GlobalFlags {
  std::string transport = "inproc";
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic_schedule = false;

  ff::TransportKind transport_kind() const {
    if (transport == "inproc") return ff::TransportKind::Inproc;
    if (transport == "tcp") return ff::TransportKind::Tcp;
    throw ff::UsageError("unknown transport '" + transport + "' (expected inproc|tcp)");
  }
};

ff::TrainConfig resolve_config(const GlobalFlags& flags) {
  if (flags.config_path.empty()) throw ff::UsageError("--config is required");
  ff::TrainConfig config = ff::load_train_config(flags.config_path);
  if (flags.seed_set) config.seed = flags.seed;
  config.validate();
  return config;
}

/// The raw ids fed into hashing are the 0-based row positions of the input
/// csv; the canonical order afterwards is ascending digest.
std::vector<ff::HashedId> ids_for_table(const ff::RawTable& table, std::uint64_t seed,
                                        const std::string& salt) {
  std::vector<std::string> raw(table.n_rows());
  for (std::size_t r = 0; r < raw.size(); ++r) raw[r] = std::to_string(r);
  const std::string effective = salt.empty() ? "ff:" + std::to_string(seed) : salt;
  return ff::hash_ids(raw, effective);
}

struct PartitionedData {
  std::vector<ff::ClientShard> shards;
  ff::MasterView view;
};

PartitionedData partition_table(const ff::RawTable& table, int m, std::uint64_t seed,
                                const std::string& salt) {
  const auto ids = ids_for_table(table, seed, salt);
  auto shards = ff::vertical_partition(table, ids, m, seed);
  shards = ff::align_shards(shards);
  PartitionedData out;
  out.view = ff::encode_features(shards, ff::mix_seed(seed, 0xE2C0DEu));
  out.shards = std::move(shards);
  return out;
}

/// Per-party test feature columns keyed by the training encoding: each
/// shard's name_map ties its opaque ids back to its own column names.
std::vector<ff::FeatureColumns> test_columns_per_party(const std::vector<ff::ClientShard>& shards) {
  std::vector<ff::FeatureColumns> out;
  out.reserve(shards.size());
  for (const auto& shard : shards) out.push_back(shard.features);
  return out;
}

void write_predictions_csv(const std::string& path, const std::vector<double>& predictions) {
  std::ofstream out(path);
  if (!out) throw ff::DataError("cannot write predictions file: " + path);
  out << "sample_index,prediction\n";
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    out << i << ',' << ff::format_double(predictions[i]) << '\n';
  }
}

// --- partition ----------------------------------------------------------------

int cmd_partition(const GlobalFlags& flags, const std::string& input, const std::string& label,
                  int m, const std::string& out_dir, const std::string& salt) {
  if (m < 1) throw ff::UsageError("--m must be >= 1");
  const auto table = ff::load_csv(input, label);
  const auto data = partition_table(table, m, flags.seed, salt);
  ff::write_shard_dir(out_dir, data.shards, data.view, label);
  std::cout << "wrote " << m << " party shards to " << out_dir << " (" << table.n_rows()
            << " rows, " << table.n_features() << " features)\n";
  return 0;
}

// --- train ---------------------------------------------------------------------

void write_train_outputs(const std::string& out_dir, const ff::TrainRun& run) {
  fs::create_directories(out_dir);
  ff::write_complete_model((fs::path(out_dir) / "master.model.json").string(), run.complete);
  for (const auto& partial : run.partials) {
    ff::write_partial_model(
        (fs::path(out_dir) / ("party_" + std::to_string(partial.party_rank) + ".model.json"))
            .string(),
        partial);
  }
  std::vector<ff::StatsLine> lines;
  for (std::size_t t = 0; t < run.per_tree_stats.size(); ++t) {
    lines.push_back({"train/tree/" + std::to_string(t), run.per_tree_stats[t]});
  }
  lines.push_back({"train", run.train_stats});
  ff::write_stats_jsonl((fs::path(out_dir) / "train.stats.jsonl").string(), lines);
}

int cmd_train(const GlobalFlags& flags, const std::string& shard_dir, const std::string& out_dir,
              const std::string& role, int rank, const std::string& host, int port) {
  ff::TrainConfig config = resolve_config(flags);

  if (role == "all") {
    const auto shards = ff::read_shard_dir(shard_dir);
    if (static_cast<int>(shards.size()) != config.m) {
      throw ff::DataError("config m=" + std::to_string(config.m) + " does not match shard dir (" +
                          std::to_string(shards.size()) + " parties)");
    }
    ff::RunOptions options;
    options.transport = flags.transport_kind();
    options.deterministic_schedule = flags.deterministic_schedule;
    options.tcp_port = static_cast<std::uint16_t>(port);
    const auto start = Clock::now();
    const auto run = ff::run_federated_training(shards, config, options);
    const double wall = ms_since(start);
    write_train_outputs(out_dir, run);
    std::cout << "trained " << config.n_trees << " trees with m=" << config.m << " in " << wall
              << " ms; stats: " << ff::stats_json_line("train", run.train_stats) << '\n';
    return 0;
  }

  if (flags.transport != "tcp") throw ff::UsageError("--role master/client requires --transport tcp");
  if (port <= 0) throw ff::UsageError("--role master/client requires an explicit --port");

  if (role == "master") {
    // The label copy the master holds is read off party 1's shard, which is
    // where the labels come from in the first place.
    const auto view = ff::read_master_view(shard_dir);
    const auto party1 = ff::read_party_dir(shard_dir, 1);
    if (static_cast<int>(view.size()) != config.m) {
      throw ff::DataError("config m does not match master.view");
    }
    ff::MasterData data;
    data.n_samples = party1.n_rows();
    data.labels = party1.labels;
    data.view = view;

    auto links = ff::TcpMasterLinks::listen_and_accept(config.m, static_cast<std::uint16_t>(port));
    ff::PartyEndpoint ep(std::move(links));
    auto result = ff::master_train(ep, data, config);
    ep.set_phase("shutdown");
    ep.broadcast(ff::Shutdown{});

    fs::create_directories(out_dir);
    ff::write_complete_model((fs::path(out_dir) / "master.model.json").string(), result.forest);
    std::vector<ff::StatsLine> lines;
    for (std::size_t t = 0; t < result.per_tree_stats.size(); ++t) {
      lines.push_back({"train/tree/" + std::to_string(t), result.per_tree_stats[t]});
    }
    lines.push_back({"train", ep.phase_stats("train")});
    ff::write_stats_jsonl((fs::path(out_dir) / "train.stats.jsonl").string(), lines);
    return 0;
  }

  if (role == "client") {
    if (rank < 1) throw ff::UsageError("--rank is required for --role client");
    const auto shard = ff::read_party_dir(shard_dir, rank);
    auto links = ff::TcpClientLinks::connect(rank, config.m, host, static_cast<std::uint16_t>(port));
    ff::PartyEndpoint ep(std::move(links));
    const auto forest = ff::client_train_loop(ep, shard, config);
    fs::create_directories(out_dir);
    ff::write_partial_model(
        (fs::path(out_dir) / ("party_" + std::to_string(rank) + ".model.json")).string(), forest);
    return 0;
  }

  throw ff::UsageError("unknown role '" + role + "' (expected all|master|client)");
}

// --- predict -------------------------------------------------------------------

int cmd_predict(const GlobalFlags& flags, const std::string& model_dir,
                const std::string& test_dir, const std::string& out_dir,
                const std::string& method_name, const std::string& rounds_name,
                const std::string& role, int rank, const std::string& host, int port) {
  ff::PredictMethod method;
  if (method_name == "intersect") {
    method = ff::PredictMethod::Intersect;
  } else if (method_name == "classical") {
    method = ff::PredictMethod::Classical;
  } else {
    throw ff::UsageError("unknown method '" + method_name + "' (expected intersect|classical)");
  }
  ff::PredictRounds rounds;
  if (rounds_name == "per-tree") {
    rounds = ff::PredictRounds::PerTree;
  } else if (rounds_name == "one-per-forest") {
    rounds = ff::PredictRounds::OnePerForest;
  } else {
    throw ff::UsageError("unknown rounds '" + rounds_name + "' (expected per-tree|one-per-forest)");
  }

  if (role == "all") {
    const auto complete =
        ff::read_complete_model((fs::path(model_dir) / "master.model.json").string());
    const auto test_shards = ff::read_shard_dir(test_dir);
    if (static_cast<int>(test_shards.size()) != complete.m) {
      throw ff::DataError("test shard dir has " + std::to_string(test_shards.size()) +
                          " parties, model expects " + std::to_string(complete.m));
    }
    std::vector<ff::PartialForest> partials;
    for (int r = 1; r <= complete.m; ++r) {
      partials.push_back(ff::read_partial_model(
          (fs::path(model_dir) / ("party_" + std::to_string(r) + ".model.json")).string()));
    }
    const std::size_t n_test = test_shards[0].n_rows();

    ff::RunOptions options;
    options.transport = flags.transport_kind();
    options.deterministic_schedule = flags.deterministic_schedule;
    options.tcp_port = static_cast<std::uint16_t>(port);
    const auto start = Clock::now();
    const auto report = ff::run_federated_prediction(
        complete, partials, test_columns_per_party(test_shards), n_test, method, rounds, options);
    const double wall = ms_since(start);

    fs::create_directories(out_dir);
    write_predictions_csv((fs::path(out_dir) / "predictions.csv").string(), report.predictions);
    std::vector<ff::StatsLine> lines{{"predict", report.stats}};
    ff::write_stats_jsonl((fs::path(out_dir) / "predict.stats.jsonl").string(), lines);

    std::cout << "predicted " << n_test << " samples (" << method_name << ") in " << wall
              << " ms; stats: " << ff::stats_json_line("predict", report.stats) << '\n';
    if (!test_shards[0].labels.empty() && n_test > 0) {
      const auto& labels = test_shards[0].labels;
      const double metric = complete.task == ff::Task::Classification
                                ? ff::accuracy(report.predictions, labels)
                                : ff::rmse(report.predictions, labels);
      std::cout << (complete.task == ff::Task::Classification ? "accuracy: " : "rmse: ") << metric
                << '\n';
    }
    return 0;
  }

  if (flags.transport != "tcp") throw ff::UsageError("--role master/client requires --transport tcp");
  if (port <= 0) throw ff::UsageError("--role master/client requires an explicit --port");

  if (role == "master") {
    const auto complete =
        ff::read_complete_model((fs::path(model_dir) / "master.model.json").string());
    const auto party1 = ff::read_party_dir(test_dir, 1);
    const std::size_t n_test = party1.n_rows();
    auto links = ff::TcpMasterLinks::listen_and_accept(complete.m, static_cast<std::uint16_t>(port));
    ff::PartyEndpoint ep(std::move(links));
    const auto report = method == ff::PredictMethod::Intersect
                            ? ff::master_intersect_predict(ep, complete, n_test, rounds)
                            : ff::master_classical_predict(ep, complete, n_test);
    ep.set_phase("shutdown");
    ep.broadcast(ff::Shutdown{});
    fs::create_directories(out_dir);
    write_predictions_csv((fs::path(out_dir) / "predictions.csv").string(), report.predictions);
    std::vector<ff::StatsLine> lines{{"predict", report.stats}};
    ff::write_stats_jsonl((fs::path(out_dir) / "predict.stats.jsonl").string(), lines);
    return 0;
  }

  if (role == "client") {
    if (rank < 1) throw ff::UsageError("--rank is required for --role client");
    const auto partial = ff::read_partial_model(
        (fs::path(model_dir) / ("party_" + std::to_string(rank) + ".model.json")).string());
    const auto shard = ff::read_party_dir(test_dir, rank);
    auto links =
        ff::TcpClientLinks::connect(rank, partial.m, host, static_cast<std::uint16_t>(port));
    ff::PartyEndpoint ep(std::move(links));
    ff::client_predict_loop(ep, partial, shard.features, shard.n_rows());
    return 0;
  }

  throw ff::UsageError("unknown role '" + role + "' (expected all|master|client)");
}

// --- verify --------------------------------------------------------------------

int cmd_verify(const GlobalFlags& flags, const std::string& input, const std::string& label,
               int repeats, bool independent_seeds, double test_fraction) {
  if (repeats < 1) throw ff::UsageError("--repeats must be >= 1");
  if (independent_seeds && repeats < 2) {
    throw ff::UsageError("--independent-seeds needs --repeats >= 2 for the z-test");
  }
  ff::TrainConfig config = resolve_config(flags);
  const auto table = ff::load_csv(input, label);
  if (table.labels.empty()) throw ff::DataError("verify needs a labeled dataset");

  const std::uint64_t base_seed = config.seed;
  int divergences = 0;
  std::vector<double> acc_federated, acc_centralized;

  for (int rep = 0; rep < repeats; ++rep) {
    const std::uint64_t split_seed = ff::mix_seed(base_seed, 1000 + static_cast<std::uint64_t>(rep));
    const auto split = ff::split_table(table, test_fraction, split_seed);
    if (split.test.n_rows() == 0 || split.train.n_rows() == 0) {
      throw ff::DataError("verify: degenerate train/test split");
    }

    const std::uint64_t fed_seed =
        independent_seeds ? ff::mix_seed(base_seed, 2 * static_cast<std::uint64_t>(rep))
                          : ff::mix_seed(base_seed, static_cast<std::uint64_t>(rep));
    const std::uint64_t central_seed =
        independent_seeds ? ff::mix_seed(base_seed, 2 * static_cast<std::uint64_t>(rep) + 1)
                          : fed_seed;

    // Federated side.
    ff::TrainConfig fed_config = config;
    fed_config.seed = fed_seed;
    const auto fed_data = partition_table(split.train, config.m, fed_seed, "");
    ff::RunOptions options;
    options.transport = flags.transport_kind();
    options.deterministic_schedule = flags.deterministic_schedule;
    const auto fed_run = ff::run_federated_training(fed_data.shards, fed_config, options);

    // Test columns keyed by the federated encoding.
    ff::FeatureColumns fed_test_columns;
    std::map<std::string, std::size_t> col_of_name;
    for (std::size_t c = 0; c < table.feature_names.size(); ++c) {
      col_of_name[table.feature_names[c]] = c;
    }
    for (const auto& shard : fed_data.shards) {
      for (const auto& [fid, name] : shard.name_map) {
        std::vector<double> col;
        col.reserve(split.test.n_rows());
        for (const auto& row : split.test.rows) col.push_back(row[col_of_name.at(name)]);
        fed_test_columns.emplace(fid, std::move(col));
      }
    }

    if (!independent_seeds) {
      // Same seed, same draws: the centralized oracle must match node for node.
      const auto pooled = ff::pool_shards(fed_data.shards);
      const auto central = ff::centralized_train(pooled, fed_config);
      const auto report =
          ff::assert_equivalent(fed_run.complete, central, fed_test_columns, split.test.labels);
      std::cout << report.to_json() << '\n';
      if (!report.structural_equal || !report.prediction_equal) ++divergences;
      acc_federated.push_back(report.accuracy_federated);
      acc_centralized.push_back(report.accuracy_centralized);
      continue;
    }

    // Independent seeds: compare accuracy distributions, not structures.
    ff::TrainConfig central_config = config;
    central_config.seed = central_seed;
    const auto central_data = partition_table(split.train, config.m, central_seed, "");
    const auto central =
        ff::centralized_train(ff::pool_shards(central_data.shards), central_config);

    ff::FeatureColumns central_test_columns;
    for (const auto& shard : central_data.shards) {
      for (const auto& [fid, name] : shard.name_map) {
        std::vector<double> col;
        col.reserve(split.test.n_rows());
        for (const auto& row : split.test.rows) col.push_back(row[col_of_name.at(name)]);
        central_test_columns.emplace(fid, std::move(col));
      }
    }

    auto model_metric = [&](const ff::CompleteForest& forest, const ff::FeatureColumns& cols) {
      std::vector<std::vector<double>> per_tree;
      for (const auto& tree : forest.trees) {
        per_tree.push_back(ff::predict_tree(tree.tree, cols, split.test.n_rows()));
      }
      const auto preds = ff::aggregate_forest(per_tree, forest.task);
      return forest.task == ff::Task::Classification ? ff::accuracy(preds, split.test.labels)
                                                     : ff::rmse(preds, split.test.labels);
    };
    acc_federated.push_back(model_metric(fed_run.complete, fed_test_columns));
    acc_centralized.push_back(model_metric(central, central_test_columns));
  }

  if (!independent_seeds) {
    std::cout << "{\"repeats\":" << repeats << ",\"divergences\":" << divergences << "}\n";
    if (divergences > 0) throw ff::VerificationError("federated and centralized models diverged");
    return 0;
  }

  const auto z = ff::two_sample_z_test(acc_federated, acc_centralized);
  std::cout << "{\"repeats\":" << repeats << ",\"metric_federated_mean\":"
            << ff::format_double(z.mean_a)
            << ",\"metric_centralized_mean\":" << ff::format_double(z.mean_b)
            << ",\"federated_stddev\":" << ff::format_double(ff::sample_stddev(acc_federated))
            << ",\"centralized_stddev\":" << ff::format_double(ff::sample_stddev(acc_centralized))
            << ",\"z\":" << ff::format_double(z.z)
            << ",\"p_value\":" << ff::format_double(z.p_value) << "}\n";
  if (z.p_value < 0.05) {
    throw ff::VerificationError("z-test rejects equality of means (p < 0.05)");
  }
  return 0;
}

// --- bench ----------------------------------------------------------------------

struct BenchRow {
  std::string phase;
  int n_trees;
  int max_depth;
  int m;
  double test_fraction;
  std::string method;
  ff::MessageStats stats;
  double wall_ms;
  std::string metric;
};

void write_bench_rows(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "phase,n_trees,max_depth,m,test_fraction,method,p2p,broadcasts,gathers,payload_ids,"
         "wall_ms,metric\n";
  for (const auto& r : rows) {
    out << r.phase << ',' << r.n_trees << ',' << r.max_depth << ',' << r.m << ','
        << ff::format_double(r.test_fraction) << ',' << r.method << ',' << r.stats.point_to_point
        << ',' << r.stats.broadcasts << ',' << r.stats.gathers << ','
        << r.stats.total_payload_ids << ',' << ff::format_double(r.wall_ms) << ',' << r.metric
        << '\n';
  }
}

int cmd_bench(const GlobalFlags& flags, const std::string& input, const std::string& label,
              const std::string& sweep, const std::string& out_path) {
  ff::TrainConfig base;
  base.n_trees = 8;
  base.max_depth = 4;
  base.m = 2;
  base.seed = flags.seed;
  if (!flags.config_path.empty()) {
    base = ff::load_train_config(flags.config_path);
    if (flags.seed_set) base.seed = flags.seed;
  }
  double base_test_fraction = 0.3;

  const auto table = ff::load_csv(input, label);
  if (table.labels.empty()) throw ff::DataError("bench needs a labeled dataset");

  struct Point {
    int n_trees;
    int max_depth;
    int m;
    double test_fraction;
  };
  std::vector<Point> points;
  if (sweep == "estimators") {
    for (int t : {8, 16, 24, 32}) points.push_back({t, base.max_depth, base.m, base_test_fraction});
  } else if (sweep == "depth") {
    for (int d : {4, 8, 12, 16}) points.push_back({base.n_trees, d, base.m, base_test_fraction});
  } else if (sweep == "test-fraction") {
    for (double f : {0.1, 0.2, 0.3, 0.4}) points.push_back({base.n_trees, base.max_depth, base.m, f});
  } else if (sweep == "parties") {
    for (int m = 1; m <= 8; ++m) points.push_back({base.n_trees, base.max_depth, m, base_test_fraction});
  } else {
    throw ff::UsageError("unknown sweep '" + sweep +
                         "' (expected estimators|depth|test-fraction|parties)");
  }

  std::vector<BenchRow> rows;
  for (const auto& point : points) {
    ff::TrainConfig config = base;
    config.n_trees = point.n_trees;
    config.max_depth = point.max_depth;
    config.m = point.m;
    config.validate();

    const auto split = ff::split_table(table, point.test_fraction, ff::mix_seed(config.seed, 7));
    const auto data = partition_table(split.train, config.m, config.seed, "");

    ff::RunOptions options;
    options.transport = flags.transport_kind();

    auto t0 = Clock::now();
    const auto run = ff::run_federated_training(data.shards, config, options);
    const double train_ms = ms_since(t0);
    rows.push_back({"train", point.n_trees, point.max_depth, point.m, point.test_fraction, "-",
                    run.train_stats, train_ms, ""});

    // Test shards: same vertical split of the held-out rows.
    std::map<std::string, std::size_t> col_of_name;
    for (std::size_t c = 0; c < table.feature_names.size(); ++c) {
      col_of_name[table.feature_names[c]] = c;
    }
    std::vector<ff::FeatureColumns> test_cols;
    for (const auto& shard : data.shards) {
      ff::FeatureColumns cols;
      for (const auto& [fid, name] : shard.name_map) {
        std::vector<double> col;
        col.reserve(split.test.n_rows());
        for (const auto& row : split.test.rows) col.push_back(row[col_of_name.at(name)]);
        cols.emplace(fid, std::move(col));
      }
      test_cols.push_back(std::move(cols));
    }
    std::vector<ff::PartialForest> partials = run.partials;

    for (const auto method : {ff::PredictMethod::Intersect, ff::PredictMethod::Classical}) {
      t0 = Clock::now();
      const auto report =
          ff::run_federated_prediction(run.complete, partials, test_cols, split.test.n_rows(),
                                       method, ff::PredictRounds::PerTree, options);
      const double predict_ms = ms_since(t0);
      const double metric = config.task == ff::Task::Classification
                                ? ff::accuracy(report.predictions, split.test.labels)
                                : ff::rmse(report.predictions, split.test.labels);
      rows.push_back({"predict", point.n_trees, point.max_depth, point.m, point.test_fraction,
                      method == ff::PredictMethod::Intersect ? "intersect" : "classical",
                      report.stats, predict_ms, ff::format_double(metric)});
    }
  }

  if (out_path.empty() || out_path == "-") {
    write_bench_rows(std::cout, rows);
  } else {
    std::ofstream out(out_path);
    if (!out) throw ff::DataError("cannot write bench csv: " + out_path);
    write_bench_rows(out, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out_path << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vertical federated random forest"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--seed", flags.seed, "seed override")->each([&](const std::string&) {
    flags.seed_set = true;
  });
  app.add_option("--transport", flags.transport, "inproc|tcp")->default_str("inproc");
  app.add_option("--config", flags.config_path, "train config file (key = value lines)");
  app.add_flag("--deterministic-schedule", flags.deterministic_schedule,
               "serialize party execution (inproc)");

  // partition
  auto* partition = app.add_subcommand("partition", "vertically split a csv into party shards");
  std::string p_input, p_label, p_out, p_salt;
  int p_m = 0;
  partition->add_option("--input", p_input, "input csv")->required();
  partition->add_option("--label", p_label, "label column name (optional)");
  partition->add_option("--m", p_m, "number of parties")->required();
  partition->add_option("--out", p_out, "output shard directory")->required();
  partition->add_option("--salt", p_salt, "id hashing salt (default: derived from seed)");

  // train
  auto* train = app.add_subcommand("train", "train a federated forest over party shards");
  std::string t_shards, t_out, t_role = "all", t_host = "127.0.0.1";
  int t_rank = 0, t_port = 0;
  train->add_option("--shards", t_shards, "shard directory")->required();
  train->add_option("--out", t_out, "output directory for models and stats")->required();
  train->add_option("--role", t_role, "all|master|client (tcp multi-process)");
  train->add_option("--rank", t_rank, "client rank (with --role client)");
  train->add_option("--host", t_host, "master host (with --role client)");
  train->add_option("--port", t_port, "tcp port (0 = ephemeral)");

  // predict
  auto* predict = app.add_subcommand("predict", "predict with a trained model over test shards");
  std::string pr_model, pr_test, pr_out, pr_method = "intersect", pr_rounds = "per-tree";
  std::string pr_role = "all", pr_host = "127.0.0.1";
  int pr_rank = 0, pr_port = 0;
  predict->add_option("--model", pr_model, "model directory (train output)")->required();
  predict->add_option("--test", pr_test, "test shard directory")->required();
  predict->add_option("--out", pr_out, "output directory")->required();
  predict->add_option("--method", pr_method, "intersect|classical");
  predict->add_option("--rounds", pr_rounds, "per-tree|one-per-forest");
  predict->add_option("--role", pr_role, "all|master|client");
  predict->add_option("--rank", pr_rank, "client rank");
  predict->add_option("--host", pr_host, "master host");
  predict->add_option("--port", pr_port, "tcp port");

  // verify
  auto* verify = app.add_subcommand("verify", "check federated == centralized on a dataset");
  std::string v_input, v_label;
  int v_repeats = 1;
  bool v_independent = false;
  double v_test_fraction = 0.3;
  verify->add_option("--input", v_input, "labeled csv")->required();
  verify->add_option("--label", v_label, "label column name")->required();
  verify->add_option("--repeats", v_repeats, "number of repeats")->required();
  verify->add_flag("--independent-seeds", v_independent,
                   "independent seeds + z-test instead of exact equality");
  verify->add_option("--test-fraction", v_test_fraction, "held-out fraction per repeat");

  // bench
  auto* bench = app.add_subcommand("bench", "sweep a parameter and emit metrics csv");
  std::string b_input, b_label, b_sweep = "estimators", b_out;
  bench->add_option("--input", b_input, "labeled csv")->required();
  bench->add_option("--label", b_label, "label column name")->required();
  bench->add_option("--sweep", b_sweep, "estimators|depth|test-fraction|parties");
  bench->add_option("--out", b_out, "output csv path (default stdout)");

  try {
    app.parse(argc, argv);
    if (partition->parsed()) return cmd_partition(flags, p_input, p_label, p_m, p_out, p_salt);
    if (train->parsed()) return cmd_train(flags, t_shards, t_out, t_role, t_rank, t_host, t_port);
    if (predict->parsed()) {
      return cmd_predict(flags, pr_model, pr_test, pr_out, pr_method, pr_rounds, pr_role, pr_rank,
                         pr_host, pr_port);
    }
    if (verify->parsed()) {
      return cmd_verify(flags, v_input, v_label, v_repeats, v_independent, v_test_fraction);
    }
    if (bench->parsed()) return cmd_bench(flags, b_input, b_label, b_sweep, b_out);
    throw ff::UsageError("no subcommand given");
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ff::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const ff::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const ff::ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << '\n';
    return 3;
  } catch (const ff::VerificationError& e) {
    std::cerr << "verification failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
