#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "ff/csv.hpp"
#include "ff/metrics.hpp"
#include "ff/synth.hpp"
#include "support/test_util.hpp"

#ifndef FF_CLI_PATH
#error "FF_CLI_PATH must point at the ff binary"
#endif

using namespace ff;
using ff::testing::CliResult;
using ff::testing::read_file;
using ff::testing::run_command;
using ff::testing::TempDir;
using ff::testing::write_file;

namespace {

const std::string kCli = FF_CLI_PATH;

std::string shquote(const std::string& s) { return "'" + s + "'"; }

CliResult ff_cli(const std::string& args) { return run_command(kCli + " " + args); }

std::string write_demo_csv(const TempDir& dir, const std::string& name, std::uint64_t seed,
                           std::size_t rows = 60, std::size_t features = 5) {
  const auto table = make_classification_table(rows, features, 2, seed);
  const auto path = dir.str(name);
  write_csv(path, table);
  return path;
}

std::string write_config(const TempDir& dir, const std::string& text) {
  const auto path = dir.str("train.cfg");
  write_file(path, text);
  return path;
}

}  // namespace

TEST_CASE("partition writes the documented layout and is reproducible") {
  TempDir dir;
  const auto csv = write_demo_csv(dir, "in.csv", 1);

  const auto result = ff_cli("partition --input " + shquote(csv) + " --label y --m 2 --out " +
                             shquote(dir.str("shards")) + " --seed 5");
  CHECK(result.exit_code == 0);
  CHECK(std::filesystem::exists(dir.str("shards/party_1/data.csv")));
  CHECK(std::filesystem::exists(dir.str("shards/party_1/features.map")));
  CHECK(std::filesystem::exists(dir.str("shards/party_2/data.csv")));
  CHECK(std::filesystem::exists(dir.str("shards/master.view")));

  const auto rerun = ff_cli("partition --input " + shquote(csv) + " --label y --m 2 --out " +
                            shquote(dir.str("shards2")) + " --seed 5");
  CHECK(rerun.exit_code == 0);
  for (const auto* file :
       {"party_1/data.csv", "party_1/features.map", "party_2/data.csv", "master.view"}) {
    CHECK(read_file(dir.str("shards/") + file) == read_file(dir.str("shards2/") + file));
  }
}

TEST_CASE("partition usage errors exit 1") {
  TempDir dir;
  const auto csv = write_demo_csv(dir, "in.csv", 2);
  CHECK(ff_cli("partition --input " + shquote(csv) + " --label y --m 0 --out " +
               shquote(dir.str("s")))
            .exit_code == 1);
  CHECK(ff_cli("partition").exit_code == 1);  // missing required flags
}

TEST_CASE("partition data errors exit 2") {
  TempDir dir;
  CHECK(ff_cli("partition --input " + shquote(dir.str("missing.csv")) + " --label y --m 2 --out " +
               shquote(dir.str("s")))
            .exit_code == 2);
}

namespace {

struct TrainedDirs {
  TempDir dir;
  std::string shards;
  std::string model;
  std::string config;
};

void train_demo(TrainedDirs& t, const std::string& extra_train_flags = "") {
  const auto csv = write_demo_csv(t.dir, "in.csv", 3, 80, 6);
  t.shards = t.dir.str("shards");
  t.model = t.dir.str("model");
  t.config = write_config(t.dir,
                          "task = classification\n"
                          "n_trees = 4\n"
                          "max_depth = 4\n"
                          "m = 2\n"
                          "seed = 11\n");
  auto result = ff_cli("partition --input " + shquote(csv) + " --label y --m 2 --out " +
                       shquote(t.shards) + " --seed 11");
  REQUIRE(result.exit_code == 0);
  result = ff_cli("train --shards " + shquote(t.shards) + " --out " + shquote(t.model) +
                  " --config " + shquote(t.config) + " " + extra_train_flags);
  REQUIRE(result.exit_code == 0);
}

}  // namespace

TEST_CASE("train writes models and stats; inproc and tcp agree byte for byte") {
  TrainedDirs t;
  train_demo(t);
  CHECK(std::filesystem::exists(t.dir.str("model/master.model.json")));
  CHECK(std::filesystem::exists(t.dir.str("model/party_1.model.json")));
  CHECK(std::filesystem::exists(t.dir.str("model/party_2.model.json")));
  const auto stats = read_stats_jsonl(t.dir.str("model/train.stats.jsonl"));
  REQUIRE(!stats.empty());
  CHECK(stats.back().phase == "train");
  CHECK(stats.back().stats.gathers > 0);

  const auto tcp_model = t.dir.str("model_tcp");
  const auto result = ff_cli("train --shards " + shquote(t.shards) + " --out " + shquote(tcp_model) +
                             " --config " + shquote(t.config) + " --transport tcp");
  REQUIRE(result.exit_code == 0);
  for (const auto* file :
       {"master.model.json", "party_1.model.json", "party_2.model.json", "train.stats.jsonl"}) {
    CHECK(read_file(t.dir.str("model/") + file) == read_file(tcp_model + "/" + file));
  }
}

TEST_CASE("train rejects a config whose m does not match the shards") {
  TrainedDirs t;
  train_demo(t);
  const auto bad = write_config(t.dir, "task = classification\nn_trees = 2\nm = 3\n");
  const auto result = ff_cli("train --shards " + shquote(t.shards) + " --out " +
                             shquote(t.dir.str("m2")) + " --config " + shquote(bad));
  CHECK(result.exit_code == 2);
}

TEST_CASE("train rejects n_trees = 0 as a usage error") {
  TrainedDirs t;
  train_demo(t);
  const auto bad = write_config(t.dir, "task = classification\nn_trees = 0\nm = 2\n");
  const auto result = ff_cli("train --shards " + shquote(t.shards) + " --out " +
                             shquote(t.dir.str("m3")) + " --config " + shquote(bad));
  CHECK(result.exit_code == 1);
}

TEST_CASE("predict: methods agree, gathers follow the rounds mode") {
  TrainedDirs t;
  train_demo(t);

  // The training shards double as test shards (same encoding by the same
  // seed); predictions land in canonical row order.
  auto result = ff_cli("predict --model " + shquote(t.model) + " --test " + shquote(t.shards) +
                       " --out " + shquote(t.dir.str("p_int")) + " --method intersect");
  REQUIRE(result.exit_code == 0);
  result = ff_cli("predict --model " + shquote(t.model) + " --test " + shquote(t.shards) +
                  " --out " + shquote(t.dir.str("p_cls")) + " --method classical");
  REQUIRE(result.exit_code == 0);

  CHECK(read_file(t.dir.str("p_int/predictions.csv")) ==
        read_file(t.dir.str("p_cls/predictions.csv")));

  const auto int_stats = read_stats_jsonl(t.dir.str("p_int/predict.stats.jsonl"));
  REQUIRE(int_stats.size() == 1);
  CHECK(int_stats[0].stats.gathers == 4);  // one per tree

  result = ff_cli("predict --model " + shquote(t.model) + " --test " + shquote(t.shards) +
                  " --out " + shquote(t.dir.str("p_one")) +
                  " --method intersect --rounds one-per-forest");
  REQUIRE(result.exit_code == 0);
  const auto one_stats = read_stats_jsonl(t.dir.str("p_one/predict.stats.jsonl"));
  CHECK(one_stats[0].stats.gathers == 1);
  CHECK(read_file(t.dir.str("p_int/predictions.csv")) ==
        read_file(t.dir.str("p_one/predictions.csv")));

  const auto first_line = read_file(t.dir.str("p_int/predictions.csv")).substr(0, 24);
  CHECK(first_line.find("sample_index,prediction") == 0);
}

TEST_CASE("train completes at ionosphere scale and reports wall time") {
  TempDir dir;
  const auto table = make_classification_table(351, 34, 2, 88);
  write_csv(dir.str("iono_sized.csv"), table);
  const auto config = write_config(dir,
                                   "task = classification\n"
                                   "n_trees = 20\n"
                                   "max_depth = 8\n"
                                   "m = 2\n"
                                   "seed = 88\n");
  auto result = ff_cli("partition --input " + shquote(dir.str("iono_sized.csv")) +
                       " --label y --m 2 --out " + shquote(dir.str("shards")) + " --seed 88");
  REQUIRE(result.exit_code == 0);
  result = ff_cli("train --shards " + shquote(dir.str("shards")) + " --out " +
                  shquote(dir.str("model")) + " --config " + shquote(config));
  REQUIRE(result.exit_code == 0);
  CHECK(result.output.find("ms") != std::string::npos);
  CHECK(result.output.find("trained 20 trees") != std::string::npos);
}

TEST_CASE("predict on an empty test set writes an empty file and moves zero ids") {
  TrainedDirs t;
  train_demo(t);

  // Empty test shards: the training layout with the data rows stripped.
  const auto empty = t.dir.str("empty_shards");
  std::filesystem::create_directories(empty);
  std::filesystem::copy(t.shards, empty, std::filesystem::copy_options::recursive);
  for (const auto* party : {"party_1", "party_2"}) {
    const auto data_path = empty + "/" + party + "/data.csv";
    const auto text = read_file(data_path);
    write_file(data_path, text.substr(0, text.find('\n') + 1));  // header only
  }

  const auto result = ff_cli("predict --model " + shquote(t.model) + " --test " + shquote(empty) +
                             " --out " + shquote(t.dir.str("p_empty")));
  REQUIRE(result.exit_code == 0);
  CHECK(read_file(t.dir.str("p_empty/predictions.csv")) == "sample_index,prediction\n");
  const auto stats = read_stats_jsonl(t.dir.str("p_empty/predict.stats.jsonl"));
  CHECK(stats[0].stats.total_payload_ids == 0);
}

TEST_CASE("verify in shared-seed mode reports exact equality") {
  TempDir dir;
  const auto csv = write_demo_csv(dir, "v.csv", 7, 70, 5);
  const auto config = write_config(dir,
                                   "task = classification\n"
                                   "n_trees = 3\n"
                                   "max_depth = 4\n"
                                   "m = 2\n"
                                   "seed = 99\n");
  const auto result = ff_cli("verify --input " + shquote(csv) + " --label y --repeats 3 --config " +
                             shquote(config));
  CHECK(result.exit_code == 0);
  CHECK(result.output.find("\"divergences\":0") != std::string::npos);
  CHECK(result.output.find("\"structural_equal\":true") != std::string::npos);
}

TEST_CASE("verify with independent seeds prints a p-value") {
  TempDir dir;
  const auto csv = write_demo_csv(dir, "v.csv", 8, 90, 5);
  const auto config = write_config(dir,
                                   "task = classification\n"
                                   "n_trees = 5\n"
                                   "max_depth = 4\n"
                                   "m = 2\n"
                                   "seed = 424\n");
  const auto result = ff_cli("verify --input " + shquote(csv) +
                             " --label y --repeats 8 --independent-seeds --config " +
                             shquote(config));
  CHECK(result.output.find("\"p_value\":") != std::string::npos);
  CHECK(result.exit_code == 0);
}

TEST_CASE("verify --repeats 0 is a usage error") {
  TempDir dir;
  const auto csv = write_demo_csv(dir, "v.csv", 9);
  const auto config = write_config(dir, "task = classification\nm = 2\n");
  const auto result =
      ff_cli("verify --input " + shquote(csv) + " --label y --repeats 0 --config " + shquote(config));
  CHECK(result.exit_code == 1);
}

TEST_CASE("regression flows through partition, train and predict") {
  TempDir dir;
  const auto table = make_regression_table(70, 5, 19);
  write_csv(dir.str("reg.csv"), table);
  const auto config = write_config(dir,
                                   "task = regression\n"
                                   "n_trees = 3\n"
                                   "max_depth = 4\n"
                                   "m = 2\n"
                                   "seed = 19\n");
  REQUIRE(ff_cli("partition --input " + shquote(dir.str("reg.csv")) + " --label y --m 2 --out " +
                 shquote(dir.str("shards")) + " --seed 19")
              .exit_code == 0);
  REQUIRE(ff_cli("train --shards " + shquote(dir.str("shards")) + " --out " +
                 shquote(dir.str("model")) + " --config " + shquote(config))
              .exit_code == 0);
  const auto result = ff_cli("predict --model " + shquote(dir.str("model")) + " --test " +
                             shquote(dir.str("shards")) + " --out " + shquote(dir.str("pred")));
  REQUIRE(result.exit_code == 0);
  CHECK(result.output.find("rmse:") != std::string::npos);
  // Real-valued predictions, not class indices.
  const auto csv = read_file(dir.str("pred/predictions.csv"));
  CHECK(csv.find('.') != std::string::npos);
}

TEST_CASE("bench emits the pinned csv header and plausible counters") {
  TempDir dir;
  const auto csv = write_demo_csv(dir, "b.csv", 10, 80, 8);
  const auto result =
      ff_cli("bench --input " + shquote(csv) + " --label y --sweep depth --seed 6");
  REQUIRE(result.exit_code == 0);
  CHECK(result.output.find("phase,n_trees,max_depth,m,test_fraction,method,p2p,broadcasts,"
                           "gathers,payload_ids,wall_ms,metric") != std::string::npos);
  CHECK(result.output.find("intersect") != std::string::npos);
  CHECK(result.output.find("classical") != std::string::npos);
}

TEST_CASE("bench estimator sweep: intersect gathers track the tree count") {
  TempDir dir;
  const auto csv = write_demo_csv(dir, "b.csv", 12, 80, 8);
  const auto result =
      ff_cli("bench --input " + shquote(csv) + " --label y --sweep estimators --seed 2");
  REQUIRE(result.exit_code == 0);

  // Parse the csv rows: phase,n_trees,...,method,p2p,broadcasts,gathers,...
  std::istringstream lines(result.output);
  std::string line;
  int checked = 0;
  std::map<int, long> intersect_p2p;
  while (std::getline(lines, line)) {
    if (line.rfind("predict,", 0) != 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 12);
    const int n_trees = std::stoi(cells[1]);
    const std::string& method = cells[5];
    const long p2p = std::stol(cells[6]);
    const long gathers = std::stol(cells[8]);
    if (method == "intersect") {
      CHECK(gathers == n_trees);  // exactly one gather per tree
      intersect_p2p[n_trees] = p2p;
      ++checked;
    } else {
      CHECK(gathers == 0);
      // At least one round trip per tree with an internal node; never below
      // the intersect count (shallow forests can tie at m = 2).
      CHECK(p2p >= 2 + 2 * n_trees);
      CHECK(p2p >= intersect_p2p.at(n_trees));
    }
  }
  CHECK(checked == 4);  // one intersect row per sweep point
}

TEST_CASE("tcp multi-process roles train the same model as single-process") {
  TrainedDirs t;
  train_demo(t);

  const int port = 39000 + static_cast<int>(getpid() % 2000);
  const auto out = t.dir.str("model_roles");
  // Launch master in the background, then the two clients.
  const std::string master_cmd = kCli + " train --shards " + shquote(t.shards) + " --out " +
                                 shquote(out) + " --config " + shquote(t.config) +
                                 " --transport tcp --role master --port " + std::to_string(port) +
                                 " > /dev/null 2>&1 &";
  const int master_rc = std::system(master_cmd.c_str());
  REQUIRE(master_rc == 0);
  auto c1 = run_command(kCli + " train --shards " + shquote(t.shards) + " --out " + shquote(out) +
                        " --config " + shquote(t.config) +
                        " --transport tcp --role client --rank 1 --port " + std::to_string(port) +
                        " & " + kCli + " train --shards " + shquote(t.shards) + " --out " +
                        shquote(out) + " --config " + shquote(t.config) +
                        " --transport tcp --role client --rank 2 --port " + std::to_string(port) +
                        " ; wait");
  CHECK(c1.exit_code == 0);
  // Give the master a moment to flush its outputs.
  for (int i = 0; i < 100 && !std::filesystem::exists(out + "/master.model.json"); ++i) {
    if (std::system("sleep 0.1") != 0) break;
  }
  CHECK(read_file(out + "/master.model.json") == read_file(t.model + "/master.model.json"));
  CHECK(read_file(out + "/party_1.model.json") == read_file(t.model + "/party_1.model.json"));
  CHECK(read_file(out + "/party_2.model.json") == read_file(t.model + "/party_2.model.json"));
}
