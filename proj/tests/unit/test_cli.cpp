// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hmnet/cli.hpp"
#include "hmnet/errors.hpp"
#include "hmnet/relevance.hpp"
#include "support.hpp"

using namespace hmnet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::string& name, const std::vector<std::string>& flags) {
  std::ostringstream out, err;
  const int code = run_subcommand(name, flags, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A small suite manifest and a config training a tiny model on it.
std::string write_inputs(const std::string& dir, const std::string& grouping = "manual") {
  std::ofstream(dir + "/manifest.json") << R"({"synthetic_suite": {"n_train": 24, "n_dev": 12}})";
  std::ofstream(dir + "/config.json") << R"({"tasks": "manifest.json", "plan": "1,1,1", "depth": 3,
    "grouping": {"source": ")" << grouping << R"(", "k": 2, "restarts": 5},
    "model": {"d": 8, "heads": 2, "max_len": 8},
    "train": {"epochs": 1, "batch_size": 8, "lr": 0.001},
    "output": "run", "seed": 3})";
  return dir + "/config.json";
}

}  // namespace

TEST_CASE("exit codes and error lines") {
  std::ostringstream out, err;
  const char* bad[] = {"hmnet", "frobnicate"};
  CHECK(run_cli(2, bad, out, err) == 2);
  CHECK(err.str().rfind("error: usage", 0) == 0);

  auto missing = run("cluster", {"--matrix", "/nonexistent/m.csv"});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: io:", 0) == 0);
  CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);

  CHECK(run("cluster", {}).code == 2);
  auto k = run("cluster", {"--matrix", hmnet::testing::fixture("data_property.csv"), "--k", "20"});
  CHECK(k.code == 1);
  CHECK(k.err.rfind("error: config:", 0) == 0);

  std::ostringstream o2, e2;
  const char* help[] = {"hmnet", "--help"};
  CHECK(run_cli(2, help, o2, e2) == 0);
}

TEST_CASE("cluster reproduces the fixture partition") {
  auto r = run("cluster", {"--matrix", hmnet::testing::fixture("data_property.csv"), "--k", "3", "--restarts", "50"});
  REQUIRE(r.code == 0);
  auto g = grouping_from_json(nlohmann::json::parse(r.out));
  CHECK(g.k == 3);
  CHECK(g.cluster("WNLI") == g.cluster("CB"));
  CHECK(g.cluster("RTE") == g.cluster("MultiRC"));
  CHECK(g.cluster("MNLI") == g.cluster("QQP"));
  CHECK(g.cluster("MNLI") != g.cluster("RTE"));
  CHECK(g.cluster("CB") != g.cluster("RTE"));
}

TEST_CASE("seed splitting is deterministic and distinct per component") {
  auto a = split_seed(5), b = split_seed(5);
  CHECK(a.data == b.data);
  CHECK(a.init == derive_seed(5, "init"));
  CHECK(a.data != a.init);
  CHECK(a.train != a.kmeans);
  CHECK(a.probe != split_seed(6).probe);
}

TEST_CASE("experiment config validation") {
  const std::string dir = hmnet::testing::temp_dir("cli_config");
  auto cfg = load_experiment_config(write_inputs(dir));
  CHECK(cfg.plan == LayerPlan{1, 1, 1});
  CHECK(cfg.model.d == 8);
  CHECK(cfg.output == dir + "/run");
  CHECK(cfg.train.epochs == 1);

  nlohmann::json j = nlohmann::json::parse(slurp(dir + "/config.json"));
  j["depth"] = 4;
  CHECK_THROWS_AS(experiment_config_from_json(j, dir), ConfigError);
  j["depth"] = 3;
  j["tasks"] = "absent.json";
  CHECK_THROWS_AS(experiment_config_from_json(j, dir), ConfigError);
  j["tasks"] = "manifest.json";
  j["grouping"]["source"] = "astrology";
  CHECK_THROWS_AS(experiment_config_from_json(j, dir), ConfigError);
}

TEST_CASE("train twice gives identical artifacts and leaves inputs untouched") {
  const std::string dir = hmnet::testing::temp_dir("cli_train");
  const std::string config = write_inputs(dir);
  const std::string before = slurp(config) + slurp(dir + "/manifest.json");
  auto first = run("train", {"--config", config, "--out", dir + "/a"});
  REQUIRE(first.code == 0);
  auto second = run("train", {"--config", config, "--out", dir + "/b"});
  REQUIRE(second.code == 0);
  for (const char* f : {"history.jsonl", "loss.csv", "grouping.json", "metrics.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir + "/a/" + f));
    CHECK(slurp(dir + "/a/" + f) == slurp(dir + "/b/" + f));
  }
  CHECK(first.out == second.out);
  CHECK(slurp(config) + slurp(dir + "/manifest.json") == before);

  auto ev = run("eval", {"--checkpoint", dir + "/a/checkpoint", "--tasks", dir + "/manifest.json", "--seed", "3"});
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("a1") != std::string::npos);

  auto sim = run("attention-sim", {"--checkpoint-a", dir + "/a/checkpoint", "--task-a", "a1", "--checkpoint-b",
                                   dir + "/b/checkpoint", "--tasks", dir + "/manifest.json", "--seed", "3", "--out",
                                   dir + "/sim.csv"});
  REQUIRE(sim.code == 0);
  std::ifstream in(dir + "/sim.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line == "layer,head,cosine");
  while (std::getline(in, line)) CHECK(std::stod(line.substr(line.rfind(',') + 1)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("model-based relevance over the suite has a zero diagonal") {
  const std::string dir = hmnet::testing::temp_dir("cli_relevance");
  const std::string config = write_inputs(dir);
  auto r = run("relevance", {"--kind", "model_based", "--tasks", dir + "/manifest.json", "--config", config, "--depth",
                             "1", "--jobs", "4", "--out", dir + "/m.csv"});
  REQUIRE(r.code == 0);
  auto m = read_relevance_csv(dir + "/m.csv", RelevanceKind::model_based);
  CHECK(m.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(m.scores[i][i] == 0.0);

  auto again = run("relevance", {"--kind", "model_based", "--tasks", dir + "/manifest.json", "--config", config,
                                 "--depth", "1", "--jobs", "1"});
  REQUIRE(again.code == 0);
  CHECK(again.out == slurp(dir + "/m.csv"));

  auto dp = run("relevance", {"--kind", "data_property", "--tasks", dir + "/manifest.json"});
  REQUIRE(dp.code == 0);
  CHECK(dp.out.rfind("task,a1,a2,c1,c2,i1,i2", 0) == 0);
}

TEST_CASE("sweep subcommand writes the grid") {
  const std::string dir = hmnet::testing::temp_dir("cli_sweep");
  const std::string config = write_inputs(dir);
  auto r = run("sweep", {"--config", config, "--plans", "3,0,0;1,1,1", "--groupings", "manual,hard", "--seeds", "0,1",
                         "--jobs", "4", "--out", dir + "/s.csv"});
  REQUIRE(r.code == 0);
  std::ifstream in(dir + "/s.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2 * 2 * 2 * (6 + 1));

  auto pair = run("sweep", {"--config", config, "--mode", "shared-layers", "--pair", "a1,c1", "--depth", "2", "--out",
                            dir + "/p.csv"});
  REQUIRE(pair.code == 0);
  CHECK(run("sweep", {"--config", config, "--mode", "sideways", "--out", dir + "/x.csv"}).code == 1);
}
