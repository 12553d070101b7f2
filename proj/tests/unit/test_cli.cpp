#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../../tools/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cflsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cfl::cli::parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "cfl_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  auto p = dir / "exp.ini";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kTiny =
    "[data.synthetic]\nn_clusters_true = 2\nclients_per_cluster = 2\nsamples_per_client = 30\n"
    "n_features = 4\nn_classes = 3\n"
    "[strategy]\nkind = wecfl\nk_clusters = 2\n"
    "[sgd]\nlearning_rate = 0.05\nlocal_steps = 3\n"
    "[run]\nrounds = 3\nwindow = 2\n";

}  // namespace

TEST_CASE("run writes artifacts and streams one record per round") {
  auto dir = scratch("run");
  auto cfg = write_config(dir, kTiny);
  auto r = cli({"run", "--config", cfg.string(), "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "out" / "summary.json"));
  std::istringstream lines(r.out);
  std::string line;
  int records = 0;
  while (std::getline(lines, line))
    if (nlohmann::json::parse(line).contains("f_after_e")) ++records;
  CHECK(records == 3);

  auto quiet = cli({"run", "--config", cfg.string(), "--out", (dir / "q").string(), "--quiet"});
  CHECK(quiet.code == 0);
  CHECK(quiet.out.empty());
  CHECK(slurp(dir / "q" / "rounds.jsonl") == slurp(dir / "out" / "rounds.jsonl"));
}

TEST_CASE("overrides and seed flags reach the effective config") {
  auto dir = scratch("override");
  auto cfg = write_config(dir, kTiny);
  auto r = cli({"run", "--config", cfg.string(), "--out", dir.string(), "--quiet", "--override", "run.rounds=2",
                "--override", "run.window=1", "--seed-train", "77"});
  REQUIRE(r.code == 0);
  auto eff = slurp(dir / "effective_config.ini");
  CHECK(eff.find("rounds = 2") != std::string::npos);
  CHECK(eff.find("train = 77") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  auto dir = scratch("usage");
  auto cfg = write_config(dir, kTiny);
  CHECK(cli({}).code == 1);
  CHECK(cli({"run"}).code == 1);
  auto unknown = cli({"run", "--config", cfg.string(), "--frobnicate"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("--config") != std::string::npos);
  CHECK(cli({"teleport", "--config", cfg.string()}).code == 1);
}

TEST_CASE("a missing config file exits 1 and names the path") {
  auto r = cli({"run", "--config", "/nonexistent/exp.ini"});
  CHECK(r.code == 1);
  CHECK(r.err.find("config file not found: /nonexistent/exp.ini") != std::string::npos);
}

TEST_CASE("a bad config value exits 1") {
  auto dir = scratch("badvalue");
  auto r = cli({"run", "--config", write_config(dir, "[run]\nrounds = many\n").string(), "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("run.rounds") != std::string::npos);
}

TEST_CASE("check-theorems passes with the clamp and exits 3 when it is inflated") {
  auto dir = scratch("theorems");
  auto cfg = write_config(dir, kTiny);
  auto ok = cli({"check-theorems", "--config", cfg.string(), "--out", (dir / "ok").string(), "--quiet"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("theorem checks passed") != std::string::npos);

  auto bad = cli({"check-theorems", "--config", (fs::path(CFL_CONFIG_DIR) / "theorem_violation.ini").string(), "--out",
                  (dir / "bad").string(), "--quiet"});
  CHECK(bad.code == 3);
  CHECK(bad.err.find("theorem check failed at round 1:") != std::string::npos);
}

TEST_CASE("check-theorems refuses strategies it cannot check") {
  auto dir = scratch("theorem_ifca");
  auto r = cli({"check-theorems", "--config", write_config(dir, kTiny).string(), "--override", "strategy.kind=ifca",
                "--out", dir.string()});
  CHECK(r.code == 1);
}

TEST_CASE("sweep writes one directory per value and both spreads") {
  auto dir = scratch("sweep");
  auto cfg = write_config(dir, kTiny);
  auto r = cli({"sweep", "--config", cfg.string(), "--out", dir.string(), "--axis", "seeds.train", "--values", "1,2,3",
                "--jobs", "2", "--quiet"});
  REQUIRE(r.code == 0);
  for (const char* v : {"1", "2", "3"}) CHECK(fs::exists(dir / ("seeds.train=" + std::string(v)) / "rounds.jsonl"));
  auto s = nlohmann::json::parse(slurp(dir / "sweep_summary.json"));
  CHECK(s["runs"].size() == 3);
  CHECK(s.contains("micro_acc_std_across_runs"));
  CHECK(s.contains("micro_acc_std_pooled"));

  double mean = 0.0;
  for (const auto& run : s["runs"]) mean += run["micro_acc_mean"].get<double>();
  CHECK(s["micro_acc_mean"].get<double>() == doctest::Approx(mean / 3).epsilon(1e-14));

  CHECK(cli({"sweep", "--config", cfg.string(), "--out", dir.string(), "--axis", "no.such.key", "--values", "1"}).code ==
        1);
}

TEST_CASE("partition-stats on a class-restricted split") {
  auto dir = scratch("pstats");
  auto cfg = fs::path(CFL_CONFIG_DIR) / "nclass_3_2.ini";
  auto a = cli({"partition-stats", "--config", cfg.string(), "--out", (dir / "a").string()});
  REQUIRE(a.code == 0);
  // Each client row lists exactly two classes with nonzero counts.
  std::istringstream lines(a.out);
  std::string line;
  int clients = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("client,", 0) != 0) continue;
    ++clients;
    std::istringstream fields(line);
    std::string f;
    int col = 0, nonzero = 0;
    while (std::getline(fields, f, ','))
      if (col++ >= 4 && std::stoul(f) > 0) ++nonzero;
    CHECK(nonzero == 2);
  }
  CHECK(clients > 0);

  auto b = cli({"partition-stats", "--config", cfg.string(), "--out", (dir / "b").string()});
  CHECK(a.out == b.out);
  CHECK(slurp(dir / "a" / "partition_stats.csv") == slurp(dir / "b" / "partition_stats.csv"));
}

TEST_CASE("partition-stats with a single client") {
  auto dir = scratch("pstats_one");
  auto cfg = write_config(dir, "[data.synthetic]\nn_clusters_true = 1\nclients_per_cluster = 1\nsamples_per_client = 20\n");
  auto r = cli({"partition-stats", "--config", cfg.string(), "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\nclient,0,0,20,") != std::string::npos);
  CHECK(r.out.find("intra_cluster_l1,,,0\n") != std::string::npos);
}
