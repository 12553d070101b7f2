#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cfl/engine.hpp"
#include "cfl/errors.hpp"
#include "cfl/random.hpp"
#include "cfl/serialize.hpp"

using namespace cfl;
namespace fs = std::filesystem;

namespace {

const char* kSmall =
    "[data.synthetic]\n"
    "n_clusters_true = 2\nclients_per_cluster = 3\nsamples_per_client = 40\n"
    "n_features = 5\nn_classes = 3\n"
    "[strategy]\nkind = wecfl\nk_clusters = 2\ncentroid_init = kmeanspp\n"
    "[sgd]\nlearning_rate = 0.05\nlocal_steps = 4\nbatch_size = 8\n"
    "[run]\nrounds = 5\nwindow = 2\n"
    "[seeds]\ndata = 4\ninit = 5\ntrain = 6\n";

ExperimentConfig small(const std::string& extra = "") {
  auto kv = KeyValueConfig::parse(kSmall);
  auto more = KeyValueConfig::parse(extra);
  for (const auto& [k, v] : more.entries()) kv.set(k, v);
  return ExperimentConfig::from_kv(kv);
}

std::string records_text(const ExperimentResult& r) {
  std::string out;
  for (const auto& rec : r.records) out += round_record_to_json(rec).dump() + "\n";
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "cfl_engine_tests" / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("one round, one client, fedavg: the model is one local update of the initial model") {
  auto cfg = small(
      "[data.synthetic]\nn_clusters_true = 1\nclients_per_cluster = 1\n"
      "[strategy]\nkind = fedavg\nk_clusters = 1\n[run]\nrounds = 1\nwindow = 1\n");
  auto res = run_experiment(cfg);
  REQUIRE(res.records.size() == 1);

  auto data = load_data(cfg.data, cfg.seed_data);
  auto split = split_shards(data.partition, cfg.data.test_fraction, derive_seed(cfg.seed_data, {3}));
  ModelSpec spec = cfg.model;
  spec.n_features = 5;
  spec.n_classes = 3;
  spec.init_seed = cfg.seed_init;
  auto expected = local_update(init_params(spec), spec, ShardView{data.dataset.get(), split.train[0]},
                               cfg.strategy.sgd, derive_seed(derive_seed(cfg.seed_train, {1}), {0}));
  CHECK(res.final_states[0].clients[0].params == expected.params);
  // Aggregating a single copy of the initial model leaves nothing to spread.
  CHECK(res.records[0].f_after_m == 0.0);
}

TEST_CASE("identical configs give identical records, other seeds do not") {
  auto cfg = small();
  CHECK(records_text(run_experiment(cfg)) == records_text(run_experiment(cfg)));
  auto other = cfg;
  other.seed_train = 99;
  CHECK(records_text(run_experiment(other)) != records_text(run_experiment(cfg)));
}

TEST_CASE("thread count does not change results") {
  auto cfg = small("[strategy]\nkind = ifca\n");
  auto many = cfg;
  many.threads = 4;
  CHECK(records_text(run_experiment(cfg)) == records_text(run_experiment(many)));
}

TEST_CASE("summary statistics come from the last window of rounds") {
  auto res = run_experiment(small("[run]\nrounds = 6\nwindow = 3\n"));
  std::vector<double> last;
  for (std::size_t t = 3; t < 6; ++t) last.push_back(res.records[t].micro_acc);
  const double mean = (last[0] + last[1] + last[2]) / 3.0;
  CHECK(res.summary.micro_acc.mean == doctest::Approx(mean).epsilon(1e-14));
  CHECK(res.summary.rounds_run == 6);
  CHECK(res.summary.final_ari == res.records.back().ari_vs_truth);
  CHECK(res.centroid_history.size() == 6);

  std::optional<int> recovered;
  for (int t = 5; t >= 0 && res.records[t].ari_vs_truth == 1.0; --t) recovered = t + 1;
  CHECK(res.summary.recovery_round == recovered);
}

TEST_CASE("records carry round numbers and the step order") {
  auto res = run_experiment(small());
  for (std::size_t t = 0; t < res.records.size(); ++t) {
    CHECK(res.records[t].round == static_cast<int>(t) + 1);
    CHECK(res.records[t].steps == std::vector<std::string>{"E", "M", "D", "L"});
    CHECK(res.records[t].micro_acc >= 0.0);
    CHECK(res.records[t].micro_acc <= 100.0);
  }
}

TEST_CASE("early stopping after five flat rounds") {
  auto res = run_experiment(small("[strategy]\nkind = fedavg\nk_clusters = 1\n[sgd]\nlearning_rate = 0\n"
                                  "[run]\nrounds = 20\nearly_stop = true\n"));
  CHECK(res.summary.stopped_early);
  CHECK(res.summary.rounds_run == 6);
}

TEST_CASE("theorem mode forces full-batch steps and passes with the clamp") {
  auto res = run_experiment(small("[theorem]\nenabled = true\n[sgd]\nmomentum = 0.9\n"));
  CHECK(res.records.back().grad_sq_mean.has_value());
  for (const auto& r : res.records) CHECK(r.f_after_l <= r.f_after_m * (1 + 1e-9) + 1e-300);
}

TEST_CASE("an inflated clamp is reported as a theorem violation with its round") {
  auto cfg = small("[theorem]\nenabled = true\neta_scale = 1000\n[sgd]\nlearning_rate = 1\n");
  try {
    run_experiment(cfg);
    FAIL("expected a violation");
  } catch (const TheoremViolation& e) {
    CHECK(e.round() >= 1);
    CHECK(std::string(e.what()).find("increase") != std::string::npos);
  }
}

TEST_CASE("ensembles keep one federation per member and soft-vote") {
  auto res = run_experiment(small("[strategy]\nkind = ensemble\nk_clusters = 3\nensemble_base = fedprox\n"));
  CHECK(res.final_states.size() == 3);
  CHECK(res.centroid_history.front().size() == 3);
  CHECK(res.final_states[0].clusters[0].model != res.final_states[1].clusters[0].model);
}

TEST_CASE("sweeps run each value like a standalone experiment") {
  auto base = small();
  auto results = sweep(base, "seeds.train", {"1", "2"}, 2);
  REQUIRE(results.size() == 2);
  auto one = base;
  one.seed_train = 2;
  CHECK(records_text(results[1]) == records_text(run_experiment(one)));
  CHECK(sweep(base, "seeds.train", {}).empty());
  CHECK_THROWS_AS(sweep(base, "run.roundz", {"1"}), ValidationError);
  CHECK_THROWS_AS(sweep(base, "strategy.kind", {"kmeans"}), ValidationError);

  auto ks = sweep(base, "strategy.k_clusters", {"1", "3"});
  CHECK(ks[0].final_states[0].clusters.size() == 1);
  CHECK(ks[1].final_states[0].clusters.size() == 3);
}

TEST_CASE("artifacts are written and the effective config reloads") {
  auto cfg = small();
  auto res = run_experiment(cfg);
  auto dir = scratch("artifacts");
  auto written = write_artifacts(cfg, res, dir);
  for (const char* f : {"summary.json", "rounds.jsonl", "assignments.jsonl", "client_params.csv",
                        "cosine_clients.csv", "cosine_clusters.csv", "partition_stats.csv", "effective_config.ini"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  CHECK(written.size() == 8);

  CHECK(slurp(dir / "rounds.jsonl") == records_text(res));
  auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  for (const char* key : {"strategy", "k_clusters", "rounds_run", "window", "micro_acc_mean", "micro_acc_window_std",
                          "macro_f1_mean", "macro_f1_window_std", "final_ari", "stopped_early", "seeds",
                          "recovery_round", "final"})
    CHECK_MESSAGE(summary.contains(key), key);
  CHECK(summary["seeds"]["train"] == 6);

  auto back = ExperimentConfig::from_kv(KeyValueConfig::load(dir / "effective_config.ini"));
  CHECK(records_text(run_experiment(back)) == records_text(res));

  std::istringstream lines(slurp(dir / "assignments.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j["centroids"].size() == 2);
    CHECK(j["assignment"].size() == 6);
    ++n;
  }
  CHECK(n == 5);
}

TEST_CASE("zero client models skip the cosine files") {
  auto cfg = small("[strategy]\nkind = fedavg\nk_clusters = 1\n[sgd]\nlearning_rate = 0\n");
  auto dir = scratch("zeros");
  write_artifacts(cfg, run_experiment(cfg), dir);
  CHECK_FALSE(fs::exists(dir / "cosine_clients.csv"));
  CHECK(fs::exists(dir / "summary.json"));
}

TEST_CASE("partition statistics count every sample once") {
  auto cfg = small();
  auto data = load_data(cfg.data, cfg.seed_data);
  auto s = partition_stats(*data.dataset, data.partition);
  std::size_t total = 0;
  for (std::size_t i = 0; i < s.client_hist.size(); ++i) {
    std::size_t row = 0;
    for (auto v : s.client_hist[i]) row += v;
    CHECK(row == s.client_sizes[i]);
    total += row;
  }
  CHECK(total == data.dataset->size());
  std::size_t cluster_total = 0;
  for (const auto& h : s.cluster_hist)
    for (auto v : h) cluster_total += v;
  CHECK(cluster_total == total);

  auto csv = partition_stats_csv(s);
  CHECK(csv.rfind("row,id,cluster,total,class_0,class_1,class_2\n", 0) == 0);
  CHECK(csv.find("\nintra_cluster_l1,,,") != std::string::npos);
}

TEST_CASE("class-restricted partitions: each client sees exactly its classes") {
  auto cfg = small(
      "[data.synthetic]\nn_classes = 6\n"
      "[data.partition]\nkind = nclass\nclients = 6\nk_true = 2\ncluster_classes = 3\nclient_classes = 2\n");
  auto data = load_data(cfg.data, cfg.seed_data);
  auto s = partition_stats(*data.dataset, data.partition);
  for (std::size_t i = 0; i < s.client_hist.size(); ++i) {
    int nonzero = 0;
    for (auto v : s.client_hist[i]) nonzero += v > 0;
    CHECK(nonzero == 2);
  }
  for (const auto& h : s.cluster_hist) {
    int nonzero = 0;
    for (auto v : h) nonzero += v > 0;
    CHECK(nonzero <= 3);
  }
}
