#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfl/algorithms.hpp"
#include "cfl/config.hpp"
#include "cfl/data.hpp"
#include "cfl/metrics.hpp"
#include "cfl/model.hpp"

namespace cfl {

enum class DataSource { synthetic, idx };
enum class PartitionKind { generator, dirichlet, nclass };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  SyntheticSpec synthetic;
  std::filesystem::path idx_images;
  std::filesystem::path idx_labels;
  // generator: use the synthetic generator's own client layout.
  PartitionKind partition = PartitionKind::generator;
  int clients = 10;
  int k_true = 1;
  double alpha_cluster = 0.1;
  double alpha_client = 10.0;
  int cluster_classes = 3;
  int client_classes = 2;
  double test_fraction = 0.2;
};

struct TheoremCheck {
  bool enabled = false;
  EtaClamp clamp = EtaClamp::f_bound;
  double eta_scale = 1.0;
  std::optional<double> beta;
  double f_slack = 1e-9;
  double r_slack = 1e-7;
};

struct ExperimentConfig {
  DataConfig data;
  ModelSpec model;
  Strategy strategy;
  int rounds = 100;
  int window = 3;
  int threads = 1;
  bool early_stop = false;
  std::uint64_t seed_data = 0;
  std::uint64_t seed_init = 0;
  std::uint64_t seed_train = 0;
  TheoremCheck theorem;

  void validate() const;

  // Unknown keys and malformed values raise ValidationError.
  static ExperimentConfig from_kv(const KeyValueConfig& kv);
  // Every recognised key with its effective value.
  KeyValueConfig to_kv() const;
};

// Names of all recognised config keys.
std::vector<std::string> config_keys();

struct ExperimentSummary {
  int rounds_run = 0;
  int window = 0;
  WindowStats micro_acc;
  WindowStats macro_f1;
  double final_ari = 0.0;
  // First round whose assignment matches the ground truth (ARI == 1) and
  // stays matched through the end of the run.
  std::optional<int> recovery_round;
  bool stopped_early = false;
};

struct ExperimentResult {
  std::vector<RoundRecord> records;
  ExperimentSummary summary;
  Partition partition;
  // Final federation; ensembles keep one per member.
  std::vector<FederationState> final_states;
  // Cluster models after each round's aggregation.
  std::vector<std::vector<ParamVector>> centroid_history;
  std::vector<std::string> artifacts;
};

struct LoadedData {
  std::shared_ptr<const Dataset> dataset;
  Partition partition;
};

// Builds (or loads) the dataset and partitions it with the data seed.
LoadedData load_data(const DataConfig& cfg, std::uint64_t seed_data);

using RoundCallback = std::function<void(const RoundRecord&)>;

// Runs data -> partition -> init -> rounds -> summary. In theorem-check mode
// the convergence monotonicity guarantees are asserted every round and a
// violation throws TheoremViolation naming the round.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundCallback& on_round = {});

// One run per value of `axis` (a config key), everything else held fixed.
std::vector<ExperimentResult> sweep(const ExperimentConfig& base, const std::string& axis,
                                    const std::vector<std::string>& values, int parallel_runs = 1);

// Writes summary.json, rounds.jsonl, assignments.jsonl, client_params.csv,
// cosine_clients.csv, cosine_clusters.csv, partition_stats.csv and
// effective_config.ini. Returns the written paths.
std::vector<std::string> write_artifacts(const ExperimentConfig& cfg, const ExperimentResult& result,
                                         const std::filesystem::path& out_dir);

nlohmann::json summary_to_json(const ExperimentConfig& cfg, const ExperimentResult& result);

struct PartitionStats {
  std::vector<std::size_t> client_sizes;
  std::vector<int> client_cluster;
  std::vector<std::vector<std::size_t>> client_hist;
  std::vector<std::vector<std::size_t>> cluster_hist;
  // Mean L1 distance between normalised client label histograms.
  double intra_cluster_l1 = 0.0;
  double inter_cluster_l1 = 0.0;
};

PartitionStats partition_stats(const Dataset& d, const Partition& p);
std::string partition_stats_csv(const PartitionStats& s);

}  // namespace cfl
