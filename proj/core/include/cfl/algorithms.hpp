#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfl/clustering.hpp"
#include "cfl/data.hpp"
#include "cfl/metrics.hpp"
#include "cfl/model.hpp"

namespace cfl {

enum class StrategyKind { fedavg, fedprox, ifca, fesem, wecfl, ensemble };
enum class WeightMode { shard_size, uniform };

const char* to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(const std::string& s);

struct Strategy {
  StrategyKind kind = StrategyKind::wecfl;
  // Number of clusters; for ensembles, the number of independent runs.
  int k_clusters = 1;
  SgdConfig sgd;
  WeightMode weight_mode = WeightMode::shard_size;
  // Only read when kind == ensemble; fedavg or fedprox.
  StrategyKind ensemble_base = StrategyKind::fedavg;
  // Fraction of clients that aggregate and train each round.
  double participation = 1.0;
  // Segments forming the client representation; empty means all of them.
  std::vector<std::string> representation;
  CentroidInit centroid_init = CentroidInit::random_clients;

  void validate() const;
  bool clustered() const;
};

struct ClientState {
  ParamVector params;
  double shard_weight = 1.0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  int cluster = 0;
};

struct ClusterState {
  ParamVector model;
};

struct FederationState {
  std::shared_ptr<const Dataset> data;
  ModelSpec spec;
  std::vector<ClientState> clients;
  std::vector<ClusterState> clusters;
  // Ground-truth cluster per client; empty when unknown.
  std::vector<int> ground_truth;
  int round = 0;
  GradientBound u_bound;

  std::size_t n_clients() const noexcept { return clients.size(); }
  ShardView train_view(std::size_t i) const { return {data.get(), clients[i].train}; }
  ShardView test_view(std::size_t i) const { return {data.get(), clients[i].test}; }
  Assignment assignment() const;
  std::vector<ParamVector> cluster_models() const;
};

// Learning-rate clamps used when checking the convergence guarantees.
enum class EtaClamp {
  none,
  // eta <= ||omega_i - Omega_k|| / (Q U), keeps F non-increasing.
  f_bound,
  // f_bound and eta <= (2/beta) (||g||^2 - B U^2) / (||g||^2 + sigma^2).
  r_bound,
};

struct RoundOptions {
  EtaClamp clamp = EtaClamp::none;
  // Multiplies the clamp; values above 1 deliberately break it.
  double eta_scale = 1.0;
  // Smoothness constant for the r_bound clamp; defaults to smoothness_bound().
  std::optional<double> beta;
  int threads = 1;
};

struct RoundResult {
  FederationState state;
  RoundRecord record;
};

struct FederationInit {
  ModelSpec spec;
  Strategy strategy;
  std::uint64_t init_seed = 0;
  std::uint64_t train_seed = 0;
  int threads = 1;
};

// Clients start from one shared initial model. Clustered strategies then run
// one warm-up local update per client and pick initial centroids among the
// resulting client models; fedavg/fedprox start from the initial model.
FederationState init_federation(std::shared_ptr<const Dataset> data, const TrainTestSplit& split,
                                std::vector<int> ground_truth, const FederationInit& init);

// Algorithm rounds. Each validates strategy.kind and performs, in order:
// assignment (E), aggregation (M), distribution (D), local update (L).
RoundResult wecfl_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                        const RoundOptions& opts = {});
RoundResult fesem_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                        const RoundOptions& opts = {});
RoundResult ifca_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                       const RoundOptions& opts = {});
RoundResult fedavg_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                         const RoundOptions& opts = {});
RoundResult fedprox_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                          const RoundOptions& opts = {});
// Dispatches on strategy.kind (ensemble members use their base kind).
RoundResult run_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                      const RoundOptions& opts = {});

// IFCA assignment: argmin_k loss(model_k, D_i), ties to the lowest k.
Assignment loss_assignment(const Matrix& loss_table);
Matrix client_loss_table(const FederationState& state);

// Soft voting: mean of the models' class probabilities.
Matrix ensemble_predict(std::span<const ParamVector> models, const ModelSpec& spec, const Matrix& features);
Matrix ensemble_predict(std::span<const ParamVector> models, const ModelSpec& spec, ShardView shard);

// ||omega - Omega|| / (q U); +infinity when U == 0.
double theorem_eta_bound(const ParamVector& client_params, const ParamVector& centroid, int q, double u_estimate);

// Effective lambda for a strategy: uniform for FeSEM and weight_mode uniform,
// otherwise training-shard sizes divided by the largest one.
Weights effective_weights(const FederationState& state, const Strategy& strategy);

// Client representation g_i.
ParamVector representation(const ParamVector& params, const Strategy& strategy);

}  // namespace cfl
