#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfl/clustering.hpp"
#include "cfl/data.hpp"
#include "cfl/matrix.hpp"
#include "cfl/model.hpp"
#include "cfl/param_vector.hpp"

namespace cfl {

// Everything measured in one communication round.
struct RoundRecord {
  int round = 0;
  double f_after_e = 0.0;
  double f_after_m = 0.0;
  double f_after_l = 0.0;
  // R with every client on its own post-update model (the value the local
  // step minimises).
  double r_value = 0.0;
  // R with every client on its cluster model right after aggregation.
  double r_after_m = 0.0;
  double micro_acc = 0.0;
  double macro_f1 = 0.0;
  // Empty entries: cluster had no members or a zero mean gradient.
  std::vector<std::optional<double>> b_per_cluster;
  // +infinity when the gradient bound estimate is zero.
  std::vector<double> eta_bounds;
  Assignment assignment_snapshot;
  double ari_vs_truth = 0.0;
  // Lambda-weighted mean over clients and local steps of the squared
  // full-shard gradient norm at each iterate. Only filled in theorem-check mode.
  std::optional<double> grad_sq_mean;
  // Execution order of the round's steps, e.g. {"E","M","D","L"}.
  std::vector<std::string> steps;
};

// 100 * matches / n.
double micro_accuracy(std::span<const int> pred, std::span<const int> truth);

// Unweighted mean of per-class F1 over all n_classes. A class that is neither
// present nor predicted scores 0.
double macro_f1(std::span<const int> pred, std::span<const int> truth, int n_classes);

// Smallest B with ||gbar - g_i|| <= B * ||gbar|| for every member, gbar being
// the lambda-weighted mean gradient. Empty when ||gbar|| == 0.
std::optional<double> clusterability_b(std::span<const ParamVector> client_grads, std::span<const double> weights);

// Pairwise cosine similarity; throws ValidationError on a zero vector.
Matrix cosine_similarity_matrix(std::span<const ParamVector> vectors);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

// R = (1 / sum_j lambda_j) * sum_i lambda_i * loss(model_{k(i)}, D_i)
double objective_r(std::span<const ParamVector> cluster_models, const Assignment& assignment,
                   std::span<const ShardView> shards, const Weights& weights, const ModelSpec& spec);

struct WindowStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over the window
};

// Mean and spread of the last `window` values.
WindowStats window_stats(std::span<const double> values, std::size_t window);

}  // namespace cfl
