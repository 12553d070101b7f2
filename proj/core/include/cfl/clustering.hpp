#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cfl/param_vector.hpp"

namespace cfl {

// Hard assignment r_{i,k}: one cluster index per client.
struct Assignment {
  std::vector<int> cluster_of;

  std::size_t size() const noexcept { return cluster_of.size(); }
  bool operator==(const Assignment&) const = default;
};

// Positive per-client importance weights.
class Weights {
 public:
  Weights() = default;
  explicit Weights(std::vector<double> lambda);
  static Weights uniform(std::size_t m) { return Weights(std::vector<double>(m, 1.0)); }

  std::size_t size() const noexcept { return lambda_.size(); }
  double operator[](std::size_t i) const { return lambda_[i]; }
  const std::vector<double>& values() const noexcept { return lambda_; }
  double total() const;

 private:
  std::vector<double> lambda_;
};

using Centroids = std::vector<ParamVector>;

// argmin_k lambda_i * ||g_i - Omega_k||^2, ties to the lowest k.
Assignment e_step(std::span<const ParamVector> reps, std::span<const ParamVector> centroids, const Weights& weights);

// Lambda-weighted member means. Clusters without members keep `previous[k]`.
Centroids m_step(std::span<const ParamVector> reps, const Assignment& assignment, const Weights& weights,
                 std::span<const ParamVector> previous);

// F = (1 / sum_j lambda_j) * sum_i lambda_i * ||g_i - Omega_{k(i)}||^2
double objective_f(std::span<const ParamVector> reps, const Assignment& assignment,
                   std::span<const ParamVector> centroids, const Weights& weights);

// kmeanspp is the greedy variant: best of 2 + ln(k) squared-distance draws per centre.
enum class CentroidInit { random_clients, kmeanspp };

// Indices of the clients whose representations seed the centroids.
std::vector<std::size_t> init_centroid_indices(std::span<const ParamVector> reps, int k, CentroidInit strategy,
                                               std::uint64_t seed);
Centroids init_centroids(std::span<const ParamVector> reps, int k, CentroidInit strategy, std::uint64_t seed);

}  // namespace cfl
