#include "cfl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "cfl/errors.hpp"
#include "cfl/random.hpp"

namespace cfl {

Weights::Weights(std::vector<double> lambda) : lambda_(std::move(lambda)) {
  for (double l : lambda_) {
    if (!(l > 0.0)) throw ValidationError("weights must be strictly positive");
  }
}

double Weights::total() const { return std::accumulate(lambda_.begin(), lambda_.end(), 0.0); }

namespace {

void check_inputs(std::span<const ParamVector> reps, std::span<const ParamVector> centroids, const Weights* weights) {
  if (reps.empty()) throw ValidationError("clustering: no client representations");
  if (centroids.empty()) throw ValidationError("clustering: need at least one centroid");
  if (weights && weights->size() != reps.size()) throw ShapeError("clustering: weight count differs from client count");
  for (const auto& r : reps) require_same_shape(r, reps.front(), "clustering reps");
  for (const auto& c : centroids) require_same_shape(c, reps.front(), "clustering centroids");
}

void check_assignment(const Assignment& a, std::size_t m, std::size_t k) {
  if (a.size() != m) throw ShapeError("assignment length differs from client count");
  for (int c : a.cluster_of) {
    if (c < 0 || static_cast<std::size_t>(c) >= k)
      throw ValidationError("assignment references cluster " + std::to_string(c) + " outside [0, " +
                            std::to_string(k) + ")");
  }
}

}  // namespace

Assignment e_step(std::span<const ParamVector> reps, std::span<const ParamVector> centroids, const Weights& weights) {
  check_inputs(reps, centroids, &weights);
  Assignment out;
  out.cluster_of.resize(reps.size());
  for (std::size_t i = 0; i < reps.size(); ++i) {
    // lambda_i > 0 is constant over k, so it does not move the argmin.
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      double d = squared_distance(reps[i], centroids[k]);
      if (d < best) {
        best = d;
        arg = static_cast<int>(k);
      }
    }
    out.cluster_of[i] = arg;
  }
  return out;
}

Centroids m_step(std::span<const ParamVector> reps, const Assignment& assignment, const Weights& weights,
                 std::span<const ParamVector> previous) {
  check_inputs(reps, previous, &weights);
  check_assignment(assignment, reps.size(), previous.size());

  // Means are accumulated as offsets from each cluster's first member in
  // extended precision, so the stored centroid is the mean rounded once.
  // Coincident members then give back exactly that vector, and a rounded mean
  // never has larger F than any other representable centroid.
  const std::size_t K = previous.size(), dim = reps.front().size();
  std::vector<long double> mass(K, 0.0L), sums(K * dim, 0.0L);
  std::vector<std::ptrdiff_t> anchor(K, -1);
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const auto k = static_cast<std::size_t>(assignment.cluster_of[i]);
    if (anchor[k] < 0) anchor[k] = static_cast<std::ptrdiff_t>(i);
    const auto& a = reps[static_cast<std::size_t>(anchor[k])];
    const long double w = weights[i];
    for (std::size_t j = 0; j < dim; ++j)
      sums[k * dim + j] += w * (static_cast<long double>(reps[i][j]) - a[j]);
    mass[k] += w;
  }
  Centroids out(previous.begin(), previous.end());
  for (std::size_t k = 0; k < K; ++k) {
    if (anchor[k] < 0) continue;
    const auto& a = reps[static_cast<std::size_t>(anchor[k])];
    out[k] = ParamVector(a.layout_ptr(), 0.0);
    for (std::size_t j = 0; j < dim; ++j) out[k][j] = static_cast<double>(a[j] + sums[k * dim + j] / mass[k]);
  }
  return out;
}

double objective_f(std::span<const ParamVector> reps, const Assignment& assignment,
                   std::span<const ParamVector> centroids, const Weights& weights) {
  check_inputs(reps, centroids, &weights);
  check_assignment(assignment, reps.size(), centroids.size());
  double s = 0.0;
  for (std::size_t i = 0; i < reps.size(); ++i)
    s += weights[i] * squared_distance(reps[i], centroids[assignment.cluster_of[i]]);
  return s / weights.total();
}

std::vector<std::size_t> init_centroid_indices(std::span<const ParamVector> reps, int k, CentroidInit strategy,
                                               std::uint64_t seed) {
  if (reps.empty()) throw ValidationError("init_centroids: no client representations");
  if (k < 1) throw ValidationError("init_centroids: k must be >= 1");
  Rng rng(seed);
  std::vector<std::size_t> picked;

  if (strategy == CentroidInit::random_clients) {
    if (static_cast<std::size_t>(k) > reps.size())
      throw ValidationError("init_centroids: k=" + std::to_string(k) + " exceeds client count " +
                            std::to_string(reps.size()));
    std::vector<std::size_t> order(reps.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    picked.assign(order.begin(), order.begin() + k);
    return picked;
  }

  // Greedy k-means++: first centre uniform; each later centre is the best of
  // 2 + ln(k) candidates drawn proportionally to squared distance from the
  // nearest chosen centre, scored by the resulting total squared distance.
  // Once every point is covered, fall back to uniform picks.
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
  picked.push_back(std::uniform_int_distribution<std::size_t>(0, reps.size() - 1)(rng));
  std::vector<double> nearest(reps.size());
  for (std::size_t i = 0; i < reps.size(); ++i) nearest[i] = squared_distance(reps[i], reps[picked.front()]);
  while (picked.size() < static_cast<std::size_t>(k)) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    if (!(total > 0.0)) {
      picked.push_back(std::uniform_int_distribution<std::size_t>(0, reps.size() - 1)(rng));
      continue;
    }
    std::discrete_distribution<std::size_t> dist(nearest.begin(), nearest.end());
    std::size_t best = 0;
    std::vector<double> best_nearest;
    double best_potential = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
      const std::size_t cand = dist(rng);
      std::vector<double> next(nearest);
      double potential = 0.0;
      for (std::size_t i = 0; i < reps.size(); ++i) {
        next[i] = std::min(next[i], squared_distance(reps[i], reps[cand]));
        potential += next[i];
      }
      if (potential < best_potential) {
        best_potential = potential;
        best = cand;
        best_nearest = std::move(next);
      }
    }
    picked.push_back(best);
    nearest = std::move(best_nearest);
  }
  return picked;
}

Centroids init_centroids(std::span<const ParamVector> reps, int k, CentroidInit strategy, std::uint64_t seed) {
  Centroids out;
  for (auto i : init_centroid_indices(reps, k, strategy, seed)) out.push_back(reps[i]);
  return out;
}

}  // namespace cfl
