#include "cfl/metrics.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "cfl/errors.hpp"

namespace cfl {

double micro_accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw ShapeError("micro_accuracy: length mismatch");
  if (pred.empty()) throw ValidationError("micro_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

double macro_f1(std::span<const int> pred, std::span<const int> truth, int n_classes) {
  if (pred.size() != truth.size()) throw ShapeError("macro_f1: length mismatch");
  if (n_classes < 1) throw ValidationError("macro_f1: n_classes must be >= 1");
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= n_classes || truth[i] < 0 || truth[i] >= n_classes)
      throw ValidationError("macro_f1: label outside [0, n_classes)");
    if (pred[i] == truth[i]) {
      tp[pred[i]]++;
    } else {
      fp[pred[i]]++;
      fn[truth[i]]++;
    }
  }
  double sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    // F1 = 2TP / (2TP + FP + FN); vacuous classes contribute 0.
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    if (denom > 0.0) sum += 2.0 * tp[c] / denom;
  }
  return sum / n_classes;
}

std::optional<double> clusterability_b(std::span<const ParamVector> client_grads, std::span<const double> weights) {
  if (client_grads.empty()) throw ValidationError("clusterability_b: cluster has no members");
  if (weights.size() != client_grads.size()) throw ShapeError("clusterability_b: weight count mismatch");
  ParamVector mean(client_grads.front().layout_ptr(), 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < client_grads.size(); ++i) {
    if (!(weights[i] > 0.0)) throw ValidationError("clusterability_b: weights must be positive");
    mean.axpy(weights[i], client_grads[i]);
    mass += weights[i];
  }
  mean *= 1.0 / mass;
  const double mean_norm = l2_norm(mean);
  if (mean_norm == 0.0) return std::nullopt;
  double worst = 0.0;
  for (const auto& g : client_grads) worst = std::max(worst, std::sqrt(squared_distance(mean, g)) / mean_norm);
  return worst;
}

Matrix cosine_similarity_matrix(std::span<const ParamVector> vectors) {
  const std::size_t n = vectors.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = l2_norm(vectors[i]);
    if (norms[i] == 0.0) throw ValidationError("cosine_similarity_matrix: zero vector at index " + std::to_string(i));
  }
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = dot(vectors[i], vectors[j]) / (norms[i] * norms[j]);
      s(i, j) = s(j, i) = v;
    }
  }
  return s;
}

namespace {

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ShapeError("adjusted_rand_index: length mismatch");
  if (a.empty()) throw ValidationError("adjusted_rand_index: empty input");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, n] : joint) index += choose2(n);
  for (const auto& [key, n] : rows) sum_rows += choose2(n);
  for (const auto& [key, n] : cols) sum_cols += choose2(n);
  const double expected = sum_rows * sum_cols / choose2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_rows + sum_cols);
  // Both partitions trivial in the same way (single block or all singletons).
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double objective_r(std::span<const ParamVector> cluster_models, const Assignment& assignment,
                   std::span<const ShardView> shards, const Weights& weights, const ModelSpec& spec) {
  if (assignment.size() != shards.size() || weights.size() != shards.size())
    throw ShapeError("objective_r: clients, assignment and weights disagree in length");
  double s = 0.0;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    const int k = assignment.cluster_of[i];
    if (k < 0 || static_cast<std::size_t>(k) >= cluster_models.size())
      throw ValidationError("objective_r: assignment references a missing cluster model");
    s += weights[i] * loss(cluster_models[k], spec, shards[i]);
  }
  return s / weights.total();
}

WindowStats window_stats(std::span<const double> values, std::size_t window) {
  if (window == 0 || window > values.size()) throw ValidationError("window_stats: window must lie in [1, n]");
  auto tail = values.subspan(values.size() - window);
  WindowStats w;
  w.mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(window);
  double var = 0.0;
  for (double v : tail) var += (v - w.mean) * (v - w.mean);
  w.stddev = std::sqrt(var / static_cast<double>(window));
  return w;
}

}  // namespace cfl
