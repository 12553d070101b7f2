#include "cfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "cfl/errors.hpp"
#include "cfl/random.hpp"

namespace cfl {

Dataset::Dataset(Matrix features, std::vector<int> labels, int n_classes)
    : features_(std::move(features)), labels_(std::move(labels)), n_classes_(n_classes) {
  if (labels_.empty()) throw ValidationError("dataset must contain at least one sample");
  if (features_.rows() != labels_.size())
    throw ShapeError("feature rows (" + std::to_string(features_.rows()) +
                     ") do not match label count (" + std::to_string(labels_.size()) + ")");
  if (n_classes_ < 1) throw ValidationError("n_classes must be >= 1");
  for (int y : labels_) {
    if (y < 0 || y >= n_classes_)
      throw ValidationError("label " + std::to_string(y) + " outside [0, " + std::to_string(n_classes_) + ")");
  }
}

int Partition::n_clusters() const {
  int k = 0;
  for (int c : cluster_of_client) k = std::max(k, c + 1);
  return k;
}

void validate_partition(const Partition& p, std::size_t n_samples) {
  if (p.cluster_of_client.size() != p.client_shards.size())
    throw ValidationError("partition: cluster_of_client length differs from shard count");
  std::vector<char> seen(n_samples, 0);
  for (std::size_t i = 0; i < p.client_shards.size(); ++i) {
    if (p.cluster_of_client[i] < 0) throw ValidationError("partition: negative cluster id");
    const auto& shard = p.client_shards[i];
    if (shard.empty()) throw ValidationError("partition: shard " + std::to_string(i) + " is empty");
    for (auto idx : shard) {
      if (idx >= n_samples) throw ValidationError("partition: index out of range");
      if (seen[idx]) throw ValidationError("partition: shards are not disjoint");
      seen[idx] = 1;
    }
  }
}

void SyntheticSpec::validate() const {
  if (n_clusters_true < 1 || clients_per_cluster < 1 || samples_per_client < 1 || n_features < 1 ||
      n_classes < 1)
    throw ValidationError("synthetic spec: all counts must be >= 1");
  if (!(noise_std > 0.0)) throw ValidationError("synthetic spec: noise_std must be > 0");
  if (!(cluster_separation >= 0.0)) throw ValidationError("synthetic spec: cluster_separation must be >= 0");
  if (!(class_radius >= 0.0)) throw ValidationError("synthetic spec: class_radius must be >= 0");
  if (!(size_ratio >= 1.0)) throw ValidationError("synthetic spec: size_ratio must be >= 1");
}

namespace {

std::vector<double> random_direction(Rng& rng, int dim, double length) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x = x / norm * length;
  return v;
}

int client_sample_count(const SyntheticSpec& s, int j) {
  if (s.clients_per_cluster == 1) return s.samples_per_client;
  double frac = static_cast<double>(j) / (s.clients_per_cluster - 1);
  return static_cast<int>(std::lround(s.samples_per_client * (1.0 + (s.size_ratio - 1.0) * frac)));
}

}  // namespace

std::pair<Dataset, Partition> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int C = spec.n_classes;
  const int K = spec.n_clusters_true;

  std::vector<std::vector<double>> prototypes;
  for (int c = 0; c < C; ++c) prototypes.push_back(random_direction(rng, spec.n_features, spec.class_radius));

  // Component -> label map per cluster. Cluster 0 keeps the identity.
  std::vector<std::vector<int>> relabel(K);
  std::vector<std::vector<double>> offsets(K);
  const bool shifted = spec.cluster_separation > 0.0;
  for (int k = 0; k < K; ++k) {
    relabel[k].resize(C);
    std::iota(relabel[k].begin(), relabel[k].end(), 0);
    if (shifted && k > 0) {
      // Prefer a map no other cluster uses yet; give up after a few draws when C! < K.
      for (int attempt = 0; attempt < 64; ++attempt) {
        std::shuffle(relabel[k].begin(), relabel[k].end(), rng);
        bool fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && relabel[j] != relabel[k];
        if (fresh) break;
      }
    }
    offsets[k] = shifted ? random_direction(rng, spec.n_features, spec.cluster_separation)
                         : std::vector<double>(spec.n_features, 0.0);
  }

  std::size_t total = 0;
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < spec.clients_per_cluster; ++j) total += client_sample_count(spec, j);

  Matrix features(total, spec.n_features);
  std::vector<int> labels(total);
  Partition part;
  part.seed = spec.seed;

  std::uniform_int_distribution<int> pick_component(0, C - 1);
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  std::size_t row = 0;
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < spec.clients_per_cluster; ++j) {
      std::vector<std::size_t> shard;
      const int n = client_sample_count(spec, j);
      for (int s = 0; s < n; ++s, ++row) {
        const int comp = pick_component(rng);
        auto x = features.row(row);
        for (int f = 0; f < spec.n_features; ++f) x[f] = prototypes[comp][f] + offsets[k][f] + noise(rng);
        labels[row] = relabel[k][comp];
        shard.push_back(row);
      }
      part.client_shards.push_back(std::move(shard));
      part.cluster_of_client.push_back(k);
    }
  }
  return {Dataset(std::move(features), std::move(labels), C), std::move(part)};
}

namespace {

std::vector<double> sample_dirichlet(Rng& rng, double alpha, int dim) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(dim);
  double sum = 0.0;
  for (auto& x : p) {
    x = gamma(rng);
    sum += x;
  }
  if (sum <= 0.0 || !std::isfinite(sum)) {
    // Every draw underflowed (tiny alpha): all mass on one uniformly chosen coordinate.
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<int>(0, dim - 1)(rng)] = 1.0;
    return p;
  }
  for (auto& x : p) x /= sum;
  return p;
}

// Integer counts summing to n, proportional to probs; leftover units go to the
// largest fractional parts (ties to the lower index).
std::vector<std::size_t> largest_remainder(std::size_t n, const std::vector<double>& probs) {
  std::vector<std::size_t> counts(probs.size());
  std::vector<std::pair<double, std::size_t>> frac;
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    double exact = probs[j] * static_cast<double>(n);
    counts[j] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[j];
    frac.emplace_back(exact - std::floor(exact), j);
  }
  std::stable_sort(frac.begin(), frac.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) counts[frac[r % frac.size()].second]++;
  return counts;
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& d) {
  std::vector<std::vector<std::size_t>> by_class(d.n_classes());
  for (std::size_t i = 0; i < d.size(); ++i) by_class[d.label(i)].push_back(i);
  return by_class;
}

void check_client_layout(int m, int k_true) {
  if (m < 1 || k_true < 1) throw ValidationError("partition: m and k_true must be >= 1");
  if (m % k_true != 0)
    throw ValidationError("partition: m=" + std::to_string(m) + " not divisible by k_true=" +
                          std::to_string(k_true));
}

}  // namespace

Partition dirichlet_partition(const Dataset& d, int m, int k_true, double alpha_cluster,
                              double alpha_client, std::uint64_t seed) {
  check_client_layout(m, k_true);
  if (!(alpha_cluster > 0.0) || !(alpha_client > 0.0))
    throw ValidationError("dirichlet_partition: alphas must be > 0");
  auto by_class = indices_by_class(d);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < static_cast<std::size_t>(m))
      throw ValidationError("dirichlet_partition: class " + std::to_string(c) + " has fewer than m samples");
  }

  Rng rng(seed);
  const int per = m / k_true;
  Partition part;
  part.seed = seed;
  part.client_shards.resize(m);
  for (int i = 0; i < m; ++i) part.cluster_of_client.push_back(i / per);

  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto cluster_counts = largest_remainder(idx.size(), sample_dirichlet(rng, alpha_cluster, k_true));
    std::size_t cursor = 0;
    for (int k = 0; k < k_true; ++k) {
      auto client_counts = largest_remainder(cluster_counts[k], sample_dirichlet(rng, alpha_client, per));
      for (int j = 0; j < per; ++j) {
        auto& shard = part.client_shards[k * per + j];
        shard.insert(shard.end(), idx.begin() + cursor, idx.begin() + cursor + client_counts[j]);
        cursor += client_counts[j];
      }
    }
  }

  // Repair empty shards by moving one sample from the currently largest shard.
  for (;;) {
    auto empty = std::find_if(part.client_shards.begin(), part.client_shards.end(),
                              [](auto& s) { return s.empty(); });
    if (empty == part.client_shards.end()) break;
    auto largest = std::max_element(part.client_shards.begin(), part.client_shards.end(),
                                    [](auto& a, auto& b) { return a.size() < b.size(); });
    empty->push_back(largest->back());
    largest->pop_back();
  }
  for (auto& s : part.client_shards) std::sort(s.begin(), s.end());
  return part;
}

Partition nclass_partition(const Dataset& d, int m, int k_true, int n_cluster_classes, int n_client_classes,
                           std::uint64_t seed) {
  check_client_layout(m, k_true);
  if (n_client_classes < 1 || n_client_classes > n_cluster_classes)
    throw ValidationError("nclass_partition: need 1 <= n_client_classes <= n_cluster_classes");
  if (n_cluster_classes > d.n_classes())
    throw ValidationError("nclass_partition: n_cluster_classes exceeds n_classes");
  auto by_class = indices_by_class(d);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) throw ValidationError("nclass_partition: class " + std::to_string(c) + " has no samples");
  }

  Rng rng(seed);
  const int per = m / k_true;
  Partition part;
  part.seed = seed;
  part.client_shards.resize(m);

  std::vector<std::vector<int>> holders(d.n_classes());
  std::vector<int> all(d.n_classes());
  std::iota(all.begin(), all.end(), 0);
  for (int k = 0; k < k_true; ++k) {
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<int> cluster_classes(all.begin(), all.begin() + n_cluster_classes);
    for (int j = 0; j < per; ++j) {
      const int client = k * per + j;
      part.cluster_of_client.push_back(k);
      std::vector<int> mine = cluster_classes;
      std::shuffle(mine.begin(), mine.end(), rng);
      mine.resize(n_client_classes);
      for (int c : mine) holders[c].push_back(client);
    }
  }

  for (int c = 0; c < d.n_classes(); ++c) {
    auto& h = holders[c];
    if (h.empty()) continue;
    std::sort(h.begin(), h.end());
    if (by_class[c].size() < h.size())
      throw ValidationError("nclass_partition: class " + std::to_string(c) + " has fewer samples than holders");
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    for (std::size_t s = 0; s < by_class[c].size(); ++s) part.client_shards[h[s % h.size()]].push_back(by_class[c][s]);
  }
  for (auto& s : part.client_shards) std::sort(s.begin(), s.end());
  return part;
}

TrainTestSplit split_shards(const Partition& p, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ValidationError("test_fraction must lie in [0, 1)");
  TrainTestSplit out;
  for (std::size_t i = 0; i < p.client_shards.size(); ++i) {
    auto shard = p.client_shards[i];
    Rng rng(derive_seed(seed, {i}));
    std::shuffle(shard.begin(), shard.end(), rng);
    std::size_t n = shard.size();
    auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n)));
    if (test_fraction > 0.0 && n >= 2 && n_test == 0) n_test = 1;
    if (n_test >= n) n_test = n - 1;
    std::vector<std::size_t> test(shard.begin(), shard.begin() + n_test);
    std::vector<std::size_t> train(shard.begin() + n_test, shard.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    out.train.push_back(std::move(train));
    out.test.push_back(std::move(test));
  }
  return out;
}

std::vector<std::vector<std::size_t>> class_histograms(const Dataset& d,
                                                       const std::vector<std::vector<std::size_t>>& shards) {
  std::vector<std::vector<std::size_t>> h(shards.size(), std::vector<std::size_t>(d.n_classes(), 0));
  for (std::size_t i = 0; i < shards.size(); ++i)
    for (auto idx : shards[i]) h[i][d.label(idx)]++;
  return h;
}

}  // namespace cfl
