#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cfl/matrix.hpp"

namespace cfl {

// Immutable labelled sample matrix. Construction validates shape and label range.
class Dataset {
 public:
  Dataset(Matrix features, std::vector<int> labels, int n_classes);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t n_features() const noexcept { return features_.cols(); }
  int n_classes() const noexcept { return n_classes_; }

  const Matrix& features() const noexcept { return features_; }
  std::span<const double> row(std::size_t i) const { return features_.row(i); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  int label(std::size_t i) const { return labels_[i]; }

 private:
  Matrix features_;
  std::vector<int> labels_;
  int n_classes_;
};

// Non-owning view of a subset of a Dataset by sample index.
struct ShardView {
  const Dataset* data = nullptr;
  std::span<const std::size_t> indices;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }
};

struct Partition {
  std::vector<std::vector<std::size_t>> client_shards;
  std::vector<int> cluster_of_client;
  std::uint64_t seed = 0;

  std::size_t n_clients() const noexcept { return client_shards.size(); }
  int n_clusters() const;

  bool operator==(const Partition&) const = default;
};

// Throws ValidationError when shards overlap, are empty, or point outside
// [0, n_samples), or when cluster ids do not line up with shards.
void validate_partition(const Partition& p, std::size_t n_samples);

struct SyntheticSpec {
  int n_clusters_true = 4;
  int clients_per_cluster = 10;
  int samples_per_client = 100;
  int n_features = 10;
  int n_classes = 4;
  // Distance scale between the cluster-wise class-conditional means. Zero
  // makes every cluster draw from the same distribution.
  double cluster_separation = 1.0;
  double noise_std = 1.0;
  // Norm of the shared class prototypes.
  double class_radius = 3.0;
  // Within a cluster, client j holds samples_per_client * (1 + (size_ratio-1) * j/(c-1)) samples.
  double size_ratio = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Shared Gaussian-mixture features with a cluster-specific relabelling of the
// mixture components plus a cluster offset of length cluster_separation.
std::pair<Dataset, Partition> generate_synthetic(const SyntheticSpec& spec);

// Two-level Dirichlet split: classes over clusters, then within each cluster
// over its m/k_true clients. Counts use largest-remainder rounding.
Partition dirichlet_partition(const Dataset& d, int m, int k_true, double alpha_cluster,
                              double alpha_client, std::uint64_t seed);

// Each cluster draws n_cluster_classes labels, each client draws
// n_client_classes of its cluster's labels; samples of a class are dealt
// round-robin over the clients holding it.
Partition nclass_partition(const Dataset& d, int m, int k_true, int n_cluster_classes,
                           int n_client_classes, std::uint64_t seed);

// Deterministic per-shard train/test split. test_fraction of each shard (at
// least one sample when the shard has two or more) goes to the test side.
struct TrainTestSplit {
  std::vector<std::vector<std::size_t>> train;
  std::vector<std::vector<std::size_t>> test;
};
TrainTestSplit split_shards(const Partition& p, double test_fraction, std::uint64_t seed);

// Per-client label histogram over n_classes.
std::vector<std::vector<std::size_t>> class_histograms(const Dataset& d,
                                                       const std::vector<std::vector<std::size_t>>& shards);

// ---- IDX ------------------------------------------------------------------

class IdxError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };

  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Big-endian IDX image/label pair. Pixels are scaled to [0,1] and flattened
// row-major. Labels determine n_classes as max(label)+1.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

}  // namespace cfl
