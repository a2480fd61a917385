#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "decssl/rng.hpp"
#include "decssl/types.hpp"

namespace decssl {

/// Configuration for the synthetic heterogeneous generator.
///
/// Source k (of K) holds two majority classes 2k and 2k+1 anchored at +e_k and
/// -e_k with Bernoulli tau-scaled spill onto the other e_i, plus a small
/// minority sample of class 2i (i != k) near +e_i. Classes 2i+1 (i != k) are
/// absent from source k. tau_scale and mu_noise default to d^{1/5} and
/// d^{-1/5} when unset.
struct TheoryGenConfig {
  int d = 64;
  int K = 2;
  long majority_count = 100;
  long minority_count = 10;
  std::optional<double> tau_scale;  // default d^{1/5}
  std::optional<double> mu_noise;   // default d^{-1/5}
  std::uint64_t seed = 0;

  double resolved_tau_scale() const;
  double resolved_mu_noise() const;
  int num_classes() const { return 2 * K; }
  void validate() const;
};

std::vector<LocalDataset> generate_theory_dataset(const TheoryGenConfig& cfg);

/// Splits each class's indices across K sources with Dirichlet(alpha) proportions.
/// Residual indices after flooring go to the sources with the largest
/// fractional remainders.
PartitionSpec partition_dirichlet(const std::vector<int>& labels, int K, double alpha,
                                  std::uint64_t seed);

/// beta fraction of indices is dealt uniformly at random across sources; the
/// rest goes exclusively to the source owning the sample's class partition
/// (floor(N/K) classes per source, remainder classes round-robin).
PartitionSpec partition_skewness(const std::vector<int>& labels, int K, double beta,
                                 std::uint64_t seed);

/// PCA to min(30, dim) components, then seeded k-means++ into K clusters;
/// each cluster becomes one source.
PartitionSpec partition_feature_clusters(const std::vector<Vector>& features, int K,
                                         std::uint64_t seed);

/// Builds a PartitionSpec from explicit per-source index lists.
PartitionSpec manual_partition(const std::vector<std::vector<std::size_t>>& assignments,
                               const std::vector<int>& labels);

/// Multiplies each source's samples by a distinct seeded random orthogonal
/// matrix; labels unchanged.
std::vector<LocalDataset> apply_input_shift(const std::vector<LocalDataset>& datasets,
                                            std::uint64_t seed);

/// Mean over sources of the earth-mover distance between the normalized local
/// and global label histograms under unit ground distance (equals total
/// variation distance). Always in [0, 1].
double heterogeneity_emd(const PartitionSpec& spec, const std::vector<long>& global_histogram);
double heterogeneity_emd(const std::vector<std::vector<long>>& local_histograms,
                         const std::vector<long>& global_histogram);

/// Class-count histogram of a label list (num_classes = max label + 1).
std::vector<long> label_histogram(const std::vector<int>& labels, int num_classes = -1);

/// Recomputes a spec's per-source histograms from labels (e.g. after
/// feature-cluster partitioning, which has no labels of its own).
void attach_labels(PartitionSpec& spec, const std::vector<int>& labels);

/// Materializes LocalDatasets from a pool of samples and a partition.
std::vector<LocalDataset> split_by_partition(const Matrix& samples, const std::vector<int>& labels,
                                             const PartitionSpec& spec);

}  // namespace decssl
