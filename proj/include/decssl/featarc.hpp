#pragma once

#include <optional>
#include <vector>

#include "decssl/fedsim.hpp"
#include "decssl/types.hpp"

namespace decssl {

/// C cluster models, K per-source local models, and the source-to-cluster map.
struct ClusterState {
  std::vector<LinearEncoder> cluster_models;  // size C
  std::vector<LinearEncoder> local_models;    // size K
  std::vector<int> assignments;               // size K, values in [0, C)
  int round = 0;

  int num_clusters() const { return static_cast<int>(cluster_models.size()); }
  int num_sources() const { return static_cast<int>(local_models.size()); }
  void validate() const;
};

enum class ClusterInit {
  shared,   // every cluster and local model starts from the common seeded init
  distinct  // clusters 1..C-1 get fresh seeded draws so assignment can split
};

struct FeatArcConfig : FedConfig {
  int num_clusters = 2;          // C
  double alignment_weight = 1.0; // lambda
  std::optional<std::vector<int>> pin_assignments;  // testing hook
  ClusterInit cluster_init = ClusterInit::shared;

  void validate_featarc(int num_sources) const;
};

/// K x C matrix of mean cosine feature distances A_{i,j} between cluster
/// model j's features and source i's local-model features on D_i. Samples
/// where either feature vanishes are skipped; a fully-skipped pair yields
/// A_{i,j} = 0 and a degenerate flag.
struct AlignmentMatrix {
  Matrix values;  // K x C, entries in [-1, 1]
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> degenerate;
};

AlignmentMatrix alignment_matrix(const ClusterState& state,
                                 const std::vector<LocalDataset>& sources);

/// Per-source argmin over clusters, ties to the lowest index; pin overrides.
std::vector<int> assign_clusters(const Matrix& alignment,
                                 const std::optional<std::vector<int>>& pin = std::nullopt);

/// Local update with feature-alignment regularization toward the frozen input
/// model: per step the flavor's SSL loss plus
/// lambda * (0.5 D(p+, z_g) + 0.5 D(p, z_g)). lambda == 0 is byte-identical to
/// local_update under a shared rng.
LinearEncoder local_update_far(const LinearEncoder& theta, const LocalDataset& dataset, int steps,
                               double learning_rate, double lambda, const UpdateOptions& opt,
                               Rng& rng);

/// One clustered round: broadcast, per-participant alignment + assignment +
/// regularized local update, then per-cluster averaging of returned models.
/// Clusters with no members this round keep their previous model;
/// non-participants keep their local models and assignments.
ClusterState featarc_round(const ClusterState& state, const std::vector<LocalDataset>& sources,
                           const FeatArcConfig& cfg, int round_index);

ClusterState init_cluster_state(const std::vector<LocalDataset>& sources, const FeatArcConfig& cfg);

struct FeatArcResult {
  TrainingTrace trace;
  ClusterState state;
};

FeatArcResult run_featarc(const std::vector<LocalDataset>& sources, const FeatArcConfig& cfg);

}  // namespace decssl
