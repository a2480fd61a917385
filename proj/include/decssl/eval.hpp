#pragma once

#include <cstdint>
#include <vector>

#include "decssl/featarc.hpp"
#include "decssl/types.hpp"

namespace decssl {

struct ProbeResult {
  double top1_accuracy = 0.0;
  Vector per_class_accuracy;  // NaN for classes absent from the test split
  long num_train = 0;
  long num_test = 0;
  bool converged = false;  // gradient-norm stop fired before the epoch cap
};

/// Trains a multinomial-logistic head on frozen features z = w x by seeded
/// full-batch gradient descent (convergence: gradient norm <= 1e-6 or the
/// epoch cap) and reports top-1 accuracy on the test split.
ProbeResult linear_probe(const LinearEncoder& encoder, const LocalDataset& train,
                         const LocalDataset& test, int epochs, double learning_rate,
                         std::uint64_t seed, bool normalize_features = false);

/// Per-source probe seed used by probe_featarc, exposed so callers can
/// reproduce its per-source linear_probe calls exactly.
std::uint64_t probe_seed_for(std::uint64_t seed, int source_id);

/// Probes each source's assigned cluster model on that source's split and
/// returns the mean top-1 accuracy.
double probe_featarc(const ClusterState& state, const std::vector<LocalDataset>& train_splits,
                     const std::vector<LocalDataset>& test_splits, int epochs,
                     double learning_rate, std::uint64_t seed, bool normalize_features = false);

/// Sum over weight blocks (encoder matrix, predictor when present) of the
/// Frobenius norm of the difference.
double weight_distance(const LinearEncoder& a, const LinearEncoder& b);

/// Mean cosine distance between the two models' features over a dataset, in
/// [-1, 1]; samples with a vanishing feature on either side are skipped.
double feature_alignment_score(const LinearEncoder& a, const LinearEncoder& b,
                               const LocalDataset& dataset);

/// Deterministic per-source train/test split (seeded shuffle, last fraction
/// becomes the test split).
void split_train_test(const LocalDataset& dataset, double test_fraction, std::uint64_t seed,
                      LocalDataset& train, LocalDataset& test);

}  // namespace decssl
