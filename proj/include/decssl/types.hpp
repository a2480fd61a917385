#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace decssl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One data source: samples stored one per column (d x n), integer class labels.
struct LocalDataset {
  Matrix samples;           // d x n
  std::vector<int> labels;  // size n, values in [0, num_classes)
  int source_id = 0;

  Eigen::Index dim() const { return samples.rows(); }
  Eigen::Index size() const { return samples.cols(); }
  bool empty() const { return samples.cols() == 0; }

  void validate(int num_classes = -1) const {
    if (static_cast<Eigen::Index>(labels.size()) != samples.cols())
      throw std::invalid_argument("LocalDataset: labels/samples length mismatch");
    for (int y : labels) {
      if (y < 0 || (num_classes >= 0 && y >= num_classes))
        throw std::invalid_argument("LocalDataset: label out of range");
    }
  }
};

/// Linear embedding f_w(x) = w x plus an optional square predictor head.
struct LinearEncoder {
  Matrix weight;                    // m x d
  std::optional<Matrix> predictor;  // m x m when present, identity otherwise

  Eigen::Index embed_dim() const { return weight.rows(); }
  Eigen::Index input_dim() const { return weight.cols(); }

  Vector embed(const Eigen::Ref<const Vector>& x) const { return weight * x; }
  Matrix embed_all(const Eigen::Ref<const Matrix>& xs) const { return weight * xs; }

  Vector predict(const Eigen::Ref<const Vector>& x) const {
    Vector z = weight * x;
    return predictor ? Vector(*predictor * z) : z;
  }

  void validate() const {
    if (weight.rows() < 1 || weight.cols() < 1)
      throw std::invalid_argument("LinearEncoder: weight must be at least 1x1");
    if (predictor && (predictor->rows() != weight.rows() || predictor->cols() != weight.rows()))
      throw std::invalid_argument("LinearEncoder: predictor must be square of size m");
  }
};

enum class PartitionScheme { dirichlet, skewness, feature_cluster, manual };

std::string to_string(PartitionScheme s);
PartitionScheme partition_scheme_from_string(const std::string& s);

/// Assignment of global sample indices to K sources plus per-source label histograms.
struct PartitionSpec {
  std::vector<std::vector<std::size_t>> assignments;  // per source, disjoint cover of inputs
  std::vector<std::vector<long>> label_histograms;    // per source, class counts
  PartitionScheme scheme = PartitionScheme::manual;
  double parameter = 0.0;

  int num_sources() const { return static_cast<int>(assignments.size()); }
};

/// Raised when a training loop produces a non-finite loss or weights.
struct NumericalDivergence : std::runtime_error {
  explicit NumericalDivergence(const std::string& what, int source = -1, int step = -1)
      : std::runtime_error(what), source_id(source), step(step) {}
  int source_id;
  int step;
};

/// Raised by the margin solver when no feasible point is found within the
/// iteration cap; signals non-separable data.
struct InfeasibleOrUnconverged : std::runtime_error {
  explicit InfeasibleOrUnconverged(const std::string& what, int source = -1)
      : std::runtime_error(what), source_id(source) {}
  int source_id;
};

}  // namespace decssl
