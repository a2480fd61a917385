#pragma once

#include <vector>

#include "decssl/types.hpp"

namespace decssl {

/// Full spectral decomposition, eigenvalues descending, columns orthonormal.
struct EigenSystem {
  Vector eigenvalues;   // length d, descending
  Matrix eigenvectors;  // d x d, column i pairs with eigenvalues[i]
};

/// Per-direction squared projection norms onto a learned feature subspace.
struct RepresentabilityVector {
  Vector values;        // length d, r_i in [0,1]
  int subspace_dim = 0; // sum of values equals this

  double at(Eigen::Index i) const { return values[i]; }
};

/// Uncentered second moment (1/n) sum_i x_i x_i^T.
Matrix empirical_covariance(const LocalDataset& dataset);

/// Weighted mixture sum_k (|D_k|/|D|) X_k; equals the covariance of the
/// concatenated dataset.
Matrix global_covariance(const std::vector<LocalDataset>& datasets);

/// Dense symmetric eigendecomposition with a deterministic sign convention:
/// each eigenvector's largest-magnitude entry is positive. Rejects input that
/// is not symmetric within 1e-10. Ties in eigenvalues keep a stable order.
EigenSystem symmetric_eig(const Matrix& x);

/// Exact minimizer of the linear SSL objective for covariance X: rows are
/// sqrt(lambda_i) v_i^T over the top-m eigenpairs, so w^T w is the best
/// rank-m PSD approximation of X. Eigenvalues in [-1e-8, 0) clip to zero;
/// anything more negative is rejected as non-PSD.
LinearEncoder ssl_minimizer_oracle(const Matrix& x, int m);

/// Top-m eigenpairs of the covariance (1/n) S S^T computed from the samples,
/// using the n x n Gram matrix when n < d. Matches symmetric_eig of the full
/// covariance on the nonzero spectrum.
struct TopEigs {
  Vector eigenvalues;   // length m, descending
  Matrix eigenvectors;  // d x m
};
TopEigs covariance_top_eigs(const Matrix& samples, int m);

/// Representability of the row span of a weight matrix: orthonormalizes via
/// rank-revealing QR (tolerance 1e-10) and returns r_i = ||Pi_S(e_i)||^2 for
/// every i. A zero matrix yields the zero subspace and r = 0.
RepresentabilityVector representability(const Matrix& row_span);
RepresentabilityVector representability(const LinearEncoder& encoder);

/// Representability directly from an orthonormal basis (d x s columns).
RepresentabilityVector representability_from_basis(const Matrix& orthonormal_columns);

/// Gathers r at the requested directions.
std::vector<double> representability_at(const RepresentabilityVector& r,
                                        const std::vector<int>& directions);

/// Largest principal angle in radians between the row spans of a and b.
/// Zero only for identical subspaces of equal dimension; spans of different
/// dimension are at angle pi/2 (some direction of the larger span is
/// orthogonal to the smaller).
double principal_angle(const Matrix& a, const Matrix& b);

}  // namespace decssl
