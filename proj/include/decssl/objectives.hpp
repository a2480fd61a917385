#pragma once

#include <optional>
#include <vector>

#include "decssl/rng.hpp"
#include "decssl/types.hpp"

namespace decssl {

/// Cosine distance D(a,b) = -<a,b>/(|a||b|), computed as -dot/sqrt(aa*bb) so
/// identical nonzero vectors give exactly -1. Rejects zero-norm input.
double cosine_distance(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

/// Gradient of cosine_distance with respect to its first argument.
Vector cosine_distance_grad(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

/// Temperature-scaled contrastive loss over cosine distances, numerically
/// stabilized by subtracting the max logit.
double infonce_loss(const Vector& anchor, const Vector& positive,
                    const std::vector<Vector>& negatives, double temperature);

/// Cosine distance between prediction and (stop-gradient) target.
double simsiam_loss(const Vector& prediction, const Vector& target);

/// Exact expectation of the linear SSL objective over standard-normal
/// augmentations: -trace(w^T w X) + 0.5 ||w^T w||_F^2.
double linear_ssl_loss_expected(const LinearEncoder& encoder, const Matrix& covariance);

/// Sampled form: fresh xi, xi' per column of batch; mean of
/// -(w(x+xi))^T (w(x+xi')) plus the regularizer.
double linear_ssl_loss_stochastic(const LinearEncoder& encoder, const Matrix& batch, Rng& rng);

/// Gradient of linear_ssl_loss_expected in w: -2 w X + 2 w w^T w.
Matrix linear_ssl_gradient(const LinearEncoder& encoder, const Matrix& covariance);

/// ||X - w^T w||_F^2; satisfies 2 L_expected(w,X) = reconstruction(w,X) - ||X||_F^2.
double reconstruction_objective(const LinearEncoder& encoder, const Matrix& covariance);

/// Min-norm multiclass hard-margin solution.
struct MarginSolution {
  Matrix w_tilde;                 // c x d, row y is class y's weight vector
  double margin_violation = 0.0;  // max over constraints of max(0, 1 - margin)
  double objective = 0.0;         // sum of squared row norms
};

/// Solves min sum_i ||w_i||^2 subject to <w_y - w_y', x> >= 1 for every
/// sample (x,y) and every other class y' in [0, num_classes). Constraints are
/// generated only for observed samples; absent classes appear only as y'.
/// Dual coordinate ascent with a final feasibility rescale; throws
/// InfeasibleOrUnconverged when the margin cannot be met within the sweep cap.
MarginSolution margin_problem_solve(const LocalDataset& dataset, int num_classes,
                                    double tolerance, int max_sweeps = 20000);

/// Balanced two-layer factorization of a linear classifier.
struct FactorPair {
  Matrix u;  // m x d
  Matrix v;  // c x m
};

/// Via SVD w = U S V^T: u = S^{1/2} V^T padded with zero rows to m, and
/// v = U S^{1/2} padded with zero columns. Then v u = w and
/// ||u||_F^2 = ||v||_F^2 = nuclear norm of w. Rejects m < rank(w).
FactorPair min_norm_factorize(const Matrix& w_tilde, int m);

/// sum_i <u_i, e_j>^2 = (u^T u)_jj; invariant under orthogonal left-rotation of u.
double feature_correlation(const FactorPair& pair, int direction_index);

// ---- batch training kernels (hand-derived gradients, shared by the trainers) ----

/// Stochastic linear SSL on paired augmented views (columns of a and b):
/// mean_i -(w a_i)^T (w b_i) + 0.5 ||w^T w||_F^2. Fills grad when non-null.
double linear_ssl_batch(const Matrix& w, const Matrix& a, const Matrix& b, Matrix* grad);

/// InfoNCE over a linear encoder: anchor views w a_i against positive views
/// w b_i, with the other positives as negatives.
double infonce_batch(const Matrix& w, const Matrix& a, const Matrix& b, double temperature,
                     Matrix* grad);

/// SimSiam over a linear encoder with optional predictor head: predictions
/// g(w a_i) against stop-gradient targets w b_i. grad_g filled only when a
/// predictor is present.
double simsiam_batch(const Matrix& w, const std::optional<Matrix>& predictor, const Matrix& a,
                     const Matrix& b, Matrix* grad_w, Matrix* grad_g);

/// Multinomial logistic regression with logits w x (m = number of classes).
double softmax_ce_batch(const Matrix& w, const Matrix& x, const std::vector<int>& labels,
                        Matrix* grad);

}  // namespace decssl
