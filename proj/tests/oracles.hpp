#pragma once

// Test-only reference implementations, kept independent of the library paths
// they check.

#include <cmath>
#include <functional>
#include <vector>

#include "decssl/rng.hpp"
#include "decssl/types.hpp"

namespace oracles {

using decssl::Matrix;
using decssl::Vector;

/// Max relative error between an analytic gradient and central finite
/// differences of `f` at `w`.
inline double finite_difference_error(const std::function<double(const Matrix&)>& f,
                                      const Matrix& w, const Matrix& grad, double step = 1e-5) {
  double worst = 0.0;
  Matrix probe = w;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      probe(i, j) = w(i, j) + step;
      const double up = f(probe);
      probe(i, j) = w(i, j) - step;
      const double down = f(probe);
      probe(i, j) = w(i, j);
      const double fd = (up - down) / (2.0 * step);
      const double denom = std::max({1.0, std::abs(fd), std::abs(grad(i, j))});
      worst = std::max(worst, std::abs(fd - grad(i, j)) / denom);
    }
  }
  return worst;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, decssl::Rng& rng,
                            double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

inline Matrix random_psd(Eigen::Index d, decssl::Rng& rng) {
  const Matrix g = random_matrix(d, 2 * d, rng);
  Matrix x = g * g.transpose() / static_cast<double>(2 * d);
  return 0.5 * (x + x.transpose());
}

inline Matrix random_orthogonal(Eigen::Index d, decssl::Rng& rng) {
  const Matrix g = random_matrix(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

/// Reference min-norm margin solver: squared-hinge penalty with geometrically
/// increasing weight, projected-gradient descent with restarts, and a final
/// feasibility rescale. Independent of the library's dual coordinate ascent.
inline Matrix penalty_margin_solver(const decssl::LocalDataset& ds, int num_classes,
                                    int outer_iters = 60, int inner_iters = 4000) {
  const Eigen::Index d = ds.dim();
  const Eigen::Index n = ds.size();
  Matrix w = Matrix::Zero(num_classes, d);

  auto min_margin = [&](const Matrix& weights) {
    double mm = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = ds.labels[static_cast<std::size_t>(i)];
      for (int yp = 0; yp < num_classes; ++yp) {
        if (yp == y) continue;
        mm = std::min(mm, (weights.row(y) - weights.row(yp)).dot(ds.samples.col(i)));
      }
    }
    return mm;
  };

  double rho = 1.0;
  for (int outer = 0; outer < outer_iters; ++outer) {
    double lr = 0.5 / (2.0 + 2.0 * rho * ds.samples.colwise().squaredNorm().maxCoeff() *
                                 static_cast<double>(num_classes));
    Matrix best = w;
    double best_val = std::numeric_limits<double>::infinity();
    for (int inner = 0; inner < inner_iters; ++inner) {
      Matrix grad = 2.0 * w;
      double val = w.squaredNorm();
      for (Eigen::Index i = 0; i < n; ++i) {
        const int y = ds.labels[static_cast<std::size_t>(i)];
        const auto x = ds.samples.col(i);
        for (int yp = 0; yp < num_classes; ++yp) {
          if (yp == y) continue;
          const double slack = 1.0 - (w.row(y) - w.row(yp)).dot(x);
          if (slack > 0.0) {
            val += rho * slack * slack;
            grad.row(y) -= 2.0 * rho * slack * x.transpose();
            grad.row(yp) += 2.0 * rho * slack * x.transpose();
          }
        }
      }
      if (val < best_val) {
        best_val = val;
        best = w;
      }
      w -= lr * grad;
    }
    w = best;
    if (1.0 - min_margin(w) <= 1e-9) break;
    rho *= 2.0;
  }
  const double mm = min_margin(w);
  if (mm > 0.0 && mm < 1.0) w /= mm;
  return w;
}

}  // namespace oracles
