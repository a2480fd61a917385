#include "decssl/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace decssl {

namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kRankTol = 1e-10;

void fix_sign(Eigen::Ref<Matrix> vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index imax = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&imax);
    if (vectors(imax, j) < 0.0) vectors.col(j) = -vectors.col(j);
  }
}

}  // namespace

Matrix empirical_covariance(const LocalDataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("empirical_covariance: empty dataset");
  const Eigen::Index d = dataset.dim();
  Matrix cov = Matrix::Zero(d, d);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(dataset.samples,
                                                 1.0 / static_cast<double>(dataset.size()));
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  return cov;
}

Matrix global_covariance(const std::vector<LocalDataset>& datasets) {
  if (datasets.empty()) throw std::invalid_argument("global_covariance: no datasets");
  const Eigen::Index d = datasets.front().dim();
  long total = 0;
  for (const auto& ds : datasets) {
    if (ds.dim() != d) throw std::invalid_argument("global_covariance: dimension mismatch");
    total += static_cast<long>(ds.size());
  }
  if (total == 0) throw std::invalid_argument("global_covariance: empty union");
  Matrix out = Matrix::Zero(d, d);
  for (const auto& ds : datasets) {
    if (ds.empty()) continue;
    const double w = static_cast<double>(ds.size()) / static_cast<double>(total);
    out += w * empirical_covariance(ds);
  }
  return out;
}

EigenSystem symmetric_eig(const Matrix& x) {
  if (x.rows() != x.cols()) throw std::invalid_argument("symmetric_eig: matrix not square");
  const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
  if ((x - x.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale)
    throw std::invalid_argument("symmetric_eig: matrix not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(x);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("symmetric_eig: eigensolver failed to converge");

  const Eigen::Index d = x.rows();
  EigenSystem sys;
  sys.eigenvalues.resize(d);
  sys.eigenvectors.resize(d, d);
  // Eigen returns ascending order; reverse for descending. Equal eigenvalues
  // keep a stable relative order.
  for (Eigen::Index i = 0; i < d; ++i) {
    sys.eigenvalues[i] = solver.eigenvalues()[d - 1 - i];
    sys.eigenvectors.col(i) = solver.eigenvectors().col(d - 1 - i);
  }
  fix_sign(sys.eigenvectors);
  return sys;
}

LinearEncoder ssl_minimizer_oracle(const Matrix& x, int m) {
  if (m < 0 || m > x.rows()) throw std::invalid_argument("ssl_minimizer_oracle: m out of range");
  EigenSystem sys = symmetric_eig(x);
  if (sys.eigenvalues[x.rows() - 1] < -1e-8)
    throw std::invalid_argument("ssl_minimizer_oracle: covariance not PSD");
  LinearEncoder enc;
  enc.weight = Matrix::Zero(m, x.rows());
  for (int i = 0; i < m; ++i) {
    const double lambda = std::max(sys.eigenvalues[i], 0.0);
    enc.weight.row(i) = std::sqrt(lambda) * sys.eigenvectors.col(i).transpose();
  }
  return enc;
}

TopEigs covariance_top_eigs(const Matrix& samples, int m) {
  const Eigen::Index d = samples.rows();
  const Eigen::Index n = samples.cols();
  if (n == 0) throw std::invalid_argument("covariance_top_eigs: empty samples");
  if (m < 0 || m > std::min(d, n))
    throw std::invalid_argument("covariance_top_eigs: m exceeds attainable rank");

  TopEigs out;
  if (n < d) {
    // Gram route: eig of (1/n) S^T S shares the nonzero spectrum of the covariance.
    Matrix gram = Matrix::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(samples.transpose(),
                                                    1.0 / static_cast<double>(n));
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    EigenSystem sys = symmetric_eig(gram);
    out.eigenvalues = sys.eigenvalues.head(m);
    out.eigenvectors.resize(d, m);
    for (int i = 0; i < m; ++i) {
      const double lambda = std::max(sys.eigenvalues[i], 0.0);
      Vector v = samples * sys.eigenvectors.col(i);
      const double norm = v.norm();
      if (lambda <= 0.0 || norm == 0.0) {
        out.eigenvectors.col(i).setZero();
        out.eigenvalues[i] = 0.0;
      } else {
        out.eigenvectors.col(i) = v / norm;
      }
    }
    fix_sign(out.eigenvectors);
  } else {
    Matrix cov = Matrix::Zero(d, d);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(samples, 1.0 / static_cast<double>(n));
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
    EigenSystem sys = symmetric_eig(cov);
    out.eigenvalues = sys.eigenvalues.head(m);
    out.eigenvectors = sys.eigenvectors.leftCols(m);
  }
  return out;
}

RepresentabilityVector representability_from_basis(const Matrix& orthonormal_columns) {
  RepresentabilityVector r;
  r.subspace_dim = 0;
  for (Eigen::Index j = 0; j < orthonormal_columns.cols(); ++j) {
    if (orthonormal_columns.col(j).squaredNorm() > 0.0) ++r.subspace_dim;
  }
  r.values = orthonormal_columns.rowwise().squaredNorm();
  return r;
}

RepresentabilityVector representability(const Matrix& row_span) {
  const Eigen::Index d = row_span.cols();
  if (row_span.rows() == 0 || d == 0)
    throw std::invalid_argument("representability: empty matrix");
  Eigen::ColPivHouseholderQR<Matrix> qr(row_span.transpose());
  qr.setThreshold(kRankTol);
  const Eigen::Index rank = qr.rank();
  if (rank == 0) {
    RepresentabilityVector r;
    r.subspace_dim = 0;
    r.values = Vector::Zero(d);
    return r;
  }
  Matrix q = qr.householderQ() * Matrix::Identity(d, rank);
  return representability_from_basis(q);
}

RepresentabilityVector representability(const LinearEncoder& encoder) {
  return representability(encoder.weight);
}

std::vector<double> representability_at(const RepresentabilityVector& r,
                                        const std::vector<int>& directions) {
  std::vector<double> out;
  out.reserve(directions.size());
  for (int i : directions) {
    if (i < 0 || i >= r.values.size())
      throw std::out_of_range("representability_at: direction index out of range");
    out.push_back(r.values[i]);
  }
  return out;
}

namespace {

Matrix orthonormal_row_basis(const Matrix& rows) {
  Eigen::ColPivHouseholderQR<Matrix> qr(rows.transpose());
  qr.setThreshold(kRankTol);
  const Eigen::Index rank = qr.rank();
  if (rank == 0) throw std::invalid_argument("principal_angle: zero-span input");
  return qr.householderQ() * Matrix::Identity(rows.cols(), rank);
}

}  // namespace

double principal_angle(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("principal_angle: dimension mismatch");
  const Matrix qa = orthonormal_row_basis(a);
  const Matrix qb = orthonormal_row_basis(b);
  if (qa.cols() != qb.cols()) return M_PI / 2.0;  // dimension gap implies an orthogonal direction
  Eigen::JacobiSVD<Matrix> svd(qa.transpose() * qb);
  const double smin = svd.singularValues().minCoeff();
  return std::acos(std::clamp(smin, -1.0, 1.0));
}

}  // namespace decssl
