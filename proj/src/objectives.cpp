#include "decssl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

namespace decssl {

namespace {

void require_nonzero(double sqnorm, const char* who) {
  if (sqnorm == 0.0) throw std::invalid_argument(std::string(who) + ": zero-norm vector");
}

}  // namespace

double cosine_distance(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() == 0 || a.size() != b.size())
    throw std::invalid_argument("cosine_distance: empty or mismatched vectors");
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  require_nonzero(aa, "cosine_distance");
  require_nonzero(bb, "cosine_distance");
  return -a.dot(b) / std::sqrt(aa * bb);
}

Vector cosine_distance_grad(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  require_nonzero(aa, "cosine_distance_grad");
  require_nonzero(bb, "cosine_distance_grad");
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  const double dot = a.dot(b);
  return -b / (na * nb) + (dot / (na * aa * nb)) * a;
}

double infonce_loss(const Vector& anchor, const Vector& positive,
                    const std::vector<Vector>& negatives, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("infonce_loss: temperature must be positive");
  const double pos_logit = -cosine_distance(anchor, positive) / temperature;
  std::vector<double> logits;
  logits.reserve(negatives.size() + 1);
  logits.push_back(pos_logit);
  for (const auto& neg : negatives)
    logits.push_back(-cosine_distance(anchor, neg) / temperature);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - mx);
  return -(pos_logit - mx) + std::log(denom);
}

double simsiam_loss(const Vector& prediction, const Vector& target) {
  return cosine_distance(prediction, target);
}

namespace {

void require_covariance(const LinearEncoder& enc, const Matrix& x, const char* who) {
  if (x.rows() != x.cols()) throw std::invalid_argument(std::string(who) + ": covariance not square");
  if (x.rows() != enc.weight.cols())
    throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

}  // namespace

double linear_ssl_loss_expected(const LinearEncoder& encoder, const Matrix& covariance) {
  require_covariance(encoder, covariance, "linear_ssl_loss_expected");
  const Matrix& w = encoder.weight;
  const double tr = (w * covariance).cwiseProduct(w).sum();
  const Matrix gram = w * w.transpose();
  return -tr + 0.5 * gram.squaredNorm();
}

double linear_ssl_loss_stochastic(const LinearEncoder& encoder, const Matrix& batch, Rng& rng) {
  if (batch.cols() == 0) throw std::invalid_argument("linear_ssl_loss_stochastic: empty batch");
  if (batch.rows() != encoder.weight.cols())
    throw std::invalid_argument("linear_ssl_loss_stochastic: dimension mismatch");
  const Matrix& w = encoder.weight;
  const Eigen::Index d = batch.rows();
  double acc = 0.0;
  Vector xi(d), xi2(d);
  for (Eigen::Index i = 0; i < batch.cols(); ++i) {
    for (Eigen::Index r = 0; r < d; ++r) xi[r] = rng.normal();
    for (Eigen::Index r = 0; r < d; ++r) xi2[r] = rng.normal();
    acc -= (w * (batch.col(i) + xi)).dot(w * (batch.col(i) + xi2));
  }
  const Matrix gram = w * w.transpose();
  return acc / static_cast<double>(batch.cols()) + 0.5 * gram.squaredNorm();
}

Matrix linear_ssl_gradient(const LinearEncoder& encoder, const Matrix& covariance) {
  require_covariance(encoder, covariance, "linear_ssl_gradient");
  const Matrix& w = encoder.weight;
  return -2.0 * (w * covariance) + 2.0 * ((w * w.transpose()) * w);
}

double reconstruction_objective(const LinearEncoder& encoder, const Matrix& covariance) {
  require_covariance(encoder, covariance, "reconstruction_objective");
  const Matrix& w = encoder.weight;
  return (covariance - w.transpose() * w).squaredNorm();
}

MarginSolution margin_problem_solve(const LocalDataset& dataset, int num_classes,
                                    double tolerance, int max_sweeps) {
  dataset.validate(num_classes);
  if (dataset.empty()) throw std::invalid_argument("margin_problem_solve: empty dataset");
  if (num_classes < 2) throw std::invalid_argument("margin_problem_solve: need at least 2 classes");
  if (tolerance <= 0.0) throw std::invalid_argument("margin_problem_solve: tolerance must be positive");

  const Eigen::Index d = dataset.dim();
  const Eigen::Index n = dataset.size();
  const int c = num_classes;

  // Constraints <w_y - w_y', x_i> >= 1, one per (sample, other class).
  struct Constraint {
    Eigen::Index sample;
    int y;
    int y_other;
  };
  std::vector<Constraint> cons;
  cons.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(c - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int yp = 0; yp < c; ++yp) {
      if (yp == dataset.labels[static_cast<std::size_t>(i)]) continue;
      cons.push_back({i, dataset.labels[static_cast<std::size_t>(i)], yp});
    }
  }

  Vector sqnorm(n);
  for (Eigen::Index i = 0; i < n; ++i) sqnorm[i] = dataset.samples.col(i).squaredNorm();

  // Dual coordinate ascent on max sum(alpha) - 0.25 alpha^T G alpha with
  // alpha >= 0, where W = 0.5 sum alpha_t (e_y - e_y') x_t^T.
  Matrix w = Matrix::Zero(c, d);
  std::vector<double> alpha(cons.size(), 0.0);
  double alpha_sum = 0.0;

  auto min_margin = [&]() {
    double mm = std::numeric_limits<double>::infinity();
    for (const auto& t : cons) {
      const double margin = (w.row(t.y) - w.row(t.y_other)).dot(dataset.samples.col(t.sample));
      mm = std::min(mm, margin);
    }
    return mm;
  };

  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (std::size_t t = 0; t < cons.size(); ++t) {
      const auto& con = cons[t];
      const double g_tt = 2.0 * sqnorm[con.sample];
      if (g_tt == 0.0) continue;  // zero sample cannot meet a margin; handled by infeasibility
      const auto x = dataset.samples.col(con.sample);
      const double margin = (w.row(con.y) - w.row(con.y_other)).dot(x);
      const double delta = std::max(-alpha[t], 2.0 * (1.0 - margin) / g_tt);
      if (delta != 0.0) {
        alpha[t] += delta;
        alpha_sum += delta;
        w.row(con.y) += 0.5 * delta * x.transpose();
        w.row(con.y_other) -= 0.5 * delta * x.transpose();
      }
    }
    if ((sweep + 1) % 8 == 0 || sweep + 1 == max_sweeps) {
      const double primal = w.squaredNorm();
      const double gap = 2.0 * primal - alpha_sum;  // primal minus dual objective
      const double viol = std::max(0.0, 1.0 - min_margin());
      if (viol <= 0.5 * tolerance && gap <= 1e-7 * std::max(1.0, primal)) {
        converged = true;
        break;
      }
    }
  }
  if (!converged)
    throw InfeasibleOrUnconverged(
        "margin_problem_solve: no feasible margin within sweep cap (data may not be separable)",
        dataset.source_id);

  // Feasibility polish: scale so the worst margin is exactly 1.
  const double mm = min_margin();
  if (mm <= 0.0)
    throw InfeasibleOrUnconverged("margin_problem_solve: nonpositive margin after optimization",
                                  dataset.source_id);
  if (mm < 1.0) w /= mm;

  MarginSolution sol;
  sol.w_tilde = w;
  sol.margin_violation = std::max(0.0, 1.0 - min_margin());
  sol.objective = w.squaredNorm();
  return sol;
}

FactorPair min_norm_factorize(const Matrix& w_tilde, int m) {
  Eigen::JacobiSVD<Matrix> svd(w_tilde, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = sv.size() > 0 ? 1e-10 * std::max(1.0, sv[0]) : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++rank;
  if (m < rank) throw std::invalid_argument("min_norm_factorize: m smaller than rank");

  FactorPair pair;
  pair.u = Matrix::Zero(m, w_tilde.cols());
  pair.v = Matrix::Zero(w_tilde.rows(), m);
  for (int i = 0; i < rank; ++i) {
    const double root = std::sqrt(sv[i]);
    pair.u.row(i) = root * svd.matrixV().col(i).transpose();
    pair.v.col(i) = root * svd.matrixU().col(i);
  }
  return pair;
}

double feature_correlation(const FactorPair& pair, int direction_index) {
  if (direction_index < 0 || direction_index >= pair.u.cols())
    throw std::out_of_range("feature_correlation: direction index out of range");
  return pair.u.col(direction_index).squaredNorm();
}

// ---- batch training kernels ----

double linear_ssl_batch(const Matrix& w, const Matrix& a, const Matrix& b, Matrix* grad) {
  const double inv_b = 1.0 / static_cast<double>(a.cols());
  const Matrix za = w * a;
  const Matrix zb = w * b;
  const Matrix gram = w * w.transpose();
  const double loss = -inv_b * za.cwiseProduct(zb).sum() + 0.5 * gram.squaredNorm();
  if (grad) {
    *grad = -inv_b * (zb * a.transpose() + za * b.transpose()) + 2.0 * (gram * w);
  }
  return loss;
}

double infonce_batch(const Matrix& w, const Matrix& a, const Matrix& b, double temperature,
                     Matrix* grad) {
  if (temperature <= 0.0) throw std::invalid_argument("infonce_batch: temperature must be positive");
  const Eigen::Index n = a.cols();
  const Matrix z = w * a;  // anchors
  const Matrix t = w * b;  // positives (negatives for the other anchors)
  Vector nz = z.colwise().norm();
  Vector nt = t.colwise().norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (nz[i] == 0.0 || nt[i] == 0.0)
      throw NumericalDivergence("infonce_batch: zero feature vector");
  }

  Matrix cos = (z.transpose() * t).array().colwise() / nz.array();
  cos = cos.array().rowwise() / nt.transpose().array();
  const Matrix s = cos / temperature;

  double loss = 0.0;
  Matrix p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = s.row(i).maxCoeff();
    const Vector e = (s.row(i).array() - mx).exp();
    const double denom = e.sum();
    p.row(i) = e.transpose() / denom;
    loss += -(s(i, i) - mx) + std::log(denom);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss *= inv_n;

  if (grad) {
    Matrix coeff = p;
    coeff.diagonal().array() -= 1.0;
    coeff *= inv_n / temperature;  // dL/dS

    // dC/dZ_i and dC/dT_j terms of the cosine similarity.
    Matrix gz = Matrix::Zero(z.rows(), n);
    Matrix gt = Matrix::Zero(t.rows(), n);
    const Matrix coeff_over_nznt =
        (coeff.array().colwise() / nz.array()).rowwise() / nt.transpose().array();
    gz += t * coeff_over_nznt.transpose();
    gt += z * coeff_over_nznt;
    const Vector row_dot = (coeff.cwiseProduct(cos)).rowwise().sum();
    const Vector col_dot = (coeff.cwiseProduct(cos)).colwise().sum();
    gz -= z * (row_dot.array() / nz.array().square()).matrix().asDiagonal();
    gt -= t * (col_dot.array() / nt.array().square()).matrix().asDiagonal();

    *grad = gz * a.transpose() + gt * b.transpose();
  }
  return loss;
}

double simsiam_batch(const Matrix& w, const std::optional<Matrix>& predictor, const Matrix& a,
                     const Matrix& b, Matrix* grad_w, Matrix* grad_g) {
  const Eigen::Index n = a.cols();
  const Matrix z = w * a;
  const Matrix preds = predictor ? Matrix(*predictor * z) : z;
  const Matrix targets = w * b;  // stop-gradient

  double loss = 0.0;
  Matrix gp = Matrix::Zero(preds.rows(), n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    loss += cosine_distance(preds.col(i), targets.col(i));
    if (grad_w || grad_g)
      gp.col(i) = inv_n * cosine_distance_grad(preds.col(i), targets.col(i));
  }
  loss *= inv_n;

  if (grad_w) {
    const Matrix back = predictor ? Matrix(predictor->transpose() * gp) : gp;
    *grad_w = back * a.transpose();
  }
  if (grad_g && predictor) *grad_g = gp * z.transpose();
  return loss;
}

double softmax_ce_batch(const Matrix& w, const Matrix& x, const std::vector<int>& labels,
                        Matrix* grad) {
  const Eigen::Index n = x.cols();
  const Eigen::Index c = w.rows();
  const Matrix logits = w * x;
  double loss = 0.0;
  Matrix p(c, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw std::invalid_argument("softmax_ce_batch: label out of range");
    const double mx = logits.col(i).maxCoeff();
    const Vector e = (logits.col(i).array() - mx).exp();
    const double denom = e.sum();
    p.col(i) = e / denom;
    loss += -(logits(y, i) - mx) + std::log(denom);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) {
    for (Eigen::Index i = 0; i < n; ++i) p(labels[static_cast<std::size_t>(i)], i) -= 1.0;
    *grad = inv_n * (p * x.transpose());
  }
  return loss * inv_n;
}

}  // namespace decssl
