#include <doctest.h>

#include <cmath>

#include "decssl/datagen.hpp"
#include "decssl/objectives.hpp"
#include "decssl/spectral.hpp"
#include "oracles.hpp"

using namespace decssl;

TEST_SUITE("spectral") {

TEST_CASE("empirical covariance: hand cases") {
  LocalDataset ds;
  ds.samples.resize(3, 1);
  ds.samples.col(0) << 1.0, 2.0, -1.0;
  ds.labels = {0};
  const Matrix cov = empirical_covariance(ds);
  CHECK((cov - ds.samples.col(0) * ds.samples.col(0).transpose()).norm() <= 1e-14);

  LocalDataset pm;
  pm.samples.resize(4, 2);
  pm.samples.setZero();
  pm.samples(0, 0) = 1.0;
  pm.samples(0, 1) = -1.0;
  pm.labels = {0, 1};
  Matrix expected = Matrix::Zero(4, 4);
  expected(0, 0) = 1.0;
  CHECK((empirical_covariance(pm) - expected).norm() <= 1e-14);

  LocalDataset empty;
  empty.samples.resize(3, 0);
  CHECK_THROWS_AS(empirical_covariance(empty), std::invalid_argument);
}

TEST_CASE("empirical covariance: exact-count evaluation of the noise-free generator") {
  TheoryGenConfig cfg;
  cfg.d = 6;
  cfg.K = 2;
  cfg.majority_count = 30;
  cfg.minority_count = 4;
  cfg.mu_noise = 0.0;
  cfg.seed = 17;
  const double tau = cfg.resolved_tau_scale();
  const auto sources = generate_theory_dataset(cfg);
  const auto& ds = sources[0];  // anchors +-e_0, coin spill on e_1, minority +e_1
  const Matrix cov = empirical_covariance(ds);

  // Oracle: recount the generated coordinates directly.
  const double n = static_cast<double>(ds.size());
  long q_count = 0;
  double cross = 0.0;
  long minority = 0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const int label = ds.labels[static_cast<std::size_t>(i)];
    if (label == 0 || label == 1) {
      if (ds.samples(1, i) != 0.0) {
        ++q_count;
        cross += ds.samples(0, i) * ds.samples(1, i);
      }
    } else {
      ++minority;
    }
  }
  CHECK(cov(0, 0) == doctest::Approx(2.0 * cfg.majority_count / n).epsilon(1e-12));
  CHECK(cov(1, 1) ==
        doctest::Approx((q_count * tau * tau + minority) / n).epsilon(1e-12));
  CHECK(cov(0, 1) == doctest::Approx(cross / n).epsilon(1e-12));
  CHECK(cov.bottomRightCorner(4, 4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("symmetric eig: diagonal ordering and sign convention") {
  Matrix x = Vector::Zero(3).asDiagonal();
  x(0, 0) = 3.0;
  x(1, 1) = 1.0;
  x(2, 2) = 2.0;
  const EigenSystem sys = symmetric_eig(x);
  CHECK(sys.eigenvalues[0] == doctest::Approx(3.0));
  CHECK(sys.eigenvalues[1] == doctest::Approx(2.0));
  CHECK(sys.eigenvalues[2] == doctest::Approx(1.0));
  // Signed basis vectors with positive leading entries.
  CHECK(sys.eigenvectors(0, 0) == doctest::Approx(1.0));
  CHECK(sys.eigenvectors(2, 1) == doctest::Approx(1.0));
  CHECK(sys.eigenvectors(1, 2) == doctest::Approx(1.0));
}

TEST_CASE("symmetric eig: reconstruction and orthonormality on random instances") {
  Rng rng(33);
  for (int d : {5, 32, 128, 512}) {
    const Matrix x = oracles::random_psd(d, rng);
    const EigenSystem sys = symmetric_eig(x);
    const Matrix recon =
        sys.eigenvectors * sys.eigenvalues.asDiagonal() * sys.eigenvectors.transpose();
    CHECK((recon - x).norm() <= 1e-8 * x.norm());
    CHECK((sys.eigenvectors.transpose() * sys.eigenvectors - Matrix::Identity(d, d))
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
    for (Eigen::Index i = 1; i < d; ++i) CHECK(sys.eigenvalues[i - 1] >= sys.eigenvalues[i]);
  }
}

TEST_CASE("symmetric eig: spectral shift and symmetry rejection") {
  Rng rng(8);
  const Matrix x = oracles::random_psd(6, rng);
  const EigenSystem base = symmetric_eig(x);
  const EigenSystem shifted = symmetric_eig(x + 2.5 * Matrix::Identity(6, 6));
  for (int i = 0; i < 6; ++i)
    CHECK(shifted.eigenvalues[i] == doctest::Approx(base.eigenvalues[i] + 2.5).epsilon(1e-10));

  Matrix bad = x;
  bad(0, 1) += 1e-6;
  CHECK_THROWS_AS(symmetric_eig(bad), std::invalid_argument);
}

TEST_CASE("ssl minimizer oracle: diagonal cases") {
  Matrix x = Matrix::Zero(3, 3);
  x(0, 0) = 2.0;
  x(1, 1) = 1.0;
  const LinearEncoder w1 = ssl_minimizer_oracle(x, 1);
  CHECK(w1.weight(0, 0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(std::abs(w1.weight(0, 1)) <= 1e-12);
  CHECK(reconstruction_objective(w1, x) == doctest::Approx(1.0).epsilon(1e-10));

  const LinearEncoder wfull = ssl_minimizer_oracle(x, 3);
  CHECK(reconstruction_objective(wfull, x) <= 1e-16);

  CHECK_THROWS_AS(ssl_minimizer_oracle(x, 4), std::invalid_argument);
  Matrix neg = x;
  neg(2, 2) = -0.5;
  CHECK_THROWS_AS(ssl_minimizer_oracle(neg, 2), std::invalid_argument);
}

TEST_CASE("ssl minimizer oracle: beats random candidates and is stationary") {
  Rng rng(101);
  const Matrix x = oracles::random_psd(10, rng);
  const int m = 3;
  const LinearEncoder star = ssl_minimizer_oracle(x, m);
  const double best = reconstruction_objective(star, x);
  CHECK(linear_ssl_gradient(star, x).norm() <= 1e-8);
  for (int trial = 0; trial < 10000; ++trial) {
    LinearEncoder cand;
    cand.weight = oracles::random_matrix(m, 10, rng);
    CHECK(reconstruction_objective(cand, x) >= best - 1e-9);
  }
}

TEST_CASE("covariance top eigs: gram route matches the dense covariance route") {
  Rng rng(55);
  // n < d exercises the Gram path.
  const Matrix samples = oracles::random_matrix(40, 12, rng);
  LocalDataset ds;
  ds.samples = samples;
  ds.labels.assign(12, 0);
  const TopEigs top = covariance_top_eigs(samples, 5);
  const EigenSystem dense = symmetric_eig(empirical_covariance(ds));
  for (int i = 0; i < 5; ++i) {
    CHECK(top.eigenvalues[i] == doctest::Approx(dense.eigenvalues[i]).epsilon(1e-9));
    const double align = std::abs(top.eigenvectors.col(i).dot(dense.eigenvectors.col(i)));
    CHECK(align == doctest::Approx(1.0).epsilon(1e-8));
  }
  CHECK((top.eigenvectors.transpose() * top.eigenvectors - Matrix::Identity(5, 5))
            .cwiseAbs()
            .maxCoeff() <= 1e-10);
}

TEST_CASE("representability: basis subspaces and sums") {
  Matrix w = Matrix::Zero(2, 5);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  const RepresentabilityVector r = representability(w);
  CHECK(r.subspace_dim == 2);
  CHECK(r.values[0] == doctest::Approx(1.0));
  CHECK(r.values[1] == doctest::Approx(1.0));
  CHECK(r.values[2] == doctest::Approx(0.0));
  CHECK(r.values.sum() == doctest::Approx(2.0).epsilon(1e-8));

  const RepresentabilityVector full = representability(Matrix::Identity(4, 4));
  CHECK(full.subspace_dim == 4);
  CHECK((full.values.array() - 1.0).abs().maxCoeff() <= 1e-10);

  const RepresentabilityVector zero = representability(Matrix::Zero(3, 6));
  CHECK(zero.subspace_dim == 0);
  CHECK(zero.values.norm() == 0.0);
}

TEST_CASE("representability: rank-1 span equals squared coordinates") {
  Rng rng(77);
  Vector v = oracles::random_matrix(9, 1, rng).col(0);
  v /= v.norm();
  const RepresentabilityVector r = representability(Matrix(v.transpose()));
  CHECK(r.subspace_dim == 1);
  for (Eigen::Index i = 0; i < 9; ++i)
    CHECK(r.values[i] == doctest::Approx(v[i] * v[i]).epsilon(1e-10));
  CHECK(r.values.sum() == doctest::Approx(1.0).epsilon(1e-10));

  const auto picked = representability_at(r, {0, 3, 8});
  CHECK(picked.size() == 3);
  CHECK(picked[1] == r.values[3]);
  CHECK_THROWS_AS(representability_at(r, {9}), std::out_of_range);
}

TEST_CASE("representability: invariant under orthogonal row remixing; values in [0,1]") {
  Rng rng(301);
  const Matrix w = oracles::random_matrix(4, 11, rng);
  const Matrix q = oracles::random_orthogonal(4, rng);
  const RepresentabilityVector a = representability(w);
  const RepresentabilityVector b = representability(Matrix(q * w));
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(a.values.minCoeff() >= -1e-12);
  CHECK(a.values.maxCoeff() <= 1.0 + 1e-12);
  CHECK(a.values.sum() == doctest::Approx(a.subspace_dim).epsilon(1e-8));
}

TEST_CASE("principal angle: closed-form cases") {
  Matrix e0 = Matrix::Zero(1, 4);
  e0(0, 0) = 1.0;
  Matrix e1 = Matrix::Zero(1, 4);
  e1(0, 1) = 1.0;
  CHECK(principal_angle(e0, e0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(principal_angle(e0, e1) == doctest::Approx(M_PI / 2).epsilon(1e-12));
  for (double theta : {0.3, 0.7, 1.2}) {
    Matrix rotated = Matrix::Zero(1, 4);
    rotated(0, 0) = std::cos(theta);
    rotated(0, 1) = std::sin(theta);
    CHECK(principal_angle(e0, rotated) == doctest::Approx(theta).epsilon(1e-10));
    CHECK(principal_angle(rotated, e0) == doctest::Approx(theta).epsilon(1e-10));
  }
}

TEST_CASE("principal angle: dimension mismatch is maximal; zero span rejected") {
  Matrix plane = Matrix::Zero(2, 4);
  plane(0, 0) = 1.0;
  plane(1, 1) = 1.0;
  Matrix line = Matrix::Zero(1, 4);
  line(0, 0) = 1.0;
  CHECK(principal_angle(plane, line) == doctest::Approx(M_PI / 2));
  CHECK(principal_angle(line, plane) == doctest::Approx(M_PI / 2));
  CHECK_THROWS_AS(principal_angle(Matrix::Zero(2, 4), line), std::invalid_argument);
}

TEST_CASE("global covariance: identities") {
  TheoryGenConfig cfg;
  cfg.d = 7;
  cfg.K = 2;
  cfg.majority_count = 12;
  cfg.minority_count = 3;
  cfg.seed = 3;
  const auto sources = generate_theory_dataset(cfg);

  SUBCASE("identical equal-size datasets reproduce the local covariance") {
    LocalDataset copy = sources[0];
    copy.source_id = 1;
    const Matrix global = global_covariance({sources[0], copy});
    CHECK((global - empirical_covariance(sources[0])).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("two singletons") {
    LocalDataset a, b;
    a.samples = Matrix::Zero(4, 1);
    a.samples(0, 0) = 1.0;
    a.labels = {0};
    b.samples = Matrix::Zero(4, 1);
    b.samples(1, 0) = 1.0;
    b.labels = {1};
    b.source_id = 1;
    const Matrix global = global_covariance({a, b});
    Matrix expected = Matrix::Zero(4, 4);
    expected(0, 0) = 0.5;
    expected(1, 1) = 0.5;
    CHECK((global - expected).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("matches covariance of concatenation") {
    LocalDataset pooled;
    long total = 0;
    for (const auto& ds : sources) total += ds.size();
    pooled.samples.resize(cfg.d, total);
    Eigen::Index col = 0;
    for (const auto& ds : sources) {
      pooled.samples.middleCols(col, ds.size()) = ds.samples;
      col += ds.size();
    }
    pooled.labels.assign(static_cast<std::size_t>(total), 0);
    const Matrix a = global_covariance(sources);
    const Matrix b = empirical_covariance(pooled);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("representability of local minimizers approaches one as d and counts grow") {
  // The uniform-features claim holds in the regime where per-source sample
  // counts grow with d; with counts frozen the empirical-covariance noise
  // coupling (~ sqrt(d/n)) slowly erodes it instead. Scale counts with d.
  const int K = 2;
  const int m = 2 * K;
  std::vector<double> medians;
  for (auto [d, majority] : std::vector<std::pair<int, long>>{{64, 60}, {256, 240}}) {
    std::vector<double> mins;
    for (int seed = 0; seed < 5; ++seed) {
      TheoryGenConfig cfg;
      cfg.d = d;
      cfg.K = K;
      cfg.majority_count = majority;
      cfg.minority_count = 8;
      cfg.seed = static_cast<std::uint64_t>(900 + seed);
      const auto sources = generate_theory_dataset(cfg);
      double min_rep = 1.0;
      for (int k = 0; k < K; ++k) {
        const TopEigs top = covariance_top_eigs(sources[static_cast<std::size_t>(k)].samples, m);
        const auto rep = representability_from_basis(top.eigenvectors);
        for (int i = 0; i < K; ++i) {
          if (i == k) continue;
          min_rep = std::min(min_rep, rep.values[i]);
        }
      }
      mins.push_back(min_rep);
    }
    std::sort(mins.begin(), mins.end());
    medians.push_back(mins[mins.size() / 2]);
  }
  CHECK(medians[1] >= medians[0]);
  CHECK(medians[0] >= 0.8);
}

}  // TEST_SUITE
