#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "decssl/datagen.hpp"
#include "oracles.hpp"

using namespace decssl;

namespace {

std::vector<int> synthetic_labels(int num_classes, int per_class) {
  std::vector<int> labels;
  for (int c = 0; c < num_classes; ++c)
    for (int i = 0; i < per_class; ++i) labels.push_back(c);
  return labels;
}

void check_exact_cover(const PartitionSpec& spec, std::size_t n) {
  std::vector<bool> seen(n, false);
  std::size_t total = 0;
  for (const auto& part : spec.assignments) {
    for (std::size_t idx : part) {
      REQUIRE(idx < n);
      REQUIRE_FALSE(seen[idx]);
      seen[idx] = true;
      ++total;
    }
  }
  CHECK(total == n);
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("theory generator: noise-free single source has exact anchors") {
  TheoryGenConfig cfg;
  cfg.d = 4;
  cfg.K = 1;
  cfg.majority_count = 2;
  cfg.minority_count = 0;
  cfg.mu_noise = 0.0;
  cfg.seed = 3;
  const auto sources = generate_theory_dataset(cfg);
  REQUIRE(sources.size() == 1);
  const auto& ds = sources[0];
  REQUIRE(ds.size() == 4);
  Vector plus = Vector::Zero(4);
  plus[0] = 1.0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    if (ds.labels[static_cast<std::size_t>(i)] == 0) {
      CHECK((ds.samples.col(i) - plus).norm() == 0.0);
    } else {
      CHECK(ds.labels[static_cast<std::size_t>(i)] == 1);
      CHECK((ds.samples.col(i) + plus).norm() == 0.0);
    }
  }
  CHECK(std::count(ds.labels.begin(), ds.labels.end(), 0) == 2);
  CHECK(std::count(ds.labels.begin(), ds.labels.end(), 1) == 2);
}

TEST_CASE("theory generator: default scales follow the d^{1/5} rule") {
  TheoryGenConfig cfg;
  cfg.d = 100000;
  CHECK(cfg.resolved_tau_scale() == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(cfg.resolved_mu_noise() == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("theory generator: histograms by construction") {
  TheoryGenConfig cfg;
  cfg.d = 16;
  cfg.K = 2;
  cfg.majority_count = 50;
  cfg.minority_count = 5;
  cfg.seed = 7;
  const auto sources = generate_theory_dataset(cfg);
  REQUIRE(sources.size() == 2);
  const auto h0 = label_histogram(sources[0].labels, 4);
  const auto h1 = label_histogram(sources[1].labels, 4);
  CHECK(h0 == std::vector<long>{50, 50, 5, 0});
  CHECK(h1 == std::vector<long>{5, 0, 50, 50});
}

TEST_CASE("theory generator: zero noise keeps coordinates beyond K at zero") {
  TheoryGenConfig cfg;
  cfg.d = 12;
  cfg.K = 3;
  cfg.majority_count = 20;
  cfg.minority_count = 2;
  cfg.mu_noise = 0.0;
  cfg.seed = 11;
  for (const auto& ds : generate_theory_dataset(cfg)) {
    CHECK(ds.samples.bottomRows(cfg.d - cfg.K).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("theory generator: deterministic and validated") {
  TheoryGenConfig cfg;
  cfg.d = 8;
  cfg.K = 2;
  cfg.majority_count = 10;
  cfg.minority_count = 3;
  cfg.seed = 42;
  const auto a = generate_theory_dataset(cfg);
  const auto b = generate_theory_dataset(cfg);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK((a[k].samples.array() == b[k].samples.array()).all());
    CHECK(a[k].labels == b[k].labels);
  }
  cfg.d = 3;  // d < 2K
  CHECK_THROWS_AS(generate_theory_dataset(cfg), std::invalid_argument);
  cfg.d = 8;
  cfg.majority_count = 0;
  CHECK_THROWS_AS(generate_theory_dataset(cfg), std::invalid_argument);
}

TEST_CASE("dirichlet partition: single source takes everything") {
  const auto labels = synthetic_labels(3, 17);
  const auto spec = partition_dirichlet(labels, 1, 0.3, 5);
  REQUIRE(spec.assignments.size() == 1);
  CHECK(spec.assignments[0].size() == labels.size());
  check_exact_cover(spec, labels.size());
}

TEST_CASE("dirichlet partition: huge alpha concentrates near uniform") {
  const auto labels = synthetic_labels(10, 1000);
  const auto spec = partition_dirichlet(labels, 5, 1e6, 123);
  check_exact_cover(spec, labels.size());
  for (const auto& hist : spec.label_histograms) {
    for (long count : hist) {
      CHECK(std::abs(count - 200L) <= 20);  // within 2% of the 1000-sample class
    }
  }
}

TEST_CASE("dirichlet partition: tiny alpha concentrates classes on single sources") {
  const auto labels = synthetic_labels(10, 500);
  const auto spec = partition_dirichlet(labels, 5, 0.01, 77);
  check_exact_cover(spec, labels.size());
  // Each class lands almost entirely on one source, so a source holds a
  // couple of whole classes (10 classes over 5 sources averages two each).
  double effective_classes = 0.0;
  double mean_max_share = 0.0;
  for (int c = 0; c < 10; ++c) {
    long best = 0;
    for (const auto& hist : spec.label_histograms) best = std::max(best, hist[c]);
    mean_max_share += static_cast<double>(best) / 500.0;
  }
  CHECK(mean_max_share / 10.0 >= 0.9);
  for (const auto& hist : spec.label_histograms) {
    const long total = std::accumulate(hist.begin(), hist.end(), 0L);
    if (total == 0) continue;
    for (long count : hist)
      if (static_cast<double>(count) / total > 0.05) effective_classes += 1.0;
  }
  effective_classes /= 5.0;
  CHECK(effective_classes >= 1.0);
  CHECK(effective_classes <= 3.5);
}

TEST_CASE("dirichlet proportions sum to one before rounding") {
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = rng.dirichlet(0.05 + rng.uniform() * 3.0, 7);
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("skewness partition: beta endpoints") {
  const auto labels = synthetic_labels(10, 200);
  SUBCASE("beta=0 gives exclusive classes") {
    const auto spec = partition_skewness(labels, 5, 0.0, 3);
    check_exact_cover(spec, labels.size());
    for (const auto& hist : spec.label_histograms) {
      int nonzero = 0;
      for (long c : hist)
        if (c > 0) ++nonzero;
      CHECK(nonzero == 2);
    }
  }
  SUBCASE("beta=1 is near-uniform per source") {
    const auto spec = partition_skewness(labels, 5, 1.0, 3);
    check_exact_cover(spec, labels.size());
    for (const auto& hist : spec.label_histograms) {
      const long total = std::accumulate(hist.begin(), hist.end(), 0L);
      for (long c : hist) {
        const double prop = static_cast<double>(c) / total;
        CHECK(prop == doctest::Approx(0.1).epsilon(0.5));
      }
    }
  }
  SUBCASE("rejects beta outside [0,1]") {
    CHECK_THROWS_AS(partition_skewness(labels, 5, -0.1, 3), std::invalid_argument);
    CHECK_THROWS_AS(partition_skewness(labels, 5, 1.1, 3), std::invalid_argument);
  }
}

TEST_CASE("skewness partition: beta=0.5 expectation over seeds") {
  // 4 classes x 100, K=2: each source owns 2 classes. Expected per-source
  // count for an owned class is 50 (exclusive) + 25 (uniform half) = 75, and
  // 25 for a non-owned class.
  const auto labels = synthetic_labels(4, 100);
  double owned = 0.0;
  double other = 0.0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    const auto spec = partition_skewness(labels, 2, 0.5, 1000 + s);
    check_exact_cover(spec, labels.size());
    owned += spec.label_histograms[0][0] + spec.label_histograms[0][1] +
             spec.label_histograms[1][2] + spec.label_histograms[1][3];
    other += spec.label_histograms[0][2] + spec.label_histograms[0][3] +
             spec.label_histograms[1][0] + spec.label_histograms[1][1];
  }
  owned /= 4.0 * seeds;
  other /= 4.0 * seeds;
  CHECK(owned == doctest::Approx(75.0).epsilon(0.06));
  CHECK(other == doctest::Approx(25.0).epsilon(0.12));
}

TEST_CASE("feature clusters: trivial single cluster") {
  std::vector<Vector> feats;
  Rng rng(4);
  for (int i = 0; i < 20; ++i) feats.push_back(oracles::random_matrix(6, 1, rng).col(0));
  const auto spec = partition_feature_clusters(feats, 1, 2);
  REQUIRE(spec.assignments.size() == 1);
  CHECK(spec.assignments[0].size() == feats.size());
}

TEST_CASE("feature clusters: separated blobs recover membership") {
  Rng rng(15);
  std::vector<Vector> feats;
  std::vector<int> truth;
  for (int i = 0; i < 60; ++i) {
    Vector v = oracles::random_matrix(5, 1, rng, 0.3).col(0);
    if (i % 2 == 0) {
      v[0] += 10.0;
      truth.push_back(0);
    } else {
      v[0] -= 10.0;
      truth.push_back(1);
    }
    feats.push_back(v);
  }
  const auto spec = partition_feature_clusters(feats, 2, 8);
  check_exact_cover(spec, feats.size());
  // Oracle: nearest true blob center. Clusters must match blob membership
  // exactly (up to cluster relabeling).
  std::set<std::size_t> cluster0(spec.assignments[0].begin(), spec.assignments[0].end());
  std::set<std::size_t> blob0, blob1;
  for (std::size_t i = 0; i < truth.size(); ++i) (truth[i] == 0 ? blob0 : blob1).insert(i);
  CHECK((cluster0 == blob0 || cluster0 == blob1));
}

TEST_CASE("feature clusters: partition invariant under orthogonal pre-rotation") {
  Rng rng(21);
  std::vector<Vector> feats;
  for (int i = 0; i < 40; ++i) {
    Vector v = oracles::random_matrix(8, 1, rng).col(0);
    v[i % 3] += 6.0 * (i % 3);
    feats.push_back(v);
  }
  const Matrix q = oracles::random_orthogonal(8, rng);
  std::vector<Vector> rotated;
  for (const auto& v : feats) rotated.push_back(q * v);

  const auto a = partition_feature_clusters(feats, 3, 99);
  const auto b = partition_feature_clusters(rotated, 3, 99);
  auto as_sets = [](const PartitionSpec& s) {
    std::set<std::set<std::size_t>> out;
    for (const auto& part : s.assignments) out.insert({part.begin(), part.end()});
    return out;
  };
  CHECK(as_sets(a) == as_sets(b));
}

TEST_CASE("feature clusters: high-dimensional features go through the PCA reduction") {
  // 48-dim features exercise the projection to 30 components; blob
  // membership must survive the reduction.
  Rng rng(51);
  std::vector<Vector> feats;
  std::vector<int> truth;
  for (int i = 0; i < 50; ++i) {
    Vector v = oracles::random_matrix(48, 1, rng, 0.4).col(0);
    if (i % 2 == 0) {
      v.head(8).array() += 6.0;
      truth.push_back(0);
    } else {
      v.head(8).array() -= 6.0;
      truth.push_back(1);
    }
    feats.push_back(v);
  }
  const auto spec = partition_feature_clusters(feats, 2, 77);
  check_exact_cover(spec, feats.size());
  std::set<std::size_t> cluster0(spec.assignments[0].begin(), spec.assignments[0].end());
  std::set<std::size_t> blob0, blob1;
  for (std::size_t i = 0; i < truth.size(); ++i) (truth[i] == 0 ? blob0 : blob1).insert(i);
  CHECK((cluster0 == blob0 || cluster0 == blob1));
}

TEST_CASE("feature clusters: rejects more clusters than samples") {
  std::vector<Vector> feats{Vector::Ones(3), Vector::Zero(3)};
  CHECK_THROWS_AS(partition_feature_clusters(feats, 3, 0), std::invalid_argument);
}

TEST_CASE("input shift: deterministic, isometric, distinct across sources") {
  TheoryGenConfig cfg;
  cfg.d = 10;
  cfg.K = 2;
  cfg.majority_count = 15;
  cfg.minority_count = 2;
  cfg.seed = 5;
  const auto sources = generate_theory_dataset(cfg);
  const auto shifted = apply_input_shift(sources, 31);
  const auto shifted2 = apply_input_shift(sources, 31);
  for (std::size_t k = 0; k < sources.size(); ++k) {
    CHECK((shifted[k].samples.array() == shifted2[k].samples.array()).all());
    CHECK(shifted[k].labels == sources[k].labels);
    for (Eigen::Index i = 0; i < sources[k].size(); ++i) {
      CHECK(shifted[k].samples.col(i).norm() ==
            doctest::Approx(sources[k].samples.col(i).norm()).epsilon(1e-9));
    }
  }
  // Distinct transforms: applying source 0's data through both pipelines
  // cannot coincide (compare the shift of identical inputs across ids).
  LocalDataset same = sources[0];
  LocalDataset copy = sources[0];
  copy.source_id = 1;
  const auto both = apply_input_shift({same, copy}, 31);
  CHECK((both[0].samples - both[1].samples).norm() > 1e-6);
}

TEST_CASE("heterogeneity emd: endpoints and hand value") {
  const auto labels = synthetic_labels(2, 10);
  SUBCASE("identical local and global histograms give zero") {
    PartitionSpec manual;
    manual.assignments = {{0, 1, 2, 3, 4, 10, 11, 12, 13, 14},
                          {5, 6, 7, 8, 9, 15, 16, 17, 18, 19}};
    const auto m = manual_partition(manual.assignments, labels);
    CHECK(heterogeneity_emd(m, label_histogram(labels)) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("fully split two-class case gives 0.5") {
    PartitionSpec manual;
    manual.assignments = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9},
                          {10, 11, 12, 13, 14, 15, 16, 17, 18, 19}};
    const auto m = manual_partition(manual.assignments, labels);
    CHECK(heterogeneity_emd(m, label_histogram(labels)) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("rejects empty sources") {
    PartitionSpec manual;
    std::vector<std::vector<std::size_t>> assignments{{}, {}};
    for (std::size_t i = 0; i < labels.size(); ++i) assignments[0].push_back(i);
    const auto m = manual_partition(assignments, labels);
    CHECK_THROWS_AS(heterogeneity_emd(m, label_histogram(labels)), std::invalid_argument);
  }
}

TEST_CASE("heterogeneity emd: monotone in skewness beta") {
  const auto labels = synthetic_labels(10, 300);
  const auto global = label_histogram(labels);
  double prev = 2.0;
  for (double beta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto spec = partition_skewness(labels, 5, beta, 2024);
    const double emd = heterogeneity_emd(spec, global);
    CHECK(emd >= 0.0);
    CHECK(emd <= 1.0);
    CHECK(emd < prev);
    prev = emd;
  }
}

TEST_CASE("partitions form exact covers across schemes and seeds") {
  const auto labels = synthetic_labels(7, 53);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    check_exact_cover(partition_dirichlet(labels, 4, 0.2, seed), labels.size());
    check_exact_cover(partition_skewness(labels, 4, 0.3, seed), labels.size());
  }
  Rng rng(6);
  std::vector<Vector> feats;
  for (std::size_t i = 0; i < labels.size(); ++i)
    feats.push_back(oracles::random_matrix(4, 1, rng).col(0));
  for (std::uint64_t seed : {1ull, 2ull}) {
    check_exact_cover(partition_feature_clusters(feats, 4, seed), labels.size());
  }
}

TEST_CASE("partitions are deterministic given seed") {
  const auto labels = synthetic_labels(6, 40);
  const auto a = partition_dirichlet(labels, 3, 0.7, 91);
  const auto b = partition_dirichlet(labels, 3, 0.7, 91);
  CHECK(a.assignments == b.assignments);
  const auto c = partition_skewness(labels, 3, 0.4, 91);
  const auto d = partition_skewness(labels, 3, 0.4, 91);
  CHECK(c.assignments == d.assignments);
}

}  // TEST_SUITE
