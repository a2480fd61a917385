#include "decssl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace decssl {

std::string to_string(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::dirichlet: return "dirichlet";
    case PartitionScheme::skewness: return "skewness";
    case PartitionScheme::feature_cluster: return "feature-cluster";
    case PartitionScheme::manual: return "manual";
  }
  return "manual";
}

PartitionScheme partition_scheme_from_string(const std::string& s) {
  if (s == "dirichlet") return PartitionScheme::dirichlet;
  if (s == "skewness") return PartitionScheme::skewness;
  if (s == "feature-cluster") return PartitionScheme::feature_cluster;
  if (s == "manual") return PartitionScheme::manual;
  throw std::invalid_argument("unknown partition scheme: " + s);
}

double TheoryGenConfig::resolved_tau_scale() const {
  return tau_scale ? *tau_scale : std::pow(static_cast<double>(d), 0.2);
}

double TheoryGenConfig::resolved_mu_noise() const {
  return mu_noise ? *mu_noise : std::pow(static_cast<double>(d), -0.2);
}

void TheoryGenConfig::validate() const {
  if (d < 2 * K) throw std::invalid_argument("TheoryGenConfig: requires d >= 2K");
  if (K < 1) throw std::invalid_argument("TheoryGenConfig: K must be positive");
  if (majority_count <= 0) throw std::invalid_argument("TheoryGenConfig: majority_count must be positive");
  if (minority_count < 0) throw std::invalid_argument("TheoryGenConfig: minority_count must be nonnegative");
  if (resolved_tau_scale() <= 0.0) throw std::invalid_argument("TheoryGenConfig: tau_scale must be positive");
  if (resolved_mu_noise() < 0.0) throw std::invalid_argument("TheoryGenConfig: mu_noise must be nonnegative");
}

namespace {

void add_noise(Eigen::Ref<Vector> x, double mu, Rng& rng) {
  if (mu == 0.0) return;
  for (Eigen::Index r = 0; r < x.size(); ++r) x[r] += mu * rng.normal();
}

}  // namespace

std::vector<LocalDataset> generate_theory_dataset(const TheoryGenConfig& cfg) {
  cfg.validate();
  const int d = cfg.d;
  const int K = cfg.K;
  const double tau = cfg.resolved_tau_scale();
  const double mu = cfg.resolved_mu_noise();
  const long n_per_source = 2 * cfg.majority_count + (K - 1) * cfg.minority_count;

  std::vector<LocalDataset> out;
  out.reserve(static_cast<std::size_t>(K));
  Rng master(cfg.seed);
  for (int k = 0; k < K; ++k) {
    Rng rng = master.derive(static_cast<std::uint64_t>(k));
    LocalDataset ds;
    ds.source_id = k;
    ds.samples = Matrix::Zero(d, n_per_source);
    ds.labels.reserve(static_cast<std::size_t>(n_per_source));
    Eigen::Index col = 0;
    // Majority classes 2k (+e_k) and 2k+1 (-e_k) with fresh coin flips per sample.
    for (int sign_case = 0; sign_case < 2; ++sign_case) {
      const double anchor = sign_case == 0 ? 1.0 : -1.0;
      const int label = 2 * k + sign_case;
      for (long s = 0; s < cfg.majority_count; ++s) {
        auto x = ds.samples.col(col);
        x[k] = anchor;
        for (int i = 0; i < K; ++i) {
          if (i == k) continue;
          if (rng.coin()) x[i] -= tau;
        }
        add_noise(x, mu, rng);
        ds.labels.push_back(label);
        ++col;
      }
    }
    // Minority classes 2i (i != k) near +e_i; classes 2i+1 (i != k) absent.
    for (int i = 0; i < K; ++i) {
      if (i == k) continue;
      for (long s = 0; s < cfg.minority_count; ++s) {
        auto x = ds.samples.col(col);
        x[i] = 1.0;
        add_noise(x, mu, rng);
        ds.labels.push_back(2 * i);
        ++col;
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<long> label_histogram(const std::vector<int>& labels, int num_classes) {
  int n = num_classes;
  if (n < 0) {
    n = 0;
    for (int y : labels) n = std::max(n, y + 1);
  }
  std::vector<long> hist(static_cast<std::size_t>(n), 0);
  for (int y : labels) {
    if (y < 0 || y >= n) throw std::invalid_argument("label_histogram: label out of range");
    ++hist[static_cast<std::size_t>(y)];
  }
  return hist;
}

namespace {

void finalize_histograms(PartitionSpec& spec, const std::vector<int>& labels) {
  int num_classes = 0;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);
  spec.label_histograms.assign(spec.assignments.size(),
                               std::vector<long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t s = 0; s < spec.assignments.size(); ++s) {
    for (std::size_t idx : spec.assignments[s]) {
      ++spec.label_histograms[s][static_cast<std::size_t>(labels[idx])];
    }
  }
}

std::vector<std::vector<std::size_t>> indices_by_class(const std::vector<int>& labels,
                                                       int num_classes) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw std::invalid_argument("partition: negative label");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return by_class;
}

}  // namespace

PartitionSpec partition_dirichlet(const std::vector<int>& labels, int K, double alpha,
                                  std::uint64_t seed) {
  if (alpha <= 0.0) throw std::invalid_argument("partition_dirichlet: alpha must be positive");
  if (K < 1) throw std::invalid_argument("partition_dirichlet: K must be at least 1");
  int num_classes = 0;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);

  PartitionSpec spec;
  spec.scheme = PartitionScheme::dirichlet;
  spec.parameter = alpha;
  spec.assignments.assign(static_cast<std::size_t>(K), {});

  Rng master(seed);
  auto by_class = indices_by_class(labels, num_classes);
  for (int c = 0; c < num_classes; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (idx.empty()) continue;
    Rng rng = master.derive(static_cast<std::uint64_t>(c));
    const std::vector<double> p = rng.dirichlet(alpha, K);
    rng.shuffle(idx);

    const double n = static_cast<double>(idx.size());
    std::vector<long> quota(static_cast<std::size_t>(K));
    std::vector<std::pair<double, int>> remainder(static_cast<std::size_t>(K));
    long assigned = 0;
    for (int s = 0; s < K; ++s) {
      const double exact = p[static_cast<std::size_t>(s)] * n;
      quota[static_cast<std::size_t>(s)] = static_cast<long>(std::floor(exact));
      assigned += quota[static_cast<std::size_t>(s)];
      remainder[static_cast<std::size_t>(s)] = {exact - std::floor(exact), s};
    }
    // Largest fractional remainder gets the residual indices; ties to lowest source.
    std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    long residual = static_cast<long>(idx.size()) - assigned;
    for (long r = 0; r < residual; ++r)
      ++quota[static_cast<std::size_t>(remainder[static_cast<std::size_t>(r)].second)];

    std::size_t cursor = 0;
    for (int s = 0; s < K; ++s) {
      for (long q = 0; q < quota[static_cast<std::size_t>(s)]; ++q)
        spec.assignments[static_cast<std::size_t>(s)].push_back(idx[cursor++]);
    }
  }
  for (auto& a : spec.assignments) std::sort(a.begin(), a.end());
  finalize_histograms(spec, labels);
  return spec;
}

PartitionSpec partition_skewness(const std::vector<int>& labels, int K, double beta,
                                 std::uint64_t seed) {
  if (beta < 0.0 || beta > 1.0)
    throw std::invalid_argument("partition_skewness: beta must be in [0,1]");
  if (K < 1) throw std::invalid_argument("partition_skewness: K must be at least 1");
  int num_classes = 0;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);

  PartitionSpec spec;
  spec.scheme = PartitionScheme::skewness;
  spec.parameter = beta;
  spec.assignments.assign(static_cast<std::size_t>(K), {});

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  const long uniform_count = std::lround(beta * static_cast<double>(order.size()));
  const int owned_per_source = std::max(num_classes / K, 1);
  auto owner_of_class = [&](int c) {
    const int covered = K * owned_per_source;
    if (c < covered) return std::min(c / owned_per_source, K - 1);
    return c % K;  // remainder classes round-robin
  };

  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t idx = order[pos];
    int target;
    if (static_cast<long>(pos) < uniform_count) {
      target = static_cast<int>(pos % static_cast<std::size_t>(K));
    } else {
      target = owner_of_class(labels[idx]);
    }
    spec.assignments[static_cast<std::size_t>(target)].push_back(idx);
  }
  for (auto& a : spec.assignments) std::sort(a.begin(), a.end());
  finalize_histograms(spec, labels);
  return spec;
}

namespace {

// PCA projection onto the top min(30, dim) principal components of centered data.
Matrix pca_project(const Matrix& data /* p x n */, int max_components) {
  const Eigen::Index p = data.rows();
  const Eigen::Index n = data.cols();
  const int comps = static_cast<int>(std::min<Eigen::Index>(max_components, p));
  const Vector mean = data.rowwise().mean();
  Matrix centered = data.colwise() - mean;
  if (comps == p) return centered;  // full-dimensional projection is a rotation
  Matrix cov = Matrix::Zero(p, p);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0 / static_cast<double>(n));
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  // Eigen returns ascending order; take the trailing columns.
  Matrix basis = eig.eigenvectors().rightCols(comps);
  return basis.transpose() * centered;
}

}  // namespace

PartitionSpec partition_feature_clusters(const std::vector<Vector>& features, int K,
                                         std::uint64_t seed) {
  if (features.empty()) throw std::invalid_argument("partition_feature_clusters: empty features");
  if (K < 1) throw std::invalid_argument("partition_feature_clusters: K must be at least 1");
  if (static_cast<std::size_t>(K) > features.size())
    throw std::invalid_argument("partition_feature_clusters: K exceeds number of samples");
  const Eigen::Index p = features.front().size();
  const Eigen::Index n = static_cast<Eigen::Index>(features.size());
  Matrix data(p, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (features[static_cast<std::size_t>(i)].size() != p)
      throw std::invalid_argument("partition_feature_clusters: inconsistent dimensions");
    data.col(i) = features[static_cast<std::size_t>(i)];
  }
  const Matrix z = pca_project(data, 30);

  Rng rng(seed);
  // k-means++ seeding.
  Matrix centroids(z.rows(), K);
  centroids.col(0) = z.col(rng.uniform_int(static_cast<int>(n)));
  Vector dist2 = (z.colwise() - centroids.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < K; ++c) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = rng.uniform_int(static_cast<int>(n));
    }
    centroids.col(c) = z.col(pick);
    dist2 = dist2.cwiseMin((z.colwise() - centroids.col(c)).colwise().squaredNorm().transpose());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  constexpr int kMaxIters = 100;
  for (int iter = 0; iter < kMaxIters; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (z.col(i) - centroids.col(0)).squaredNorm();
      for (int c = 1; c < K; ++c) {
        const double dd = (z.col(i) - centroids.col(c)).squaredNorm();
        if (dd < best_d) {  // ties keep the lowest centroid index
          best_d = dd;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(z.rows(), K);
    std::vector<long> counts(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(assign[static_cast<std::size_t>(i)]) += z.col(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < K; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0)
        centroids.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      // empty cluster keeps its previous centroid
    }
  }

  PartitionSpec spec;
  spec.scheme = PartitionScheme::feature_cluster;
  spec.parameter = static_cast<double>(K);
  spec.assignments.assign(static_cast<std::size_t>(K), {});
  for (Eigen::Index i = 0; i < n; ++i)
    spec.assignments[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])].push_back(
        static_cast<std::size_t>(i));
  return spec;
}

void attach_labels(PartitionSpec& spec, const std::vector<int>& labels) {
  finalize_histograms(spec, labels);
}

PartitionSpec manual_partition(const std::vector<std::vector<std::size_t>>& assignments,
                               const std::vector<int>& labels) {
  PartitionSpec spec;
  spec.scheme = PartitionScheme::manual;
  spec.assignments = assignments;
  finalize_histograms(spec, labels);
  return spec;
}

std::vector<LocalDataset> apply_input_shift(const std::vector<LocalDataset>& datasets,
                                            std::uint64_t seed) {
  if (datasets.empty()) return {};
  const Eigen::Index d = datasets.front().dim();
  for (const auto& ds : datasets) {
    if (ds.dim() != d) throw std::invalid_argument("apply_input_shift: dimension mismatch");
  }
  Rng master(seed);
  std::vector<LocalDataset> out;
  out.reserve(datasets.size());
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    Rng rng = master.derive(static_cast<std::uint64_t>(datasets[k].source_id));
    Matrix g(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < d; ++i) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < d; ++j) {
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);  // sign fix for a Haar-distributed Q
    }
    LocalDataset ds;
    ds.source_id = datasets[k].source_id;
    ds.labels = datasets[k].labels;
    ds.samples = q * datasets[k].samples;
    out.push_back(std::move(ds));
  }
  return out;
}

double heterogeneity_emd(const std::vector<std::vector<long>>& local_histograms,
                         const std::vector<long>& global_histogram) {
  if (local_histograms.empty()) throw std::invalid_argument("heterogeneity_emd: no sources");
  long global_total = 0;
  for (long c : global_histogram) global_total += c;
  if (global_total <= 0) throw std::invalid_argument("heterogeneity_emd: empty global histogram");

  double total = 0.0;
  for (const auto& hist : local_histograms) {
    long local_total = 0;
    for (long c : hist) local_total += c;
    if (local_total <= 0) throw std::invalid_argument("heterogeneity_emd: empty source");
    double tv = 0.0;
    for (std::size_t c = 0; c < global_histogram.size(); ++c) {
      const double p = c < hist.size() ? static_cast<double>(hist[c]) / local_total : 0.0;
      const double q = static_cast<double>(global_histogram[c]) / global_total;
      tv += std::abs(p - q);
    }
    total += 0.5 * tv;
  }
  return total / static_cast<double>(local_histograms.size());
}

double heterogeneity_emd(const PartitionSpec& spec, const std::vector<long>& global_histogram) {
  if (spec.assignments.empty()) throw std::invalid_argument("heterogeneity_emd: no sources");
  return heterogeneity_emd(spec.label_histograms, global_histogram);
}

std::vector<LocalDataset> split_by_partition(const Matrix& samples, const std::vector<int>& labels,
                                             const PartitionSpec& spec) {
  std::vector<LocalDataset> out;
  out.reserve(spec.assignments.size());
  for (std::size_t s = 0; s < spec.assignments.size(); ++s) {
    const auto& idx = spec.assignments[s];
    LocalDataset ds;
    ds.source_id = static_cast<int>(s);
    ds.samples.resize(samples.rows(), static_cast<Eigen::Index>(idx.size()));
    ds.labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ds.samples.col(static_cast<Eigen::Index>(i)) =
          samples.col(static_cast<Eigen::Index>(idx[i]));
      ds.labels.push_back(labels[idx[i]]);
    }
    out.push_back(std::move(ds));
  }
  return out;
}

}  // namespace decssl
