#include "decssl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "decssl/objectives.hpp"
#include "decssl/rng.hpp"

namespace decssl {

namespace {

constexpr std::uint64_t kProbeTag = 0x7E57;

Matrix probe_features(const LinearEncoder& encoder, const LocalDataset& ds, bool normalize) {
  Matrix z = encoder.weight * ds.samples;
  if (normalize) {
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
      const double n = z.col(i).norm();
      if (n > 0.0) z.col(i) /= n;
    }
  }
  return z;
}

}  // namespace

ProbeResult linear_probe(const LinearEncoder& encoder, const LocalDataset& train,
                         const LocalDataset& test, int epochs, double learning_rate,
                         std::uint64_t seed, bool normalize_features) {
  if (train.empty() || test.empty())
    throw std::invalid_argument("linear_probe: empty train or test split");
  if (train.dim() != test.dim() || train.dim() != encoder.weight.cols())
    throw std::invalid_argument("linear_probe: dimension mismatch");
  int num_classes = 0;
  for (int y : train.labels) num_classes = std::max(num_classes, y + 1);
  for (int y : test.labels) num_classes = std::max(num_classes, y + 1);

  const Matrix z_train = probe_features(encoder, train, normalize_features);
  const Matrix z_test = probe_features(encoder, test, normalize_features);
  const Eigen::Index m = z_train.rows();
  const Eigen::Index n = z_train.cols();

  Rng rng(seed);
  Matrix head(num_classes, m);
  for (Eigen::Index i = 0; i < head.rows(); ++i)
    for (Eigen::Index j = 0; j < head.cols(); ++j) head(i, j) = 0.01 * rng.normal();
  Vector bias = Vector::Zero(num_classes);

  const double inv_n = 1.0 / static_cast<double>(n);
  bool converged = false;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Matrix logits = head * z_train;
    logits.colwise() += bias;
    Matrix p(num_classes, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector e = (logits.col(i).array() - logits.col(i).maxCoeff()).exp();
      p.col(i) = e / e.sum();
    }
    for (Eigen::Index i = 0; i < n; ++i) p(train.labels[static_cast<std::size_t>(i)], i) -= 1.0;
    const Matrix grad_head = inv_n * (p * z_train.transpose());
    const Vector grad_bias = inv_n * p.rowwise().sum();
    const double gnorm = std::sqrt(grad_head.squaredNorm() + grad_bias.squaredNorm());
    if (gnorm <= 1e-6) {
      converged = true;
      break;
    }
    head -= learning_rate * grad_head;
    bias -= learning_rate * grad_bias;
  }

  ProbeResult result;
  result.converged = converged;
  result.num_train = train.size();
  result.num_test = test.size();
  Vector correct = Vector::Zero(num_classes);
  Vector count = Vector::Zero(num_classes);
  long hits = 0;
  Matrix logits = head * z_test;
  logits.colwise() += bias;
  for (Eigen::Index i = 0; i < z_test.cols(); ++i) {
    Eigen::Index pred = 0;
    logits.col(i).maxCoeff(&pred);  // ties resolve to the lowest class index
    const int truth = test.labels[static_cast<std::size_t>(i)];
    count[truth] += 1.0;
    if (static_cast<int>(pred) == truth) {
      correct[truth] += 1.0;
      ++hits;
    }
  }
  result.top1_accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  result.per_class_accuracy.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    result.per_class_accuracy[c] =
        count[c] > 0.0 ? correct[c] / count[c] : std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

std::uint64_t probe_seed_for(std::uint64_t seed, int source_id) {
  return Rng(seed).derive(kProbeTag, static_cast<std::uint64_t>(source_id)).seed();
}

double probe_featarc(const ClusterState& state, const std::vector<LocalDataset>& train_splits,
                     const std::vector<LocalDataset>& test_splits, int epochs,
                     double learning_rate, std::uint64_t seed, bool normalize_features) {
  state.validate();
  const int k = state.num_sources();
  if (static_cast<int>(train_splits.size()) != k || static_cast<int>(test_splits.size()) != k)
    throw std::invalid_argument("probe_featarc: split count mismatch");
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    const LinearEncoder& model =
        state.cluster_models[static_cast<std::size_t>(state.assignments[static_cast<std::size_t>(i)])];
    acc += linear_probe(model, train_splits[static_cast<std::size_t>(i)],
                        test_splits[static_cast<std::size_t>(i)], epochs, learning_rate,
                        probe_seed_for(seed, i), normalize_features)
               .top1_accuracy;
  }
  return acc / static_cast<double>(k);
}

double weight_distance(const LinearEncoder& a, const LinearEncoder& b) {
  if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols())
    throw std::invalid_argument("weight_distance: shape mismatch");
  if (a.predictor.has_value() != b.predictor.has_value())
    throw std::invalid_argument("weight_distance: predictor presence mismatch");
  double dist = (a.weight - b.weight).norm();
  if (a.predictor) {
    if (a.predictor->rows() != b.predictor->rows() || a.predictor->cols() != b.predictor->cols())
      throw std::invalid_argument("weight_distance: predictor shape mismatch");
    dist += (*a.predictor - *b.predictor).norm();
  }
  return dist;
}

double feature_alignment_score(const LinearEncoder& a, const LinearEncoder& b,
                               const LocalDataset& dataset) {
  if (a.weight.cols() != dataset.dim() || b.weight.cols() != dataset.dim())
    throw std::invalid_argument("feature_alignment_score: dimension mismatch");
  const Matrix za = a.weight * dataset.samples;
  const Matrix zb = b.weight * dataset.samples;
  double acc = 0.0;
  long counted = 0;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    if (za.col(i).squaredNorm() == 0.0 || zb.col(i).squaredNorm() == 0.0) continue;
    acc += cosine_distance(za.col(i), zb.col(i));
    ++counted;
  }
  return counted > 0 ? acc / static_cast<double>(counted) : 0.0;
}

void split_train_test(const LocalDataset& dataset, double test_fraction, std::uint64_t seed,
                      LocalDataset& train, LocalDataset& test) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("split_train_test: test_fraction must be in (0,1)");
  const Eigen::Index n = dataset.size();
  if (n < 2) throw std::invalid_argument("split_train_test: need at least 2 samples");
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  Eigen::Index n_test = static_cast<Eigen::Index>(std::lround(test_fraction * n));
  n_test = std::clamp<Eigen::Index>(n_test, 1, n - 1);
  const Eigen::Index n_train = n - n_test;

  train.source_id = dataset.source_id;
  test.source_id = dataset.source_id;
  train.samples.resize(dataset.dim(), n_train);
  test.samples.resize(dataset.dim(), n_test);
  train.labels.clear();
  test.labels.clear();
  train.labels.reserve(static_cast<std::size_t>(n_train));
  test.labels.reserve(static_cast<std::size_t>(n_test));
  for (Eigen::Index i = 0; i < n_train; ++i) {
    train.samples.col(i) = dataset.samples.col(static_cast<Eigen::Index>(order[i]));
    train.labels.push_back(dataset.labels[order[i]]);
  }
  for (Eigen::Index i = 0; i < n_test; ++i) {
    test.samples.col(i) =
        dataset.samples.col(static_cast<Eigen::Index>(order[static_cast<std::size_t>(n_train + i)]));
    test.labels.push_back(dataset.labels[order[static_cast<std::size_t>(n_train + i)]]);
  }
}

}  // namespace decssl
