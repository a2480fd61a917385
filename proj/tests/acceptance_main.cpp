// Acceptance suite: one line per criterion, exit code = number of failures.
// An optional argv selects a single criterion number (used by ctest).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <vector>

#include "decssl/datagen.hpp"
#include "decssl/eval.hpp"
#include "decssl/experiment.hpp"
#include "decssl/featarc.hpp"
#include "decssl/fedsim.hpp"
#include "decssl/objectives.hpp"
#include "decssl/spectral.hpp"
#include "oracles.hpp"

using namespace decssl;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

bool check(bool ok, const std::string& detail, std::vector<std::string>& notes) {
  if (!ok) notes.push_back(detail);
  return ok;
}

// 1. Local/global minimizer representability across the dimension grid.
bool criterion1(std::string& message) {
  const auto report = verify_theorem1({128, 512, 2048}, 3, 6, 10, 500, 20, 0.9, 0);
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "local>=0.9 (d>=512): %s; global>=0.9: %s; median trend non-decreasing: %s "
                "[medians %.5f -> %.5f -> %.5f]",
                report.pass_local ? "ok" : "FAIL", report.pass_global ? "ok" : "FAIL",
                report.pass_trend ? "ok" : "FAIL", report.median_min_local[0],
                report.median_min_local[1], report.median_min_local[2]);
  message = buf;
  if (!report.pass_trend) {
    message +=
        " | trend fails at fixed per-source counts: the sampling error of the local "
        "covariance couples signal to noise directions at a rate that grows with d when n is "
        "held constant, so the empirical minima drift down even though the population "
        "representability improves; scaling majority counts with d restores the rising trend "
        "(see README)";
  }
  return report.pass;
}

// 2. Margin-classifier concentration vs SSL-oracle uniformity.
bool criterion2(std::string& message) {
  const auto report = verify_prop1(512, 3, 5, 500, 20, 5.0, 0.9, 0);
  double min_ratio = std::numeric_limits<double>::infinity();
  double min_rep = 1.0;
  for (const auto& c : report.cells) {
    min_ratio = std::min(min_ratio, c.ratio);
    min_rep = std::min(min_rep, c.min_ssl_rep_other);
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "min own/other correlation ratio %.3f (need >= 5); "
                "min SSL representability at non-owned directions %.4f (need > 0.9)",
                min_ratio, min_rep);
  message = buf;
  return report.pass;
}

// 3. Gradient descent reaches the spectral minimizer on random PSD instances.
bool criterion3(std::string& message) {
  const auto report = verify_equivalence(64, 8, 50000, 0.0, 20, 0, 1e-2, 1e-6);
  double max_angle = 0.0;
  double max_gap = 0.0;
  for (const auto& c : report.cells) {
    max_angle = std::max(max_angle, c.angle);
    max_gap = std::max(max_gap, c.relative_gap);
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "max principal angle %.2e rad (tol 1e-2); max relative gap %.2e (tol 1e-6)",
                max_angle, max_gap);
  message = buf;
  return report.pass;
}

// 4. FedAvg is insensitive to the local-update budget on heterogeneous data.
bool criterion4(std::string& message) {
  TheoryGenConfig gen;
  gen.d = 256;
  gen.K = 5;
  gen.majority_count = 200;
  gen.minority_count = 10;
  gen.seed = 1;
  const auto sources = generate_theory_dataset(gen);

  std::vector<double> min_reps;
  for (int epochs : {1, 5, 25}) {
    FedConfig cfg;
    cfg.rounds = 60;
    cfg.local_epochs = epochs;
    cfg.participation = 1.0;
    cfg.learning_rate = 0.02;
    cfg.batch_size = 64;
    cfg.flavor = ObjectiveFlavor::linear_ssl;
    cfg.expected_gradient = true;
    cfg.trace_oracle_angle = false;
    cfg.seed = 7;
    const TrainingTrace trace = run_fedavg(sources, cfg);
    if (trace.diverged) {
      message = "training diverged at E=" + std::to_string(epochs);
      return false;
    }
    const RepresentabilityVector rep = representability(trace.final_models[0]);
    double min_rep = 1.0;
    for (int i = 0; i < gen.K; ++i) min_rep = std::min(min_rep, rep.values[i]);
    min_reps.push_back(min_rep);
  }
  const double lowest = *std::min_element(min_reps.begin(), min_reps.end());
  const double spread =
      *std::max_element(min_reps.begin(), min_reps.end()) - lowest;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "min representability per E {1,5,25} = {%.4f, %.4f, %.4f} (need >= 0.85); "
                "spread %.4f (need <= 0.05)",
                min_reps[0], min_reps[1], min_reps[2], spread);
  message = buf;
  return lowest >= 0.85 && spread <= 0.05;
}

// 5. Exact reduction identities of the clustered algorithm.
bool criterion5(std::string& message) {
  TheoryGenConfig gen;
  gen.d = 32;
  gen.K = 3;
  gen.majority_count = 30;
  gen.minority_count = 4;
  gen.seed = 5;
  const auto sources = generate_theory_dataset(gen);

  std::vector<std::string> notes;
  for (bool expected : {true, false}) {
    FeatArcConfig cfg;
    cfg.rounds = 5;
    cfg.local_epochs = 1;
    cfg.participation = 1.0;
    cfg.learning_rate = 0.02;
    cfg.batch_size = 32;
    cfg.flavor = ObjectiveFlavor::linear_ssl;
    cfg.expected_gradient = expected;
    cfg.seed = 9;
    cfg.num_clusters = 1;
    cfg.alignment_weight = 0.0;

    const FeatArcResult clustered = run_featarc(sources, cfg);
    const TrainingTrace fedavg = run_fedavg(sources, cfg);
    check(trace_equal_bitwise(clustered.trace, fedavg),
          std::string("C=1 reduction differs (") + (expected ? "exact" : "stochastic") +
              " gradients)",
          notes);

    FeatArcConfig pinned = cfg;
    pinned.num_clusters = 3;
    pinned.pin_assignments = std::vector<int>{0, 1, 2};
    const FeatArcResult independent = run_featarc(sources, pinned);
    const TrainingTrace local = run_local(sources, cfg);
    bool models_equal = true;
    for (int k = 0; k < 3; ++k) {
      models_equal =
          models_equal && encoders_equal_bitwise(independent.state.cluster_models[k],
                                                 local.final_models[k]);
    }
    bool losses_equal = true;
    for (std::size_t t = 0; t < local.rounds.size(); ++t) {
      losses_equal = losses_equal && independent.trace.rounds[t].mean_local_loss ==
                                         local.rounds[t].mean_local_loss;
    }
    check(models_equal && losses_equal,
          std::string("pinned C=K reduction differs (") + (expected ? "exact" : "stochastic") +
              " gradients)",
          notes);
  }
  message = notes.empty() ? "C=1 and pinned C=K reductions bit-identical in both gradient modes"
                          : notes.front();
  return notes.empty();
}

// 6. Gossip consensus with zero local steps on every topology.
bool criterion6(std::string& message) {
  const int k = 10;
  TheoryGenConfig gen;
  gen.d = 20;
  gen.K = k;
  gen.majority_count = 4;
  gen.minority_count = 0;
  gen.seed = 2;
  const auto sources = generate_theory_dataset(gen);

  FedConfig cfg;
  cfg.rounds = 1;
  cfg.local_steps = 0;
  cfg.participation = 1.0;
  cfg.learning_rate = 0.01;
  cfg.flavor = ObjectiveFlavor::linear_ssl;
  cfg.seed = 3;

  std::vector<std::string> notes;
  std::string detail;
  for (TopologyKind kind : {TopologyKind::star, TopologyKind::cycle, TopologyKind::binary_tree,
                            TopologyKind::random_graph}) {
    const Topology topo = build_topology(kind, k, 0.7, 11);
    // Distinct per-node starts at the artifact's standard Gaussian(0, 1/d) scale.
    std::vector<LinearEncoder> models;
    Rng rng(77);
    for (int i = 0; i < k; ++i) {
      LinearEncoder enc;
      enc.weight = oracles::random_matrix(4, 20, rng, 1.0 / std::sqrt(20.0));
      models.push_back(enc);
    }
    Matrix mean = Matrix::Zero(4, 20);
    for (const auto& m : models) mean += m.weight;
    mean /= static_cast<double>(k);

    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (int round = 0; round < 200; ++round) {
      models = gossip_round(models, topo, sources, cfg, round);
      double max_pair = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j)
          max_pair = std::max(max_pair, weight_distance(models[i], models[j]));
      monotone = monotone && max_pair <= prev + 1e-14;
      prev = max_pair;
    }
    check(monotone, to_string(kind) + ": consensus distance not monotone", notes);
    check(prev <= 1e-6, to_string(kind) + ": final max distance above 1e-6 after 200 rounds",
          notes);
    // Double stochasticity preserves the average of node weights each round,
    // which pins the consensus point to the initial mean.
    Matrix running_mean = Matrix::Zero(4, 20);
    for (const auto& m : models) running_mean += m.weight;
    running_mean /= static_cast<double>(k);
    check((running_mean - mean).cwiseAbs().maxCoeff() <= 1e-10,
          to_string(kind) + ": preserved average deviates from the initial mean", notes);
    char entry[96];
    std::snprintf(entry, sizeof(entry), "%s %.2e%s", to_string(kind).c_str(), prev,
                  kind == TopologyKind::random_graph ? "" : ", ");
    detail += entry;
  }
  message = "final max distances: " + detail;
  if (!notes.empty()) {
    message += " | " + notes.front() +
               " (heap tree of 10 nodes mixes at |lambda2| = 0.956, so 200 Metropolis rounds "
               "contract by only ~1e-4; ~330 rounds would be needed from unit-scale starts; "
               "see README)";
  }
  return notes.empty();
}

// 7. Partitioner contracts.
bool criterion7(std::string& message) {
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c)
    for (int i = 0; i < 1000; ++i) labels.push_back(c);

  std::vector<std::string> notes;
  const auto uniform = partition_dirichlet(labels, 5, 1e6, 42);
  for (const auto& hist : uniform.label_histograms) {
    for (long count : hist) {
      check(std::abs(count / 1000.0 - 0.2) <= 0.02,
            "dirichlet(1e6) proportion outside the 2% band", notes);
    }
  }

  const auto exclusive = partition_skewness(labels, 5, 0.0, 42);
  for (const auto& hist : exclusive.label_histograms) {
    int owned = 0;
    for (long count : hist)
      if (count > 0) ++owned;
    check(owned == 2, "skewness(0) source does not own exactly 2 classes", notes);
  }
  for (int c = 0; c < 10; ++c) {
    int holders = 0;
    for (const auto& hist : exclusive.label_histograms)
      if (hist[c] > 0) ++holders;
    check(holders == 1, "skewness(0) class split across sources", notes);
  }

  const auto flat = partition_skewness(labels, 5, 1.0, 42);
  for (const auto& hist : flat.label_histograms) {
    const long total = std::accumulate(hist.begin(), hist.end(), 0L);
    for (long count : hist) {
      check(std::abs(static_cast<double>(count) / total - 0.1) <= 0.03,
            "skewness(1) source is far from uniform", notes);
    }
  }

  const auto global_hist = label_histogram(labels);
  double prev = 2.0;
  bool decreasing = true;
  for (double beta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double emd =
        heterogeneity_emd(partition_skewness(labels, 5, beta, 42), global_hist);
    decreasing = decreasing && emd < prev;
    prev = emd;
  }
  check(decreasing, "heterogeneity does not strictly decrease with beta", notes);

  message = notes.empty()
                ? "dirichlet(1e6) within 2% of uniform; skewness endpoints exact; "
                  "heterogeneity strictly decreasing in beta"
                : notes.front();
  return notes.empty();
}

// 8. Numerical hygiene: gradients, loss identity, representability sums, InfoNCE.
bool criterion8(std::string& message) {
  std::vector<std::string> notes;
  Rng rng(123);

  for (int rep = 0; rep < 5; ++rep) {
    const Matrix x = oracles::random_psd(6, rng);
    LinearEncoder enc;
    enc.weight = oracles::random_matrix(4, 6, rng, 0.5);
    const double err = oracles::finite_difference_error(
        [&](const Matrix& w) {
          LinearEncoder probe;
          probe.weight = w;
          return linear_ssl_loss_expected(probe, x);
        },
        enc.weight, linear_ssl_gradient(enc, x));
    check(err <= 1e-4, "expected-loss gradient fails finite differences", notes);
  }

  const Matrix a = oracles::random_matrix(5, 6, rng);
  const Matrix b = oracles::random_matrix(5, 6, rng);
  const Matrix w0 = oracles::random_matrix(3, 5, rng, 0.6);
  {
    Matrix grad;
    linear_ssl_batch(w0, a, b, &grad);
    check(oracles::finite_difference_error(
              [&](const Matrix& w) { return linear_ssl_batch(w, a, b, nullptr); }, w0, grad) <=
              1e-4,
          "stochastic linear-ssl gradient fails finite differences", notes);
    infonce_batch(w0, a, b, 0.5, &grad);
    check(oracles::finite_difference_error(
              [&](const Matrix& w) { return infonce_batch(w, a, b, 0.5, nullptr); }, w0,
              grad) <= 1e-4,
          "infonce gradient fails finite differences", notes);
    simsiam_batch(w0, std::nullopt, a, b, &grad, nullptr);
    check(oracles::finite_difference_error(
              [&](const Matrix& w) {
                const Matrix preds = w * a;
                const Matrix targets = w0 * b;
                double loss = 0.0;
                for (Eigen::Index i = 0; i < preds.cols(); ++i)
                  loss += cosine_distance(preds.col(i), targets.col(i));
                return loss / static_cast<double>(preds.cols());
              },
              w0, grad) <= 1e-4,
          "simsiam gradient fails finite differences", notes);
    std::vector<int> labels{0, 1, 2, 0, 1, 2};
    softmax_ce_batch(w0, a, labels, &grad);
    check(oracles::finite_difference_error(
              [&](const Matrix& w) { return softmax_ce_batch(w, a, labels, nullptr); }, w0,
              grad) <= 1e-4,
          "softmax gradient fails finite differences", notes);
  }

  for (int rep = 0; rep < 20; ++rep) {
    LinearEncoder enc;
    enc.weight = oracles::random_matrix(3, 7, rng);
    const Matrix x = oracles::random_psd(7, rng);
    const double lhs = 2.0 * linear_ssl_loss_expected(enc, x) + x.squaredNorm();
    const double rhs = reconstruction_objective(enc, x);
    check(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(rhs)),
          "loss/reconstruction identity exceeds 1e-9 relative", notes);
  }

  for (int rows : {1, 3, 6}) {
    const Matrix w = oracles::random_matrix(rows, 9, rng);
    const RepresentabilityVector r = representability(w);
    check(std::abs(r.values.sum() - r.subspace_dim) <= 1e-8,
          "representability sum deviates from the subspace dimension", notes);
  }

  Vector anchor(2), positive(2), negative(2);
  anchor << 1.0, 0.0;
  positive << 0.0, 1.0;
  negative << 0.0, 2.0;
  for (int n : {1, 3, 7}) {
    std::vector<Vector> negatives(static_cast<std::size_t>(n), negative);
    const double loss = infonce_loss(anchor, positive, negatives, 0.5);
    check(std::abs(loss - std::log(n + 1.0)) <= 1e-12,
          "symmetric infonce deviates from ln(n+1)", notes);
  }

  message = notes.empty()
                ? "finite differences, loss identity, representability sums, infonce all in "
                  "tolerance"
                : notes.front();
  return notes.empty();
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int number;
    const char* title;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "representability of exact minimizers across d", criterion1},
      {2, "margin-feature concentration vs SSL uniformity", criterion2},
      {3, "gradient descent vs spectral minimizer", criterion3},
      {4, "fedavg robustness to local-update budgets", criterion4},
      {5, "clustered-training reduction identities", criterion5},
      {6, "gossip consensus on all topologies", criterion6},
      {7, "partitioner contracts", criterion7},
      {8, "numerical hygiene", criterion8},
  };

  int selected = 0;
  if (argc > 1) selected = std::atoi(argv[1]);

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (selected != 0 && criterion.number != selected) continue;
    Timer timer;
    std::string message;
    bool ok = false;
    try {
      ok = criterion.run(message);
    } catch (const std::exception& e) {
      message = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s -- %s (%.1f s)\n", ok ? "PASS" : "FAIL", criterion.number,
                criterion.title, message.c_str(), timer.seconds());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
