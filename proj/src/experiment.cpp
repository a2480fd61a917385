#include "decssl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <future>
#include <numeric>
#include <sstream>
#include <thread>

#include "decssl/datagen.hpp"
#include "decssl/eval.hpp"
#include "decssl/featarc.hpp"
#include "decssl/io.hpp"
#include "decssl/objectives.hpp"
#include "decssl/spectral.hpp"
#include "fed_internal.hpp"

namespace decssl {

namespace {

constexpr std::uint64_t kDataTag = 0xDA7A;
constexpr std::uint64_t kPartitionTag = 0x9A57;
constexpr std::uint64_t kShiftTag = 0x51F7;
constexpr std::uint64_t kTopologyTag = 0x7090;
constexpr std::uint64_t kSplitTag = 0x57A7;
constexpr std::uint64_t kProbeTag = 0x9B0E;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json number_or_null(double v) {
  if (std::isnan(v) || std::isinf(v)) return nullptr;
  return v;
}

/// Runs one job per index on up to hardware_concurrency workers; results are
/// collected by index so scheduling cannot affect output.
template <typename F>
auto parallel_map(int count, F&& job) {
  using R = decltype(job(0));
  std::vector<R> results(static_cast<std::size_t>(count));
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::future<void>> futures;
  std::atomic<int> next{0};
  for (unsigned w = 0; w < std::min<unsigned>(workers, static_cast<unsigned>(count)); ++w) {
    futures.push_back(std::async(std::launch::async, [&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        results[static_cast<std::size_t>(i)] = job(i);
      }
    }));
  }
  for (auto& f : futures) f.get();
  return results;
}

}  // namespace

std::vector<LocalDataset> build_sources(const ExperimentConfig& cfg, PartitionSpec* out_spec) {
  std::vector<LocalDataset> sources;
  if (cfg.data.kind == "theory") {
    TheoryGenConfig gen{cfg.data.d,
                       cfg.data.sources,
                       cfg.data.majority_count,
                       cfg.data.minority_count,
                       cfg.data.tau_scale,
                       cfg.data.mu_noise,
                       Rng(cfg.master_seed).derive(kDataTag).seed()};
    sources = generate_theory_dataset(gen);
  } else {
    LocalDataset pool = load_dataset_csv(cfg.data.csv_path);
    const std::uint64_t part_seed = Rng(cfg.master_seed).derive(kPartitionTag).seed();
    PartitionSpec spec;
    if (cfg.data.partition == "none") {
      std::vector<std::size_t> all(static_cast<std::size_t>(pool.size()));
      std::iota(all.begin(), all.end(), std::size_t{0});
      spec = manual_partition({all}, pool.labels);
    } else if (cfg.data.partition == "dirichlet") {
      spec = partition_dirichlet(pool.labels, cfg.data.sources, cfg.data.partition_param, part_seed);
    } else if (cfg.data.partition == "skewness") {
      spec = partition_skewness(pool.labels, cfg.data.sources, cfg.data.partition_param, part_seed);
    } else {
      const LocalDataset feat = cfg.data.features_csv.empty()
                                    ? pool
                                    : load_dataset_csv(cfg.data.features_csv);
      if (feat.size() != pool.size())
        throw ConfigError("data.features_csv", "feature rows must match csv_path rows");
      std::vector<Vector> features;
      features.reserve(static_cast<std::size_t>(feat.size()));
      for (Eigen::Index i = 0; i < feat.size(); ++i) features.push_back(feat.samples.col(i));
      spec = partition_feature_clusters(features, cfg.data.sources, part_seed);
      attach_labels(spec, pool.labels);
    }
    sources = split_by_partition(pool.samples, pool.labels, spec);
    if (out_spec) *out_spec = std::move(spec);
  }
  if (cfg.data.input_shift)
    sources = apply_input_shift(sources, Rng(cfg.master_seed).derive(kShiftTag).seed());
  return sources;
}

namespace {

struct TrainOutput {
  TrainingTrace trace;
  std::optional<ClusterState> cluster_state;
};

TrainOutput dispatch_training(const ExperimentConfig& cfg,
                              const std::vector<LocalDataset>& sources) {
  TrainOutput out;
  if (cfg.algorithm == "fedavg") {
    out.trace = run_fedavg(sources, cfg.train);
  } else if (cfg.algorithm == "gossip") {
    const Topology topo =
        build_topology(topology_from_string(cfg.topology), static_cast<int>(sources.size()),
                       cfg.edge_probability, Rng(cfg.master_seed).derive(kTopologyTag).seed());
    out.trace = run_decentralized(sources, topo, cfg.train);
  } else if (cfg.algorithm == "featarc") {
    FeatArcResult r = run_featarc(sources, cfg.train);
    out.trace = std::move(r.trace);
    out.cluster_state = std::move(r.state);
  } else if (cfg.algorithm == "local") {
    out.trace = run_local(sources, cfg.train);
  } else {
    out.trace = run_central(sources, cfg.train);
  }
  return out;
}

std::vector<std::pair<std::string, const LinearEncoder*>> named_models(
    const ExperimentConfig& cfg, const TrainOutput& out) {
  std::vector<std::pair<std::string, const LinearEncoder*>> models;
  if (cfg.algorithm == "featarc") {
    for (std::size_t j = 0; j < out.cluster_state->cluster_models.size(); ++j)
      models.emplace_back("cluster_" + std::to_string(j), &out.cluster_state->cluster_models[j]);
  } else if (cfg.algorithm == "gossip" || cfg.algorithm == "local") {
    for (std::size_t i = 0; i < out.trace.final_models.size(); ++i)
      models.emplace_back("node_" + std::to_string(i), &out.trace.final_models[i]);
  } else {
    models.emplace_back("global", &out.trace.final_models.front());
  }
  return models;
}

LocalDataset pool_sources(const std::vector<LocalDataset>& sources) {
  long total = 0;
  for (const auto& ds : sources) total += ds.size();
  LocalDataset pooled;
  pooled.source_id = 0;
  pooled.samples.resize(sources.front().dim(), total);
  pooled.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index col = 0;
  for (const auto& ds : sources) {
    pooled.samples.middleCols(col, ds.size()) = ds.samples;
    pooled.labels.insert(pooled.labels.end(), ds.labels.begin(), ds.labels.end());
    col += ds.size();
  }
  return pooled;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.out_dir = cfg.resolved_output_dir();
  std::filesystem::create_directories(result.out_dir / "metrics");

  write_text_file(result.out_dir / "resolved_config.ini", emit_resolved_config(cfg));

  PartitionSpec partition;
  const std::vector<LocalDataset> sources = build_sources(cfg, &partition);
  if (cfg.data.kind == "csv" && cfg.data.partition != "none") {
    nlohmann::json pj = partition_to_json(partition);
    pj["master_seed"] = cfg.master_seed;
    write_text_file(result.out_dir / "partition.json", pj.dump(2) + "\n");
  }
  TrainOutput out = dispatch_training(cfg, sources);

  save_trace_jsonl(result.out_dir / "trace.jsonl", out.trace, cfg.master_seed);

  nlohmann::json summary;
  summary["master_seed"] = cfg.master_seed;
  summary["algorithm"] = cfg.algorithm;
  summary["flavor"] = to_string(cfg.train.flavor);
  summary["sources"] = sources.size();
  summary["rounds_completed"] = out.trace.rounds.size();
  summary["diverged"] = out.trace.diverged;
  if (out.trace.diverged) {
    summary["diverged_source"] = out.trace.diverged_source;
    summary["divergence_message"] = out.trace.divergence_message;
  }

  const std::string csv_header = "# master_seed = " + std::to_string(cfg.master_seed) + "\n";

  // Per-round loss curve.
  {
    std::ostringstream csv;
    csv << csv_header;
    csv << "round,mean_local_loss,global_loss,principal_angle_to_oracle\n";
    for (const auto& rec : out.trace.rounds) {
      csv << rec.round << ',' << fmt(rec.mean_local_loss) << ',' << fmt(rec.global_loss) << ','
          << fmt(rec.principal_angle_to_oracle) << '\n';
    }
    write_text_file(result.out_dir / "metrics" / "loss.csv", csv.str());
  }
  if (cfg.algorithm == "gossip") {
    std::ostringstream csv;
    csv << csv_header;
    csv << "round,consensus_mean_distance,consensus_max_distance\n";
    for (const auto& rec : out.trace.rounds)
      csv << rec.round << ',' << fmt(rec.consensus_mean_distance) << ','
          << fmt(rec.consensus_max_distance) << '\n';
    write_text_file(result.out_dir / "metrics" / "consensus.csv", csv.str());
  }

  if (!out.trace.rounds.empty()) {
    const auto& last = out.trace.rounds.back();
    summary["final"]["mean_local_loss"] = number_or_null(last.mean_local_loss);
    summary["final"]["global_loss"] = number_or_null(last.global_loss);
    summary["final"]["principal_angle_to_oracle"] =
        number_or_null(last.principal_angle_to_oracle);
  }

  const auto models = named_models(cfg, out);

  // Label heterogeneity of the source split.
  {
    int num_classes = 0;
    for (const auto& ds : sources)
      for (int y : ds.labels) num_classes = std::max(num_classes, y + 1);
    std::vector<std::vector<long>> hists;
    std::vector<long> global_hist(static_cast<std::size_t>(num_classes), 0);
    for (const auto& ds : sources) {
      hists.push_back(label_histogram(ds.labels, num_classes));
      for (std::size_t c = 0; c < hists.back().size(); ++c) global_hist[c] += hists.back()[c];
    }
    summary["final"]["heterogeneity_emd"] = heterogeneity_emd(hists, global_hist);
  }

  if (cfg.eval.representability) {
    const int k = static_cast<int>(sources.size());
    const Eigen::Index d = sources.front().dim();
    const int dirs = static_cast<int>(std::min<Eigen::Index>(k, d));
    std::ostringstream csv;
    csv << csv_header;
    csv << "model,direction,value\n";
    double overall_min = 1.0;
    nlohmann::json per_model;
    for (const auto& [name, model] : models) {
      const RepresentabilityVector rep = representability(*model);
      double model_min = 1.0;
      nlohmann::json values = nlohmann::json::array();
      for (int i = 0; i < dirs; ++i) {
        csv << name << ',' << i << ',' << fmt(rep.values[i]) << '\n';
        model_min = std::min(model_min, rep.values[i]);
        values.push_back(rep.values[i]);
      }
      per_model[name] = values;
      overall_min = std::min(overall_min, model_min);
    }
    write_text_file(result.out_dir / "metrics" / "representability.csv", csv.str());
    summary["final"]["representability"] = per_model;
    summary["final"]["representability_min"] = overall_min;
  }

  if (models.size() > 1) {
    double dist_sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < models.size(); ++i)
      for (std::size_t j = i + 1; j < models.size(); ++j) {
        dist_sum += weight_distance(*models[i].second, *models[j].second);
        ++pairs;
      }
    summary["final"]["mean_pairwise_weight_distance"] = dist_sum / pairs;
  }

  if (cfg.eval.probe && !out.trace.diverged) {
    const std::uint64_t split_seed = Rng(cfg.master_seed).derive(kSplitTag).seed();
    const std::uint64_t probe_seed = Rng(cfg.master_seed).derive(kProbeTag).seed();
    if (cfg.algorithm == "featarc" || cfg.algorithm == "local") {
      // Clustered protocol: each source is probed with its assigned model on
      // its own split, and accuracies are averaged.
      std::vector<LocalDataset> train_splits(sources.size()), test_splits(sources.size());
      for (std::size_t i = 0; i < sources.size(); ++i)
        split_train_test(sources[i], cfg.eval.test_fraction,
                         Rng(split_seed).derive(static_cast<std::uint64_t>(i)).seed(),
                         train_splits[i], test_splits[i]);
      double acc = 0.0;
      if (cfg.algorithm == "featarc") {
        acc = probe_featarc(*out.cluster_state, train_splits, test_splits, cfg.eval.probe_epochs,
                            cfg.eval.probe_lr, probe_seed, cfg.eval.normalize_features);
      } else {
        for (std::size_t i = 0; i < sources.size(); ++i)
          acc += linear_probe(out.trace.final_models[i], train_splits[i], test_splits[i],
                              cfg.eval.probe_epochs, cfg.eval.probe_lr,
                              probe_seed_for(probe_seed, static_cast<int>(i)),
                              cfg.eval.normalize_features)
                     .top1_accuracy;
        acc /= static_cast<double>(sources.size());
      }
      summary["final"]["probe"] = {{"protocol", "per-source"}, {"accuracy", acc}};
    } else {
      LocalDataset train, test;
      split_train_test(pool_sources(sources), cfg.eval.test_fraction, split_seed, train, test);
      double acc = 0.0;
      ProbeResult first;
      for (std::size_t i = 0; i < models.size(); ++i) {
        const ProbeResult pr =
            linear_probe(*models[i].second, train, test, cfg.eval.probe_epochs, cfg.eval.probe_lr,
                         probe_seed_for(probe_seed, static_cast<int>(i)),
                         cfg.eval.normalize_features);
        if (i == 0) first = pr;
        acc += pr.top1_accuracy;
      }
      acc /= static_cast<double>(models.size());
      summary["final"]["probe"] = {{"protocol", "centralized"},
                                   {"accuracy", acc},
                                   {"converged", first.converged},
                                   {"num_train", first.num_train},
                                   {"num_test", first.num_test}};
      std::ostringstream csv;
      csv << csv_header;
      csv << "class,accuracy\n";
      for (Eigen::Index c = 0; c < first.per_class_accuracy.size(); ++c)
        csv << c << ',' << fmt(first.per_class_accuracy[c]) << '\n';
      write_text_file(result.out_dir / "metrics" / "probe_per_class.csv", csv.str());
    }
  }

  if (cfg.output.save_models) {
    for (const auto& [name, model] : models)
      save_encoder(result.out_dir / "models" / (name + ".csv"), *model);
  }

  write_text_file(result.out_dir / "summary.json", summary.dump(2) + "\n");
  result.summary = std::move(summary);
  result.trace = std::move(out.trace);
  result.exit_code = result.trace.diverged ? 2 : 0;
  return result;
}

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

}  // namespace

std::vector<ExperimentResult> run_sweep(const ExperimentConfig& base) {
  if (!base.sweep) throw ConfigError("sweep", "config has no [sweep] section");
  base.validate();

  std::vector<ExperimentConfig> cells;
  for (std::size_t i = 0; i < base.sweep->values.size(); ++i) {
    ExperimentConfig cell = base;
    cell.sweep.reset();
    apply_config_override(cell, base.sweep->parameter, base.sweep->values[i]);
    cell.output.directory =
        base.output.directory + "/cell_" + std::to_string(i) + "_" + sanitize(base.sweep->values[i]);
    cell.validate();
    cells.push_back(std::move(cell));
  }

  // Cells are independent and write to distinct directories, so they fan out.
  std::vector<ExperimentResult> results = parallel_map(
      static_cast<int>(cells.size()),
      [&](int i) { return run_experiment(cells[static_cast<std::size_t>(i)]); });

  nlohmann::json index;
  index["parameter"] = base.sweep->parameter;
  index["master_seed"] = base.master_seed;
  index["cells"] = nlohmann::json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    nlohmann::json entry;
    entry["value"] = base.sweep->values[i];
    entry["directory"] = cells[i].output.directory;
    entry["exit_code"] = results[i].exit_code;
    if (results[i].summary.contains("final")) entry["final"] = results[i].summary["final"];
    index["cells"].push_back(entry);
  }
  write_text_file(base.resolved_output_dir() / "sweep_summary.json", index.dump(2) + "\n");
  return results;
}

// ---- verification commands ----

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Theorem1Report verify_theorem1(const std::vector<int>& d_grid, int K, int m, int num_seeds,
                               long majority_count, long minority_count, double threshold,
                               std::uint64_t seed) {
  if (d_grid.empty()) throw std::invalid_argument("verify_theorem1: empty d grid");
  detail::StopWatch watch;
  Theorem1Report report;
  report.d_grid = d_grid;
  report.threshold = threshold;

  for (int d : d_grid) {
    auto cells = parallel_map(num_seeds, [&](int i) {
      Theorem1Report::Cell cell;
      cell.d = d;
      cell.seed_index = i;
      TheoryGenConfig gen{d,
                          K,
                          majority_count,
                          minority_count,
                          std::nullopt,
                          std::nullopt,
                          Rng(seed)
                              .derive(static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(i))
                              .seed()};
      const auto sources = generate_theory_dataset(gen);
      double min_local = 1.0;
      for (int k = 0; k < K; ++k) {
        const TopEigs top = covariance_top_eigs(sources[static_cast<std::size_t>(k)].samples, m);
        const RepresentabilityVector rep = representability_from_basis(top.eigenvectors);
        for (int dir = 0; dir < K; ++dir) {
          if (dir == k) continue;
          min_local = std::min(min_local, rep.values[dir]);
        }
      }
      cell.min_local_nonowned = min_local;
      const LocalDataset pooled = pool_sources(sources);
      const TopEigs top = covariance_top_eigs(pooled.samples, m);
      const RepresentabilityVector rep = representability_from_basis(top.eigenvectors);
      cell.min_global = 1.0;
      for (int dir = 0; dir < K; ++dir) cell.min_global = std::min(cell.min_global, rep.values[dir]);
      return cell;
    });
    std::vector<double> local_mins;
    for (const auto& c : cells) {
      report.cells.push_back(c);
      local_mins.push_back(c.min_local_nonowned);
    }
    report.median_min_local.push_back(median(local_mins));
  }

  report.pass_local = true;
  report.pass_global = true;
  for (const auto& c : report.cells) {
    if (c.d < report.threshold_min_d) continue;
    report.pass_local = report.pass_local && c.min_local_nonowned >= threshold;
    report.pass_global = report.pass_global && c.min_global >= threshold;
  }
  report.pass_trend = true;
  for (std::size_t i = 1; i < report.median_min_local.size(); ++i)
    report.pass_trend =
        report.pass_trend && report.median_min_local[i] >= report.median_min_local[i - 1];
  report.pass = report.pass_local && report.pass_global && report.pass_trend;
  report.seconds = watch.ms() / 1000.0;
  return report;
}

nlohmann::json Theorem1Report::to_json() const {
  nlohmann::json j;
  j["d_grid"] = d_grid;
  j["threshold"] = threshold;
  j["threshold_min_d"] = threshold_min_d;
  j["median_min_local_nonowned"] = median_min_local;
  j["pass_local"] = pass_local;
  j["pass_global"] = pass_global;
  j["pass_trend"] = pass_trend;
  j["pass"] = pass;
  j["seconds"] = seconds;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    j["cells"].push_back({{"d", c.d},
                          {"seed_index", c.seed_index},
                          {"min_local_nonowned", c.min_local_nonowned},
                          {"min_global", c.min_global}});
  }
  return j;
}

std::string Theorem1Report::summary_text() const {
  std::ostringstream out;
  out << "representability check: ";
  for (std::size_t i = 0; i < d_grid.size(); ++i)
    out << "d=" << d_grid[i] << " median_min=" << median_min_local[i] << "  ";
  out << "\n  local>=" << threshold << " (d>=" << threshold_min_d << "): "
      << (pass_local ? "PASS" : "FAIL") << "; global>=" << threshold << ": "
      << (pass_global ? "PASS" : "FAIL") << "; trend non-decreasing: "
      << (pass_trend ? "PASS" : "FAIL") << "\n  overall: " << (pass ? "PASS" : "FAIL") << " ("
      << seconds << " s)";
  return out.str();
}

Prop1Report verify_prop1(int d, int K, int num_seeds, long majority_count, long minority_count,
                         double factor, double rep_threshold, std::uint64_t seed) {
  detail::StopWatch watch;
  Prop1Report report;
  report.factor = factor;
  report.rep_threshold = rep_threshold;
  const int m = 2 * K;

  auto per_seed = parallel_map(num_seeds, [&](int i) {
    std::vector<Prop1Report::Cell> cells;
    TheoryGenConfig gen{
        d, K, majority_count, minority_count, std::nullopt, std::nullopt,
        Rng(seed).derive(static_cast<std::uint64_t>(i)).seed()};
    const auto sources = generate_theory_dataset(gen);
    for (int k = 0; k < K; ++k) {
      Prop1Report::Cell cell;
      cell.seed_index = i;
      cell.source = k;
      const MarginSolution sol =
          margin_problem_solve(sources[static_cast<std::size_t>(k)], 2 * K, 1e-6);
      const FactorPair pair = min_norm_factorize(sol.w_tilde, m);
      cell.corr_own = feature_correlation(pair, k);
      cell.max_corr_other = 0.0;
      for (int j = 0; j < K; ++j) {
        if (j == k) continue;
        cell.max_corr_other = std::max(cell.max_corr_other, feature_correlation(pair, j));
      }
      cell.ratio = cell.max_corr_other > 0.0
                       ? cell.corr_own / cell.max_corr_other
                       : std::numeric_limits<double>::infinity();
      const TopEigs top = covariance_top_eigs(sources[static_cast<std::size_t>(k)].samples, m);
      const RepresentabilityVector rep = representability_from_basis(top.eigenvectors);
      cell.min_ssl_rep_other = 1.0;
      for (int j = 0; j < K; ++j) {
        if (j == k) continue;
        cell.min_ssl_rep_other = std::min(cell.min_ssl_rep_other, rep.values[j]);
      }
      cells.push_back(cell);
    }
    return cells;
  });

  report.pass = true;
  for (const auto& cells : per_seed) {
    for (const auto& c : cells) {
      report.cells.push_back(c);
      report.pass = report.pass && c.ratio >= factor && c.min_ssl_rep_other > rep_threshold;
    }
  }
  report.seconds = watch.ms() / 1000.0;
  return report;
}

nlohmann::json Prop1Report::to_json() const {
  nlohmann::json j;
  j["factor"] = factor;
  j["rep_threshold"] = rep_threshold;
  j["pass"] = pass;
  j["seconds"] = seconds;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    j["cells"].push_back({{"seed_index", c.seed_index},
                          {"source", c.source},
                          {"corr_own", c.corr_own},
                          {"max_corr_other", c.max_corr_other},
                          {"ratio", number_or_null(c.ratio)},
                          {"min_ssl_rep_other", c.min_ssl_rep_other}});
  }
  return j;
}

std::string Prop1Report::summary_text() const {
  double min_ratio = std::numeric_limits<double>::infinity();
  double min_rep = 1.0;
  for (const auto& c : cells) {
    min_ratio = std::min(min_ratio, c.ratio);
    min_rep = std::min(min_rep, c.min_ssl_rep_other);
  }
  std::ostringstream out;
  out << "margin-feature contrast: min corr ratio " << min_ratio << " (need >= " << factor
      << "), min SSL rep " << min_rep << " (need > " << rep_threshold << ") -> "
      << (pass ? "PASS" : "FAIL") << " (" << seconds << " s)";
  return out.str();
}

EquivalenceReport verify_equivalence(int d, int m, int steps, double learning_rate, int num_seeds,
                                     std::uint64_t seed, double angle_tol, double gap_tol) {
  detail::StopWatch watch;
  EquivalenceReport report;
  report.angle_tol = angle_tol;
  report.gap_tol = gap_tol;

  auto cells = parallel_map(num_seeds, [&](int i) {
    EquivalenceReport::Cell cell;
    cell.seed_index = i;
    Rng rng = Rng(seed).derive(static_cast<std::uint64_t>(i));
    Matrix g(d, 2 * d);
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
    Matrix x = Matrix::Zero(d, d);
    x.selfadjointView<Eigen::Lower>().rankUpdate(g, 1.0 / static_cast<double>(2 * d));
    x.triangularView<Eigen::StrictlyUpper>() = x.transpose();

    const LinearEncoder oracle = ssl_minimizer_oracle(x, m);
    const double loss_star = linear_ssl_loss_expected(oracle, x);
    const EigenSystem sys = symmetric_eig(x);
    const double lambda_max = sys.eigenvalues[0];
    const double gamma = learning_rate > 0.0 ? learning_rate : 0.2 / lambda_max;

    LinearEncoder enc;
    enc.weight.resize(m, d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index c = 0; c < d; ++c) enc.weight(r, c) = scale * rng.normal();

    const double grad_stop = 1e-12 * (1.0 + lambda_max * std::sqrt(lambda_max));
    int used = steps;
    for (int s = 0; s < steps; ++s) {
      const Matrix grad = linear_ssl_gradient(enc, x);
      if (grad.norm() <= grad_stop) {
        used = s;
        break;
      }
      enc.weight -= gamma * grad;
    }
    cell.steps_used = used;
    cell.angle = principal_angle(enc.weight, oracle.weight);
    cell.relative_gap =
        (linear_ssl_loss_expected(enc, x) - loss_star) / std::max(1e-300, std::abs(loss_star));
    return cell;
  });

  report.pass = true;
  for (const auto& c : cells) {
    report.cells.push_back(c);
    report.pass = report.pass && c.angle <= angle_tol && c.relative_gap <= gap_tol;
  }
  report.seconds = watch.ms() / 1000.0;
  return report;
}

nlohmann::json EquivalenceReport::to_json() const {
  nlohmann::json j;
  j["angle_tol"] = angle_tol;
  j["gap_tol"] = gap_tol;
  j["pass"] = pass;
  j["seconds"] = seconds;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    j["cells"].push_back({{"seed_index", c.seed_index},
                          {"angle", c.angle},
                          {"relative_gap", c.relative_gap},
                          {"steps_used", c.steps_used}});
  }
  return j;
}

std::string EquivalenceReport::summary_text() const {
  double max_angle = 0.0;
  double max_gap = 0.0;
  for (const auto& c : cells) {
    max_angle = std::max(max_angle, c.angle);
    max_gap = std::max(max_gap, c.relative_gap);
  }
  std::ostringstream out;
  out << "spectral equivalence: max angle " << max_angle << " (tol " << angle_tol
      << "), max relative gap " << max_gap << " (tol " << gap_tol << ") -> "
      << (pass ? "PASS" : "FAIL") << " (" << seconds << " s)";
  return out.str();
}

}  // namespace decssl
