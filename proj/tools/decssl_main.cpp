#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "decssl/config.hpp"
#include "decssl/datagen.hpp"
#include "decssl/eval.hpp"
#include "decssl/experiment.hpp"
#include "decssl/io.hpp"

namespace fs = std::filesystem;
using namespace decssl;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

void maybe_write_report(const std::string& out_path, const nlohmann::json& j) {
  if (!out_path.empty()) write_text_file(out_path, j.dump(2) + "\n");
}

int run_train(const std::string& config_path) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  const ExperimentResult result = run_experiment(cfg);
  std::cout << result.summary.dump(2) << "\n";
  if (result.exit_code == 2)
    std::cerr << "training diverged: " << result.trace.divergence_message << "\n";
  return result.exit_code;
}

int run_sweep_cmd(const std::string& config_path) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(config_path);
    if (!cfg.sweep) {
      std::cerr << "config error at 'sweep': missing [sweep] section\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  const auto results = run_sweep(cfg);
  int exit_code = 0;
  for (const auto& r : results) exit_code = std::max(exit_code, r.exit_code);
  std::cout << "sweep finished: " << results.size() << " cells, worst exit code " << exit_code
            << "\n";
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decssl: decentralized self-supervised learning simulator and verifier"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic heterogeneous dataset");
  std::string gen_out = "data";
  int gen_d = 256, gen_k = 5;
  long gen_major = 200, gen_minor = 10;
  double gen_tau = -1.0, gen_mu = -1.0;
  std::uint64_t gen_seed = 0;
  bool gen_shift = false;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--d", gen_d, "ambient dimension");
  gen->add_option("--sources", gen_k, "number of sources K");
  gen->add_option("--majority", gen_major, "samples per majority class");
  gen->add_option("--minority", gen_minor, "samples per minority class");
  gen->add_option("--tau-scale", gen_tau, "anchor spill scale (default d^{1/5})");
  gen->add_option("--mu-noise", gen_mu, "noise level (default d^{-1/5})");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_flag("--input-shift", gen_shift, "apply per-source random orthogonal transforms");

  // partition
  auto* part = app.add_subcommand("partition", "split a labeled CSV dataset into K sources");
  std::string part_csv, part_features, part_scheme = "dirichlet", part_out = "partition.json";
  int part_k = 5;
  double part_param = 0.5;
  std::uint64_t part_seed = 0;
  part->add_option("--csv", part_csv, "dataset CSV (label,v0,...)")->required();
  part->add_option("--features-csv", part_features,
                   "feature vectors for feature-cluster (defaults to --csv)");
  part->add_option("--scheme", part_scheme, "dirichlet|skewness|feature-cluster");
  part->add_option("--param", part_param, "alpha or beta");
  part->add_option("--sources", part_k, "number of sources K");
  part->add_option("--seed", part_seed, "partition seed");
  part->add_option("--out", part_out, "output partition JSON");

  // train
  auto* train = app.add_subcommand("train", "run a config-driven experiment");
  std::string train_config;
  train->add_option("--config", train_config, "experiment config file")->required();

  // probe
  auto* probe = app.add_subcommand("probe", "linear-probe a saved encoder");
  std::string probe_model, probe_train_csv, probe_test_csv;
  int probe_epochs = 300;
  double probe_lr = 0.5;
  std::uint64_t probe_seed = 0;
  bool probe_norm = false;
  probe->add_option("--encoder", probe_model, "encoder weight CSV")->required();
  probe->add_option("--train", probe_train_csv, "train split CSV")->required();
  probe->add_option("--test", probe_test_csv, "test split CSV")->required();
  probe->add_option("--epochs", probe_epochs, "probe epochs");
  probe->add_option("--lr", probe_lr, "probe learning rate");
  probe->add_option("--seed", probe_seed, "probe seed");
  probe->add_flag("--normalize", probe_norm, "normalize features before probing");

  // verify-theorem1
  auto* vt1 = app.add_subcommand("verify-theorem1",
                                 "check local/global minimizer representability across d");
  std::string vt1_grid = "128,512,2048", vt1_out;
  int vt1_k = 3, vt1_m = 6, vt1_seeds = 10;
  long vt1_major = 500, vt1_minor = 20;
  double vt1_threshold = 0.9;
  std::uint64_t vt1_seed = 0;
  vt1->add_option("--d-grid", vt1_grid, "comma-separated dimensions");
  vt1->add_option("--sources", vt1_k, "number of sources K");
  vt1->add_option("--m", vt1_m, "embedding dimension (default 2K)");
  vt1->add_option("--seeds", vt1_seeds, "seeds per grid point");
  vt1->add_option("--majority", vt1_major, "majority class count");
  vt1->add_option("--minority", vt1_minor, "minority class count");
  vt1->add_option("--threshold", vt1_threshold, "representability threshold");
  vt1->add_option("--seed", vt1_seed, "base seed");
  vt1->add_option("--out", vt1_out, "write JSON report here");

  // verify-prop1
  auto* vp1 = app.add_subcommand("verify-prop1",
                                 "check margin-classifier feature concentration vs SSL");
  std::string vp1_out;
  int vp1_d = 512, vp1_k = 3, vp1_seeds = 5;
  long vp1_major = 500, vp1_minor = 20;
  double vp1_factor = 5.0, vp1_rep = 0.9;
  std::uint64_t vp1_seed = 0;
  vp1->add_option("--d", vp1_d, "dimension");
  vp1->add_option("--sources", vp1_k, "number of sources K");
  vp1->add_option("--seeds", vp1_seeds, "number of seeds");
  vp1->add_option("--majority", vp1_major, "majority class count");
  vp1->add_option("--minority", vp1_minor, "minority class count");
  vp1->add_option("--factor", vp1_factor, "required own/other correlation ratio");
  vp1->add_option("--rep-threshold", vp1_rep, "required SSL representability");
  vp1->add_option("--seed", vp1_seed, "base seed");
  vp1->add_option("--out", vp1_out, "write JSON report here");

  // verify-equivalence
  auto* veq = app.add_subcommand("verify-equivalence",
                                 "check gradient descent reaches the spectral minimizer");
  std::string veq_out;
  int veq_d = 64, veq_m = 8, veq_steps = 50000, veq_seeds = 20;
  double veq_lr = 0.0, veq_angle = 1e-2, veq_gap = 1e-6;
  std::uint64_t veq_seed = 0;
  veq->add_option("--d", veq_d, "dimension");
  veq->add_option("--m", veq_m, "embedding dimension");
  veq->add_option("--steps", veq_steps, "max gradient steps");
  veq->add_option("--lr", veq_lr, "learning rate (<=0 selects 0.2/lambda_max)");
  veq->add_option("--seeds", veq_seeds, "number of seeds");
  veq->add_option("--angle-tol", veq_angle, "principal angle tolerance (rad)");
  veq->add_option("--gap-tol", veq_gap, "relative objective gap tolerance");
  veq->add_option("--seed", veq_seed, "base seed");
  veq->add_option("--out", veq_out, "write JSON report here");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run every cell of a config's [sweep] section");
  std::string sweep_config;
  sweep->add_option("--config", sweep_config, "experiment config file with [sweep]")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      TheoryGenConfig cfg;
      cfg.d = gen_d;
      cfg.K = gen_k;
      cfg.majority_count = gen_major;
      cfg.minority_count = gen_minor;
      if (gen_tau > 0.0) cfg.tau_scale = gen_tau;
      if (gen_mu >= 0.0) cfg.mu_noise = gen_mu;
      cfg.seed = gen_seed;
      auto sources = generate_theory_dataset(cfg);
      if (gen_shift) sources = apply_input_shift(sources, Rng(gen_seed).derive(0x51F7).seed());
      fs::create_directories(gen_out);
      nlohmann::json meta;
      meta["d"] = cfg.d;
      meta["sources"] = cfg.K;
      meta["majority_count"] = cfg.majority_count;
      meta["minority_count"] = cfg.minority_count;
      meta["tau_scale"] = cfg.resolved_tau_scale();
      meta["mu_noise"] = cfg.resolved_mu_noise();
      meta["seed"] = cfg.seed;
      meta["input_shift"] = gen_shift;
      for (const auto& ds : sources)
        save_dataset_csv(fs::path(gen_out) / ("source_" + std::to_string(ds.source_id) + ".csv"),
                         ds);
      write_text_file(fs::path(gen_out) / "meta.json", meta.dump(2) + "\n");
      std::cout << "wrote " << sources.size() << " sources to " << gen_out << "\n";
      return 0;
    }
    if (part->parsed()) {
      const LocalDataset pool = load_dataset_csv(part_csv);
      PartitionSpec spec;
      if (part_scheme == "dirichlet") {
        spec = partition_dirichlet(pool.labels, part_k, part_param, part_seed);
      } else if (part_scheme == "skewness") {
        spec = partition_skewness(pool.labels, part_k, part_param, part_seed);
      } else if (part_scheme == "feature-cluster") {
        const LocalDataset feat =
            part_features.empty() ? pool : load_dataset_csv(part_features);
        std::vector<Vector> features;
        for (Eigen::Index i = 0; i < feat.size(); ++i) features.push_back(feat.samples.col(i));
        spec = partition_feature_clusters(features, part_k, part_seed);
        attach_labels(spec, pool.labels);
      } else {
        std::cerr << "unknown scheme: " << part_scheme << "\n";
        return 1;
      }
      save_partition_json(part_out, spec);
      const double emd = heterogeneity_emd(spec, label_histogram(pool.labels));
      std::cout << "wrote " << part_out << " (heterogeneity_emd = " << emd << ")\n";
      return 0;
    }
    if (train->parsed()) return run_train(train_config);
    if (sweep->parsed()) return run_sweep_cmd(sweep_config);
    if (probe->parsed()) {
      const LinearEncoder enc = load_encoder(probe_model);
      const LocalDataset train_ds = load_dataset_csv(probe_train_csv);
      const LocalDataset test_ds = load_dataset_csv(probe_test_csv);
      const ProbeResult r =
          linear_probe(enc, train_ds, test_ds, probe_epochs, probe_lr, probe_seed, probe_norm);
      nlohmann::json j;
      j["top1_accuracy"] = r.top1_accuracy;
      j["num_train"] = r.num_train;
      j["num_test"] = r.num_test;
      j["converged"] = r.converged;
      j["per_class_accuracy"] = nlohmann::json::array();
      for (Eigen::Index c = 0; c < r.per_class_accuracy.size(); ++c)
        j["per_class_accuracy"].push_back(
            std::isnan(r.per_class_accuracy[c]) ? nlohmann::json(nullptr)
                                                : nlohmann::json(r.per_class_accuracy[c]));
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (vt1->parsed()) {
      const auto report = verify_theorem1(parse_int_list(vt1_grid), vt1_k, vt1_m, vt1_seeds,
                                          vt1_major, vt1_minor, vt1_threshold, vt1_seed);
      std::cout << report.summary_text() << "\n";
      maybe_write_report(vt1_out, report.to_json());
      return report.pass ? 0 : 1;
    }
    if (vp1->parsed()) {
      const auto report = verify_prop1(vp1_d, vp1_k, vp1_seeds, vp1_major, vp1_minor, vp1_factor,
                                       vp1_rep, vp1_seed);
      std::cout << report.summary_text() << "\n";
      maybe_write_report(vp1_out, report.to_json());
      return report.pass ? 0 : 1;
    }
    if (veq->parsed()) {
      const auto report = verify_equivalence(veq_d, veq_m, veq_steps, veq_lr, veq_seeds, veq_seed,
                                             veq_angle, veq_gap);
      std::cout << report.summary_text() << "\n";
      maybe_write_report(veq_out, report.to_json());
      return report.pass ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const NumericalDivergence& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
