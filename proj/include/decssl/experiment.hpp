#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "decssl/config.hpp"
#include "decssl/fedsim.hpp"

namespace decssl {

struct ExperimentResult {
  int exit_code = 0;  // 0 success, 2 runtime divergence
  TrainingTrace trace;
  nlohmann::json summary;
  std::filesystem::path out_dir;
};

/// Executes data -> train -> eval and writes resolved_config.ini, trace.jsonl,
/// summary.json, and metrics/*.csv into the output directory. Idempotent for
/// a fixed config.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Runs one cell per sweep value, each into its own subdirectory, and writes
/// a sweep_summary.json index.
std::vector<ExperimentResult> run_sweep(const ExperimentConfig& base);

/// Builds the source datasets described by a config's data section; reports
/// the partition used for csv data through out_spec when non-null.
std::vector<LocalDataset> build_sources(const ExperimentConfig& cfg,
                                        PartitionSpec* out_spec = nullptr);

// ---- verification reports ----

struct Theorem1Report {
  struct Cell {
    int d = 0;
    int seed_index = 0;
    double min_local_nonowned = 0.0;  // min over sources k and directions e_i, i != k
    double min_global = 0.0;          // min over directions e_0..e_{K-1}
  };
  std::vector<int> d_grid;
  std::vector<Cell> cells;
  std::vector<double> median_min_local;  // per d, median over seeds
  double threshold = 0.9;
  int threshold_min_d = 512;
  bool pass_local = false;
  bool pass_global = false;
  bool pass_trend = false;
  bool pass = false;
  double seconds = 0.0;

  nlohmann::json to_json() const;
  std::string summary_text() const;
};

/// Representability of the exact local and global minimizers across a
/// dimension grid: locals must represent every non-owned anchor direction,
/// the global every anchor direction, and the trend must not decrease with d.
Theorem1Report verify_theorem1(const std::vector<int>& d_grid, int K, int m, int num_seeds,
                               long majority_count, long minority_count, double threshold,
                               std::uint64_t seed);

struct Prop1Report {
  struct Cell {
    int seed_index = 0;
    int source = 0;
    double corr_own = 0.0;
    double max_corr_other = 0.0;
    double ratio = 0.0;           // corr_own / max_corr_other
    double min_ssl_rep_other = 0.0;  // SSL-oracle representability at the same directions
  };
  std::vector<Cell> cells;
  double factor = 5.0;
  double rep_threshold = 0.9;
  bool pass = false;
  double seconds = 0.0;

  nlohmann::json to_json() const;
  std::string summary_text() const;
};

/// Margin-classifier feature correlations concentrate on the owned direction
/// while the SSL oracle still represents the non-owned ones.
Prop1Report verify_prop1(int d, int K, int num_seeds, long majority_count, long minority_count,
                         double factor, double rep_threshold, std::uint64_t seed);

struct EquivalenceReport {
  struct Cell {
    int seed_index = 0;
    double angle = 0.0;
    double relative_gap = 0.0;
    int steps_used = 0;
  };
  std::vector<Cell> cells;
  double angle_tol = 1e-2;
  double gap_tol = 1e-6;
  bool pass = false;
  double seconds = 0.0;

  nlohmann::json to_json() const;
  std::string summary_text() const;
};

/// Gradient descent on the linear SSL objective reaches the spectral
/// minimizer: principal angle and relative objective gap against the oracle
/// on random PSD instances. learning_rate <= 0 selects 0.2 / lambda_max.
EquivalenceReport verify_equivalence(int d, int m, int steps, double learning_rate, int num_seeds,
                                     std::uint64_t seed, double angle_tol = 1e-2,
                                     double gap_tol = 1e-6);

}  // namespace decssl
