#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "decssl/featarc.hpp"

namespace decssl {

/// Config validation error; `field` names the offending section.key.
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& field_name, const std::string& message)
      : std::runtime_error("config error at '" + field_name + "': " + message),
        field(field_name) {}
  std::string field;
};

struct DataConfig {
  std::string kind = "theory";  // theory | csv
  int d = 256;
  int sources = 5;  // K
  long majority_count = 200;
  long minority_count = 10;
  std::optional<double> tau_scale;  // unset = d^{1/5}
  std::optional<double> mu_noise;   // unset = d^{-1/5}
  std::string csv_path;
  std::string features_csv;        // feature-cluster partition input (defaults to csv_path)
  std::string partition = "none";  // none | dirichlet | skewness | feature-cluster
  double partition_param = 0.5;
  bool input_shift = false;
};

struct EvalConfig {
  bool probe = false;
  int probe_epochs = 300;
  double probe_lr = 0.5;
  double test_fraction = 0.25;
  bool normalize_features = false;
  bool representability = true;
};

struct OutputConfig {
  std::string directory = "out";
  bool save_models = false;
};

struct SweepConfig {
  std::string parameter;            // dotted section.key, e.g. data.partition_param
  std::vector<std::string> values;  // one experiment cell per value
};

struct ExperimentConfig {
  std::uint64_t master_seed = 42;
  DataConfig data;
  std::string algorithm = "fedavg";  // fedavg | gossip | featarc | local | central
  FeatArcConfig train;               // carries FedConfig plus cluster fields
  std::string topology = "complete";
  double edge_probability = 0.7;
  EvalConfig eval;
  OutputConfig output;
  std::optional<SweepConfig> sweep;

  void validate() const;
  /// Output directory with the DECSSL_OUT_ROOT env prefix applied to
  /// relative paths.
  std::filesystem::path resolved_output_dir() const;
};

ExperimentConfig default_experiment_config();

/// Parses the key/value section format; rejects unknown sections and keys,
/// naming the offender.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Applies one "section.key = value" override (used by sweeps).
void apply_config_override(ExperimentConfig& cfg, const std::string& dotted_key,
                           const std::string& value);

/// Canonical emission with every default materialized; parsing it back gives
/// an equal config, and equal configs emit identical bytes.
std::string emit_resolved_config(const ExperimentConfig& cfg);

}  // namespace decssl
