#include "decssl/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "decssl/datagen.hpp"
#include "decssl/io.hpp"

namespace decssl {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& field, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(field, "expected a boolean (true/false), got '" + v + "'");
}

double parse_num(const std::string& field, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a number, got '" + v + "'");
  }
}

long parse_int(const std::string& field, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& field, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a nonnegative integer, got '" + v + "'");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(v);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void apply_kv(ExperimentConfig& cfg, const std::string& section, const std::string& key,
              const std::string& value) {
  const std::string field = section.empty() ? key : section + "." + key;
  if (section.empty()) {
    if (key == "master_seed") {
      cfg.master_seed = parse_u64(field, value);
      return;
    }
    throw ConfigError(field, "unknown top-level key");
  }
  if (section == "data") {
    auto& d = cfg.data;
    if (key == "kind") d.kind = value;
    else if (key == "d") d.d = static_cast<int>(parse_int(field, value));
    else if (key == "sources") d.sources = static_cast<int>(parse_int(field, value));
    else if (key == "majority_count") d.majority_count = parse_int(field, value);
    else if (key == "minority_count") d.minority_count = parse_int(field, value);
    else if (key == "tau_scale") {
      if (value == "auto") d.tau_scale.reset();
      else d.tau_scale = parse_num(field, value);
    } else if (key == "mu_noise") {
      if (value == "auto") d.mu_noise.reset();
      else d.mu_noise = parse_num(field, value);
    } else if (key == "csv_path") d.csv_path = value;
    else if (key == "features_csv") d.features_csv = value;
    else if (key == "partition") d.partition = value;
    else if (key == "partition_param") d.partition_param = parse_num(field, value);
    else if (key == "input_shift") d.input_shift = parse_bool(field, value);
    else throw ConfigError(field, "unknown key in [data]");
    return;
  }
  if (section == "train") {
    auto& t = cfg.train;
    if (key == "algorithm") cfg.algorithm = value;
    else if (key == "flavor") t.flavor = flavor_from_string(value);
    else if (key == "expected_gradient") t.expected_gradient = parse_bool(field, value);
    else if (key == "rounds") t.rounds = static_cast<int>(parse_int(field, value));
    else if (key == "local_epochs") {
      t.local_epochs = static_cast<int>(parse_int(field, value));
      t.local_steps.reset();
    } else if (key == "local_steps") {
      t.local_steps = static_cast<int>(parse_int(field, value));
      t.local_epochs.reset();
    } else if (key == "participation") t.participation = parse_num(field, value);
    else if (key == "learning_rate") t.learning_rate = parse_num(field, value);
    else if (key == "batch_size") t.batch_size = static_cast<int>(parse_int(field, value));
    else if (key == "embedding_dim") t.embedding_dim = static_cast<int>(parse_int(field, value));
    else if (key == "temperature") t.temperature = parse_num(field, value);
    else if (key == "weighted_aggregation") t.weighted_aggregation = parse_bool(field, value);
    else if (key == "learnable_predictor") t.learnable_predictor = parse_bool(field, value);
    else if (key == "trace_angle") t.trace_oracle_angle = parse_bool(field, value);
    else if (key == "topology") cfg.topology = value;
    else if (key == "edge_probability") cfg.edge_probability = parse_num(field, value);
    else if (key == "clusters") t.num_clusters = static_cast<int>(parse_int(field, value));
    else if (key == "alignment_weight") t.alignment_weight = parse_num(field, value);
    else if (key == "cluster_init") {
      if (value == "shared") t.cluster_init = ClusterInit::shared;
      else if (value == "distinct") t.cluster_init = ClusterInit::distinct;
      else throw ConfigError(field, "expected shared|distinct, got '" + value + "'");
    } else throw ConfigError(field, "unknown key in [train]");
    return;
  }
  if (section == "eval") {
    auto& e = cfg.eval;
    if (key == "probe") e.probe = parse_bool(field, value);
    else if (key == "probe_epochs") e.probe_epochs = static_cast<int>(parse_int(field, value));
    else if (key == "probe_lr") e.probe_lr = parse_num(field, value);
    else if (key == "test_fraction") e.test_fraction = parse_num(field, value);
    else if (key == "normalize_features") e.normalize_features = parse_bool(field, value);
    else if (key == "representability") e.representability = parse_bool(field, value);
    else throw ConfigError(field, "unknown key in [eval]");
    return;
  }
  if (section == "output") {
    auto& o = cfg.output;
    if (key == "directory") o.directory = value;
    else if (key == "save_models") o.save_models = parse_bool(field, value);
    else throw ConfigError(field, "unknown key in [output]");
    return;
  }
  if (section == "sweep") {
    if (!cfg.sweep) cfg.sweep.emplace();
    if (key == "parameter") cfg.sweep->parameter = value;
    else if (key == "values") cfg.sweep->values = split_list(value);
    else throw ConfigError(field, "unknown key in [sweep]");
    return;
  }
  throw ConfigError(section, "unknown section");
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.train.local_epochs = 5;
  cfg.train.local_steps.reset();
  cfg.train.expected_gradient = true;
  return cfg;
}

void ExperimentConfig::validate() const {
  if (data.kind != "theory" && data.kind != "csv")
    throw ConfigError("data.kind", "expected theory|csv, got '" + data.kind + "'");
  if (data.kind == "theory") {
    TheoryGenConfig gen{data.d, data.sources, data.majority_count, data.minority_count,
                        data.tau_scale, data.mu_noise, 0};
    try {
      gen.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("data", e.what());
    }
  } else {
    if (data.csv_path.empty()) throw ConfigError("data.csv_path", "required when kind = csv");
    if (data.partition != "none" && data.partition != "dirichlet" && data.partition != "skewness" &&
        data.partition != "feature-cluster")
      throw ConfigError("data.partition",
                        "expected none|dirichlet|skewness|feature-cluster, got '" + data.partition +
                            "'");
    if (data.partition == "none" && data.sources != 1)
      throw ConfigError("data.sources", "must be 1 when partition = none");
    if (data.partition == "dirichlet" && data.partition_param <= 0.0)
      throw ConfigError("data.partition_param", "dirichlet alpha must be positive");
    if (data.partition == "skewness" &&
        (data.partition_param < 0.0 || data.partition_param > 1.0))
      throw ConfigError("data.partition_param", "skewness beta must be in [0,1]");
  }
  if (algorithm != "fedavg" && algorithm != "gossip" && algorithm != "featarc" &&
      algorithm != "local" && algorithm != "central")
    throw ConfigError("train.algorithm",
                      "expected fedavg|gossip|featarc|local|central, got '" + algorithm + "'");
  try {
    if (algorithm == "featarc") train.validate_featarc(data.sources);
    else train.validate(data.sources);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("train", e.what());
  }
  if (algorithm == "gossip") {
    try {
      topology_from_string(topology);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("train.topology", e.what());
    }
    if (topology == "random-graph" && (edge_probability <= 0.0 || edge_probability > 1.0))
      throw ConfigError("train.edge_probability", "must be in (0,1]");
  }
  if (eval.probe) {
    if (eval.probe_epochs < 1) throw ConfigError("eval.probe_epochs", "must be at least 1");
    if (eval.probe_lr <= 0.0) throw ConfigError("eval.probe_lr", "must be positive");
    if (eval.test_fraction <= 0.0 || eval.test_fraction >= 1.0)
      throw ConfigError("eval.test_fraction", "must be in (0,1)");
  }
  if (output.directory.empty()) throw ConfigError("output.directory", "must not be empty");
  if (sweep) {
    if (sweep->parameter.empty()) throw ConfigError("sweep.parameter", "must not be empty");
    if (sweep->values.empty()) throw ConfigError("sweep.values", "must list at least one value");
  }
}

std::filesystem::path ExperimentConfig::resolved_output_dir() const {
  std::filesystem::path dir(output.directory);
  if (dir.is_relative()) {
    if (const char* root = std::getenv("DECSSL_OUT_ROOT")) dir = std::filesystem::path(root) / dir;
  }
  return dir;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg = default_experiment_config();
  std::string section;
  std::stringstream ss(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(ss, raw)) {
    ++lineno;
    std::string line = raw;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno), "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    apply_kv(cfg, section, key, value);
  }
  cfg.train.seed = cfg.master_seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_text_file(path));
}

void apply_config_override(ExperimentConfig& cfg, const std::string& dotted_key,
                           const std::string& value) {
  const std::size_t dot = dotted_key.find('.');
  if (dot == std::string::npos) {
    apply_kv(cfg, "", dotted_key, value);
  } else {
    apply_kv(cfg, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
  }
  cfg.train.seed = cfg.master_seed;
}

std::string emit_resolved_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "master_seed = " << cfg.master_seed << "\n\n";

  out << "[data]\n";
  out << "kind = " << cfg.data.kind << "\n";
  if (cfg.data.kind == "theory") {
    out << "d = " << cfg.data.d << "\n";
    out << "sources = " << cfg.data.sources << "\n";
    out << "majority_count = " << cfg.data.majority_count << "\n";
    out << "minority_count = " << cfg.data.minority_count << "\n";
    TheoryGenConfig gen{cfg.data.d, cfg.data.sources, cfg.data.majority_count,
                        cfg.data.minority_count, cfg.data.tau_scale, cfg.data.mu_noise, 0};
    out << "tau_scale = " << fmt(gen.resolved_tau_scale()) << "\n";
    out << "mu_noise = " << fmt(gen.resolved_mu_noise()) << "\n";
  } else {
    out << "csv_path = " << cfg.data.csv_path << "\n";
    if (!cfg.data.features_csv.empty()) out << "features_csv = " << cfg.data.features_csv << "\n";
    out << "sources = " << cfg.data.sources << "\n";
    out << "partition = " << cfg.data.partition << "\n";
    out << "partition_param = " << fmt(cfg.data.partition_param) << "\n";
  }
  out << "input_shift = " << (cfg.data.input_shift ? "true" : "false") << "\n\n";

  out << "[train]\n";
  out << "algorithm = " << cfg.algorithm << "\n";
  out << "flavor = " << to_string(cfg.train.flavor) << "\n";
  out << "expected_gradient = " << (cfg.train.expected_gradient ? "true" : "false") << "\n";
  out << "rounds = " << cfg.train.rounds << "\n";
  if (cfg.train.local_steps) out << "local_steps = " << *cfg.train.local_steps << "\n";
  else out << "local_epochs = " << *cfg.train.local_epochs << "\n";
  out << "participation = " << fmt(cfg.train.participation) << "\n";
  out << "learning_rate = " << fmt(cfg.train.learning_rate) << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";
  out << "embedding_dim = " << cfg.train.embedding_dim << "\n";
  out << "temperature = " << fmt(cfg.train.temperature) << "\n";
  out << "weighted_aggregation = " << (cfg.train.weighted_aggregation ? "true" : "false") << "\n";
  out << "learnable_predictor = " << (cfg.train.learnable_predictor ? "true" : "false") << "\n";
  out << "trace_angle = " << (cfg.train.trace_oracle_angle ? "true" : "false") << "\n";
  if (cfg.algorithm == "gossip") {
    out << "topology = " << cfg.topology << "\n";
    out << "edge_probability = " << fmt(cfg.edge_probability) << "\n";
  }
  if (cfg.algorithm == "featarc") {
    out << "clusters = " << cfg.train.num_clusters << "\n";
    out << "alignment_weight = " << fmt(cfg.train.alignment_weight) << "\n";
    out << "cluster_init = "
        << (cfg.train.cluster_init == ClusterInit::shared ? "shared" : "distinct") << "\n";
  }
  out << "\n[eval]\n";
  out << "probe = " << (cfg.eval.probe ? "true" : "false") << "\n";
  out << "probe_epochs = " << cfg.eval.probe_epochs << "\n";
  out << "probe_lr = " << fmt(cfg.eval.probe_lr) << "\n";
  out << "test_fraction = " << fmt(cfg.eval.test_fraction) << "\n";
  out << "normalize_features = " << (cfg.eval.normalize_features ? "true" : "false") << "\n";
  out << "representability = " << (cfg.eval.representability ? "true" : "false") << "\n";

  out << "\n[output]\n";
  out << "directory = " << cfg.output.directory << "\n";
  out << "save_models = " << (cfg.output.save_models ? "true" : "false") << "\n";

  if (cfg.sweep) {
    out << "\n[sweep]\n";
    out << "parameter = " << cfg.sweep->parameter << "\n";
    out << "values = ";
    for (std::size_t i = 0; i < cfg.sweep->values.size(); ++i) {
      if (i > 0) out << ",";
      out << cfg.sweep->values[i];
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace decssl
