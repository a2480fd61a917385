#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "decssl/rng.hpp"
#include "decssl/types.hpp"

namespace decssl {

enum class ObjectiveFlavor { linear_ssl, infonce, simsiam, supervised_softmax };

std::string to_string(ObjectiveFlavor f);
ObjectiveFlavor flavor_from_string(const std::string& s);

struct FedConfig {
  int rounds = 50;                  // T
  std::optional<int> local_epochs;  // E; exactly one of epochs/steps must be set
  std::optional<int> local_steps;   // delta, steps per round
  double participation = 1.0;       // rho in (0,1]
  double learning_rate = 0.02;      // gamma
  int batch_size = 64;
  ObjectiveFlavor flavor = ObjectiveFlavor::linear_ssl;
  bool expected_gradient = false;  // linear_ssl: use the exact local gradient
  double temperature = 0.5;        // infonce
  bool weighted_aggregation = false;
  int embedding_dim = 0;  // m; 0 resolves to 2K at run time
  bool learnable_predictor = false;
  bool trace_oracle_angle = true;
  std::uint64_t seed = 0;

  void validate(int num_sources) const;
  int steps_for(long dataset_size) const;
  int resolved_embedding_dim(int num_sources) const {
    return embedding_dim > 0 ? embedding_dim : 2 * num_sources;
  }
};

/// Options consumed by a single local update.
struct UpdateOptions {
  ObjectiveFlavor flavor = ObjectiveFlavor::linear_ssl;
  bool expected_gradient = false;
  double temperature = 0.5;
  int batch_size = 64;

  static UpdateOptions from(const FedConfig& cfg) {
    return {cfg.flavor, cfg.expected_gradient, cfg.temperature, cfg.batch_size};
  }
};

/// Feature-alignment regularizer toward a frozen model (Algorithm 2 term).
/// lambda == 0 leaves the update byte-identical to an unregularized one.
struct AlignmentReg {
  const LinearEncoder* frozen = nullptr;
  double lambda = 0.0;
};

/// One SGD step on the flavor's loss, drawing batch indices and augmentations
/// from rng. covariance (when given) backs the expected-gradient linear mode.
/// Returns the step's loss. Throws NumericalDivergence on non-finite values.
double sgd_step(LinearEncoder& model, const LocalDataset& dataset, const UpdateOptions& opt,
                double learning_rate, const Matrix* covariance, Rng& rng,
                const AlignmentReg* align = nullptr);

/// Runs `steps` gradient steps of the chosen flavor from `model`; steps == 0
/// returns the model unchanged. An alignment regularizer with lambda == 0 (or
/// none) leaves the result byte-identical under a shared rng.
LinearEncoder local_update(const LinearEncoder& model, const LocalDataset& dataset, int steps,
                           double learning_rate, const UpdateOptions& opt, Rng& rng,
                           const AlignmentReg* align = nullptr);

/// Deterministic per-dataset loss used for trace records: the exact expected
/// form for the linear flavor, a seeded full-pass evaluation otherwise.
double eval_loss(const LinearEncoder& model, const LocalDataset& dataset, const UpdateOptions& opt,
                 std::uint64_t eval_seed);

/// ceil(rho*K) distinct source ids in ascending order, seeded by (seed, round).
std::vector<int> sample_participants(int num_sources, double participation, std::uint64_t seed,
                                     int round_index);

/// Shared seeded Gaussian(0, 1/d) initialization used by every training driver.
LinearEncoder init_encoder(const FedConfig& cfg, int embed_dim, Eigen::Index input_dim);

/// One FedAvg round: sample participants, run local updates from the broadcast
/// global model, return the (by default unweighted) mean of the returns.
LinearEncoder fedavg_round(const LinearEncoder& global, const std::vector<LocalDataset>& sources,
                           const FedConfig& cfg, int round_index);

// ---- topologies & gossip ----

enum class TopologyKind { star, cycle, binary_tree, random_graph, complete };

std::string to_string(TopologyKind k);
TopologyKind topology_from_string(const std::string& s);

struct Topology {
  TopologyKind kind = TopologyKind::complete;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> adjacency;  // symmetric, zero diagonal
  double edge_probability = 0.0;

  int num_nodes() const { return static_cast<int>(adjacency.rows()); }
  int degree(int i) const;
  /// Symmetric doubly-stochastic mixing weights 1/(1+max(deg_i,deg_j)).
  Matrix metropolis_matrix() const;
};

bool graph_connected(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adjacency);

Topology build_topology(TopologyKind kind, int num_nodes, double edge_probability,
                        std::uint64_t seed);

/// One gossip round: every node runs its local update, then replaces its
/// weights with the Metropolis-weighted average over itself and neighbors.
std::vector<LinearEncoder> gossip_round(const std::vector<LinearEncoder>& models,
                                        const Topology& topology,
                                        const std::vector<LocalDataset>& sources,
                                        const FedConfig& cfg, int round_index);

// ---- traces & drivers ----

struct RoundRecord {
  int round = 0;
  double mean_local_loss = std::numeric_limits<double>::quiet_NaN();
  double global_loss = std::numeric_limits<double>::quiet_NaN();
  double principal_angle_to_oracle = std::numeric_limits<double>::quiet_NaN();
  double consensus_mean_distance = std::numeric_limits<double>::quiet_NaN();
  double consensus_max_distance = std::numeric_limits<double>::quiet_NaN();
  double wall_time_ms = 0.0;
  std::vector<double> node_losses;     // decentralized runs
  std::vector<double> node_angles;     // decentralized runs
  std::vector<int> assignments;        // clustered runs
  std::vector<int> cluster_sizes;      // clustered runs
  std::vector<double> mean_alignment;  // clustered runs
};

struct TrainingTrace {
  std::vector<RoundRecord> rounds;
  std::vector<LinearEncoder> final_models;
  bool diverged = false;
  int diverged_source = -1;
  std::string divergence_message;
};

/// Field-wise equality ignoring wall_time_ms.
bool trace_equal_bitwise(const TrainingTrace& a, const TrainingTrace& b);
bool encoders_equal_bitwise(const LinearEncoder& a, const LinearEncoder& b);

TrainingTrace run_fedavg(const std::vector<LocalDataset>& sources, const FedConfig& cfg);

TrainingTrace run_decentralized(const std::vector<LocalDataset>& sources, const Topology& topology,
                                const FedConfig& cfg);

/// K independent local trainings (no communication); final_models holds one
/// model per source.
TrainingTrace run_local(const std::vector<LocalDataset>& sources, const FedConfig& cfg);

/// Centralized training on the union of all sources.
TrainingTrace run_central(const std::vector<LocalDataset>& sources, const FedConfig& cfg);

}  // namespace decssl
