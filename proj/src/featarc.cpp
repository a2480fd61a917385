#include "decssl/featarc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "decssl/objectives.hpp"
#include "decssl/spectral.hpp"
#include "fed_internal.hpp"

namespace decssl {

using detail::eval_seed_for;
using detail::local_stream;
using detail::StopWatch;

void ClusterState::validate() const {
  if (cluster_models.empty() || local_models.empty())
    throw std::invalid_argument("ClusterState: empty model lists");
  if (assignments.size() != local_models.size())
    throw std::invalid_argument("ClusterState: assignment/local size mismatch");
  for (int a : assignments) {
    if (a < 0 || a >= num_clusters())
      throw std::invalid_argument("ClusterState: assignment out of range");
  }
}

void FeatArcConfig::validate_featarc(int num_sources) const {
  validate(num_sources);
  if (num_clusters < 1) throw std::invalid_argument("FeatArcConfig: num_clusters must be positive");
  if (num_clusters > num_sources)
    throw std::invalid_argument("FeatArcConfig: num_clusters must not exceed K");
  if (alignment_weight < 0.0)
    throw std::invalid_argument("FeatArcConfig: alignment_weight must be nonnegative");
  if (weighted_aggregation)
    throw std::invalid_argument("FeatArcConfig: clustered aggregation is unweighted");
  if (pin_assignments) {
    if (static_cast<int>(pin_assignments->size()) != num_sources)
      throw std::invalid_argument("FeatArcConfig: pin_assignments must have one entry per source");
    for (int a : *pin_assignments)
      if (a < 0 || a >= num_clusters)
        throw std::invalid_argument("FeatArcConfig: pinned assignment out of range");
  }
}

namespace {

// Mean cosine distance between two models' features over one dataset, with the
// zero-feature skip rule.
std::pair<double, bool> alignment_entry(const LinearEncoder& cluster, const LinearEncoder& local,
                                        const LocalDataset& ds) {
  const Matrix zc = cluster.weight * ds.samples;
  const Matrix zl = local.weight * ds.samples;
  double acc = 0.0;
  long counted = 0;
  for (Eigen::Index s = 0; s < ds.size(); ++s) {
    if (zc.col(s).squaredNorm() == 0.0 || zl.col(s).squaredNorm() == 0.0) continue;
    acc += cosine_distance(zc.col(s), zl.col(s));
    ++counted;
  }
  if (counted == 0) return {0.0, true};
  return {acc / static_cast<double>(counted), false};
}

}  // namespace

AlignmentMatrix alignment_matrix(const ClusterState& state,
                                 const std::vector<LocalDataset>& sources) {
  state.validate();
  if (sources.size() != state.local_models.size())
    throw std::invalid_argument("alignment_matrix: source count mismatch");
  const int k = state.num_sources();
  const int c = state.num_clusters();
  AlignmentMatrix out;
  out.values.resize(k, c);
  out.degenerate.setConstant(k, c, false);
  for (int i = 0; i < k; ++i) {
    const LocalDataset& ds = detail::source_by_id(sources, i);
    for (int j = 0; j < c; ++j) {
      const auto [value, degenerate] =
          alignment_entry(state.cluster_models[static_cast<std::size_t>(j)],
                          state.local_models[static_cast<std::size_t>(i)], ds);
      out.values(i, j) = value;
      out.degenerate(i, j) = degenerate;
    }
  }
  return out;
}

std::vector<int> assign_clusters(const Matrix& alignment,
                                 const std::optional<std::vector<int>>& pin) {
  const int k = static_cast<int>(alignment.rows());
  if (pin) {
    if (static_cast<int>(pin->size()) != k)
      throw std::invalid_argument("assign_clusters: pin size mismatch");
    return *pin;
  }
  std::vector<int> out(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < k; ++i) {
    int best = 0;
    double best_val = alignment(i, 0);
    for (int j = 1; j < alignment.cols(); ++j) {
      if (alignment(i, j) < best_val) {  // strict: ties keep the lowest index
        best_val = alignment(i, j);
        best = j;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

LinearEncoder local_update_far(const LinearEncoder& theta, const LocalDataset& dataset, int steps,
                               double learning_rate, double lambda, const UpdateOptions& opt,
                               Rng& rng) {
  if (lambda < 0.0) throw std::invalid_argument("local_update_far: lambda must be nonnegative");
  const AlignmentReg reg{&theta, lambda};
  return local_update(theta, dataset, steps, learning_rate, opt, rng, &reg);
}

ClusterState featarc_round(const ClusterState& state, const std::vector<LocalDataset>& sources,
                           const FeatArcConfig& cfg, int round_index) {
  state.validate();
  detail::check_sources(sources);
  const int k = state.num_sources();
  const int c = state.num_clusters();
  const UpdateOptions opt = UpdateOptions::from(cfg);

  const auto participants = sample_participants(k, cfg.participation, cfg.seed, round_index);
  const AlignmentMatrix align = alignment_matrix(state, sources);

  ClusterState next = state;
  next.round = state.round + 1;

  std::vector<std::vector<std::pair<int, const LinearEncoder*>>> members(
      static_cast<std::size_t>(c));
  for (int id : participants) {
    const LocalDataset& ds = detail::source_by_id(sources, id);
    Matrix row = align.values.row(id);
    std::vector<int> choice =
        assign_clusters(row, cfg.pin_assignments
                                 ? std::optional<std::vector<int>>(std::vector<int>{
                                       (*cfg.pin_assignments)[static_cast<std::size_t>(id)]})
                                 : std::nullopt);
    const int cluster = choice[0];
    next.assignments[static_cast<std::size_t>(id)] = cluster;
    Rng rng = local_stream(cfg.seed, id, round_index);
    next.local_models[static_cast<std::size_t>(id)] =
        local_update_far(state.cluster_models[static_cast<std::size_t>(cluster)], ds,
                         cfg.steps_for(ds.size()), cfg.learning_rate, cfg.alignment_weight, opt,
                         rng);
    members[static_cast<std::size_t>(cluster)].emplace_back(
        id, &next.local_models[static_cast<std::size_t>(id)]);
  }
  for (int j = 0; j < c; ++j) {
    if (members[static_cast<std::size_t>(j)].empty()) continue;  // retain previous model
    next.cluster_models[static_cast<std::size_t>(j)] =
        detail::average_models(members[static_cast<std::size_t>(j)], nullptr);
  }
  return next;
}

ClusterState init_cluster_state(const std::vector<LocalDataset>& sources,
                                const FeatArcConfig& cfg) {
  detail::check_sources(sources);
  cfg.validate_featarc(static_cast<int>(sources.size()));
  const int k = static_cast<int>(sources.size());
  const int m = cfg.resolved_embedding_dim(k);
  const Eigen::Index d = sources.front().dim();

  ClusterState state;
  const LinearEncoder shared = init_encoder(cfg, m, d);
  state.local_models.assign(static_cast<std::size_t>(k), shared);
  state.assignments.assign(static_cast<std::size_t>(k), 0);
  state.cluster_models.assign(static_cast<std::size_t>(cfg.num_clusters), shared);
  if (cfg.cluster_init == ClusterInit::distinct) {
    // With every model equal, round-0 alignment ties at exactly -1 and all
    // sources collapse into cluster 0 for good. Fresh draws for clusters
    // 1..C-1 and for the local models let the assignment split on data.
    // Cluster 0 keeps the shared init, so C=1 still reduces to plain fedavg.
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    auto fill = [&](LinearEncoder& enc, Rng rng) {
      for (Eigen::Index r = 0; r < enc.weight.rows(); ++r)
        for (Eigen::Index q = 0; q < enc.weight.cols(); ++q)
          enc.weight(r, q) = scale * rng.normal();
    };
    for (int j = 1; j < cfg.num_clusters; ++j) {
      fill(state.cluster_models[static_cast<std::size_t>(j)],
           Rng(cfg.seed).derive(detail::kClusterInitTag, static_cast<std::uint64_t>(j)));
    }
    for (int i = 0; i < k; ++i) {
      fill(state.local_models[static_cast<std::size_t>(i)],
           Rng(cfg.seed).derive(detail::kClusterInitTag, 0x10C000ull + static_cast<std::uint64_t>(i)));
    }
  }
  return state;
}

FeatArcResult run_featarc(const std::vector<LocalDataset>& sources, const FeatArcConfig& cfg) {
  ClusterState state = init_cluster_state(sources, cfg);
  const int k = state.num_sources();
  const int c = state.num_clusters();
  const int m = cfg.resolved_embedding_dim(k);
  const UpdateOptions opt = UpdateOptions::from(cfg);

  std::optional<LinearEncoder> oracle;
  if (cfg.flavor == ObjectiveFlavor::linear_ssl && cfg.trace_oracle_angle)
    oracle = ssl_minimizer_oracle(global_covariance(sources), m);

  FeatArcResult result;
  long total = 0;
  for (const auto& ds : sources) total += ds.size();

  for (int t = 0; t < cfg.rounds; ++t) {
    StopWatch watch;
    RoundRecord rec;
    rec.round = t;
    const auto participants = sample_participants(k, cfg.participation, cfg.seed, t);
    const AlignmentMatrix align = alignment_matrix(state, sources);

    ClusterState next;
    try {
      next = featarc_round(state, sources, cfg, t);
    } catch (const NumericalDivergence& e) {
      result.trace.diverged = true;
      result.trace.diverged_source = e.source_id;
      result.trace.divergence_message = e.what();
      break;
    }

    double local_loss_sum = 0.0;
    for (int id : participants) {
      const LocalDataset& ds = detail::source_by_id(sources, id);
      local_loss_sum += eval_loss(next.local_models[static_cast<std::size_t>(id)], ds, opt,
                                  eval_seed_for(cfg.seed, id, t));
    }
    rec.mean_local_loss = local_loss_sum / static_cast<double>(participants.size());

    double global_loss = 0.0;
    for (int id = 0; id < k; ++id) {
      const LocalDataset& ds = detail::source_by_id(sources, id);
      const LinearEncoder& assigned =
          next.cluster_models[static_cast<std::size_t>(next.assignments[static_cast<std::size_t>(id)])];
      global_loss += (static_cast<double>(ds.size()) / static_cast<double>(total)) *
                     eval_loss(assigned, ds, opt, eval_seed_for(cfg.seed, id, t));
    }
    rec.global_loss = global_loss;

    if (oracle) {
      double angle_sum = 0.0;
      for (int j = 0; j < c; ++j)
        angle_sum +=
            principal_angle(next.cluster_models[static_cast<std::size_t>(j)].weight, oracle->weight);
      rec.principal_angle_to_oracle = angle_sum / static_cast<double>(c);
    }

    rec.assignments = next.assignments;
    rec.cluster_sizes.assign(static_cast<std::size_t>(c), 0);
    for (int id : participants)
      ++rec.cluster_sizes[static_cast<std::size_t>(next.assignments[static_cast<std::size_t>(id)])];
    rec.mean_alignment.assign(static_cast<std::size_t>(k),
                              std::numeric_limits<double>::quiet_NaN());
    for (int id : participants)
      rec.mean_alignment[static_cast<std::size_t>(id)] =
          align.values(id, next.assignments[static_cast<std::size_t>(id)]);

    rec.wall_time_ms = watch.ms();
    result.trace.rounds.push_back(std::move(rec));
    state = std::move(next);
  }

  result.trace.final_models = state.cluster_models;
  result.state = std::move(state);
  return result;
}

}  // namespace decssl
