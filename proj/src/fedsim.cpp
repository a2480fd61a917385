#include "decssl/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "decssl/eval.hpp"
#include "decssl/objectives.hpp"
#include "decssl/spectral.hpp"
#include "fed_internal.hpp"

namespace decssl {

using detail::eval_seed_for;
using detail::local_stream;
using detail::StopWatch;

std::string to_string(ObjectiveFlavor f) {
  switch (f) {
    case ObjectiveFlavor::linear_ssl: return "linear-ssl";
    case ObjectiveFlavor::infonce: return "infonce";
    case ObjectiveFlavor::simsiam: return "simsiam";
    case ObjectiveFlavor::supervised_softmax: return "supervised-softmax";
  }
  return "linear-ssl";
}

ObjectiveFlavor flavor_from_string(const std::string& s) {
  if (s == "linear-ssl") return ObjectiveFlavor::linear_ssl;
  if (s == "infonce") return ObjectiveFlavor::infonce;
  if (s == "simsiam") return ObjectiveFlavor::simsiam;
  if (s == "supervised-softmax") return ObjectiveFlavor::supervised_softmax;
  throw std::invalid_argument("unknown objective flavor: " + s);
}

void FedConfig::validate(int num_sources) const {
  if (rounds < 1) throw std::invalid_argument("FedConfig: rounds must be at least 1");
  if (local_epochs.has_value() == local_steps.has_value())
    throw std::invalid_argument("FedConfig: exactly one of local_epochs/local_steps must be set");
  if (local_epochs && *local_epochs < 0)
    throw std::invalid_argument("FedConfig: local_epochs must be nonnegative");
  if (local_steps && *local_steps < 0)
    throw std::invalid_argument("FedConfig: local_steps must be nonnegative");
  if (participation <= 0.0 || participation > 1.0)
    throw std::invalid_argument("FedConfig: participation must be in (0,1]");
  if (learning_rate <= 0.0) throw std::invalid_argument("FedConfig: learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("FedConfig: batch_size must be at least 1");
  if (temperature <= 0.0) throw std::invalid_argument("FedConfig: temperature must be positive");
  if (num_sources < 1) throw std::invalid_argument("FedConfig: need at least one source");
}

int FedConfig::steps_for(long dataset_size) const {
  if (local_steps) return *local_steps;
  const long per_epoch = (dataset_size + batch_size - 1) / batch_size;
  return static_cast<int>(per_epoch * *local_epochs);
}

namespace detail {

void check_sources(const std::vector<LocalDataset>& sources) {
  if (sources.empty()) throw std::invalid_argument("training: no sources");
  const Eigen::Index d = sources.front().dim();
  std::vector<bool> seen(sources.size(), false);
  for (const auto& ds : sources) {
    if (ds.dim() != d) throw std::invalid_argument("training: source dimension mismatch");
    if (ds.empty()) throw std::invalid_argument("training: empty source");
    if (ds.source_id < 0 || ds.source_id >= static_cast<int>(sources.size()) ||
        seen[static_cast<std::size_t>(ds.source_id)])
      throw std::invalid_argument("training: source_id fields must be a permutation of 0..K-1");
    seen[static_cast<std::size_t>(ds.source_id)] = true;
  }
}

const LocalDataset& source_by_id(const std::vector<LocalDataset>& sources, int id) {
  for (const auto& ds : sources)
    if (ds.source_id == id) return ds;
  throw std::invalid_argument("training: missing source id");
}

LinearEncoder average_models(const std::vector<std::pair<int, const LinearEncoder*>>& members,
                             const std::vector<double>* weights) {
  LinearEncoder agg;
  agg.weight = Matrix::Zero(members.front().second->weight.rows(),
                            members.front().second->weight.cols());
  const bool has_pred = members.front().second->predictor.has_value();
  if (has_pred)
    agg.predictor = Matrix::Zero(members.front().second->predictor->rows(),
                                 members.front().second->predictor->cols());
  if (weights) {
    for (std::size_t i = 0; i < members.size(); ++i) {
      agg.weight += (*weights)[i] * members[i].second->weight;
      if (has_pred) *agg.predictor += (*weights)[i] * *members[i].second->predictor;
    }
  } else {
    for (const auto& [id, model] : members) {
      agg.weight += model->weight;
      if (has_pred) *agg.predictor += *model->predictor;
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    agg.weight *= inv;
    if (has_pred) *agg.predictor *= inv;
  }
  return agg;
}

double mixture_loss(const LinearEncoder& model, const std::vector<LocalDataset>& sources,
                    const UpdateOptions& opt, std::uint64_t seed, int round_index) {
  long total = 0;
  for (const auto& ds : sources) total += ds.size();
  double loss = 0.0;
  for (int id = 0; id < static_cast<int>(sources.size()); ++id) {
    const LocalDataset& ds = source_by_id(sources, id);
    loss += (static_cast<double>(ds.size()) / static_cast<double>(total)) *
            eval_loss(model, ds, opt, eval_seed_for(seed, id, round_index));
  }
  return loss;
}

}  // namespace detail

using detail::average_models;
using detail::check_sources;
using detail::source_by_id;

namespace {

struct BatchViews {
  Matrix x;  // raw batch columns
  Matrix a;  // x + xi
  Matrix b;  // x + xi'
  std::vector<int> labels;
};

BatchViews draw_batch(const LocalDataset& dataset, int batch_size, bool augmented, Rng& rng) {
  const Eigen::Index n = dataset.size();
  const Eigen::Index bsz = std::min<Eigen::Index>(batch_size, n);
  BatchViews views;
  views.x.resize(dataset.dim(), bsz);
  views.labels.reserve(static_cast<std::size_t>(bsz));
  for (Eigen::Index i = 0; i < bsz; ++i) {
    const int idx = rng.uniform_int(static_cast<int>(n));
    views.x.col(i) = dataset.samples.col(idx);
    views.labels.push_back(dataset.labels[static_cast<std::size_t>(idx)]);
  }
  if (augmented) {
    views.a = views.x;
    views.b = views.x;
    for (Eigen::Index i = 0; i < bsz; ++i) {
      for (Eigen::Index r = 0; r < views.a.rows(); ++r) views.a(r, i) += rng.normal();
      for (Eigen::Index r = 0; r < views.b.rows(); ++r) views.b(r, i) += rng.normal();
    }
  }
  return views;
}

// Algorithm-2 style regularizer: mean_b 0.5 D(p(view_b), z_b) + 0.5 D(p(x_b), z_b)
// with z = frozen features. Samples with a vanishing feature on either side
// are skipped; all-skipped batches contribute zero.
double alignment_term(const LinearEncoder& model, const LinearEncoder& frozen, const Matrix& x,
                      const Matrix& view, Matrix* grad_w, Matrix* grad_g) {
  const Matrix z_g = frozen.weight * x;
  const Matrix z_view = model.weight * view;
  const Matrix z_clean = model.weight * x;
  const Matrix p_view = model.predictor ? Matrix(*model.predictor * z_view) : z_view;
  const Matrix p_clean = model.predictor ? Matrix(*model.predictor * z_clean) : z_clean;

  double loss = 0.0;
  long counted = 0;
  Matrix gp_view = Matrix::Zero(p_view.rows(), p_view.cols());
  Matrix gp_clean = Matrix::Zero(p_clean.rows(), p_clean.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    if (z_g.col(i).squaredNorm() == 0.0) continue;
    if (p_view.col(i).squaredNorm() == 0.0 || p_clean.col(i).squaredNorm() == 0.0) continue;
    loss += 0.5 * cosine_distance(p_view.col(i), z_g.col(i));
    loss += 0.5 * cosine_distance(p_clean.col(i), z_g.col(i));
    if (grad_w) {
      gp_view.col(i) = 0.5 * cosine_distance_grad(p_view.col(i), z_g.col(i));
      gp_clean.col(i) = 0.5 * cosine_distance_grad(p_clean.col(i), z_g.col(i));
    }
    ++counted;
  }
  if (counted == 0) {
    if (grad_w) grad_w->setZero();
    if (grad_g) grad_g->setZero();
    return 0.0;
  }
  const double inv = 1.0 / static_cast<double>(counted);
  if (grad_w) {
    Matrix back_view = model.predictor ? Matrix(model.predictor->transpose() * gp_view) : gp_view;
    Matrix back_clean =
        model.predictor ? Matrix(model.predictor->transpose() * gp_clean) : gp_clean;
    *grad_w = inv * (back_view * view.transpose() + back_clean * x.transpose());
  }
  if (grad_g && model.predictor) {
    *grad_g = inv * (gp_view * z_view.transpose() + gp_clean * z_clean.transpose());
  }
  return loss * inv;
}

}  // namespace

double sgd_step(LinearEncoder& model, const LocalDataset& dataset, const UpdateOptions& opt,
                double learning_rate, const Matrix* covariance, Rng& rng,
                const AlignmentReg* align) {
  const bool with_align = align && align->lambda > 0.0 && align->frozen;
  double loss = 0.0;
  Matrix grad_w;
  Matrix grad_g;

  if (opt.flavor == ObjectiveFlavor::linear_ssl && opt.expected_gradient) {
    Matrix local_cov;
    if (!covariance) {
      local_cov = empirical_covariance(dataset);
      covariance = &local_cov;
    }
    loss = linear_ssl_loss_expected(model, *covariance);
    grad_w = linear_ssl_gradient(model, *covariance);
    if (with_align) {
      // The exact-gradient path has no batch of its own; the alignment term
      // stays sample-based and draws one.
      BatchViews views = draw_batch(dataset, opt.batch_size, true, rng);
      Matrix agw(model.weight.rows(), model.weight.cols());
      Matrix agg;
      if (model.predictor) agg.resize(model.predictor->rows(), model.predictor->cols());
      const double aloss = alignment_term(model, *align->frozen, views.x, views.a, &agw,
                                          model.predictor ? &agg : nullptr);
      loss += align->lambda * aloss;
      grad_w += align->lambda * agw;
      if (model.predictor) grad_g = align->lambda * agg;
    }
  } else {
    const bool augmented = opt.flavor != ObjectiveFlavor::supervised_softmax;
    BatchViews views = draw_batch(dataset, opt.batch_size, augmented, rng);
    switch (opt.flavor) {
      case ObjectiveFlavor::linear_ssl:
        loss = linear_ssl_batch(model.weight, views.a, views.b, &grad_w);
        break;
      case ObjectiveFlavor::infonce:
        loss = infonce_batch(model.weight, views.a, views.b, opt.temperature, &grad_w);
        break;
      case ObjectiveFlavor::simsiam:
        loss = simsiam_batch(model.weight, model.predictor, views.a, views.b, &grad_w,
                             model.predictor ? &grad_g : nullptr);
        break;
      case ObjectiveFlavor::supervised_softmax:
        if (with_align)
          throw std::invalid_argument("sgd_step: alignment regularization needs an SSL flavor");
        loss = softmax_ce_batch(model.weight, views.x, views.labels, &grad_w);
        break;
    }
    if (with_align) {
      Matrix agw(model.weight.rows(), model.weight.cols());
      Matrix agg;
      if (model.predictor) agg.resize(model.predictor->rows(), model.predictor->cols());
      const double aloss = alignment_term(model, *align->frozen, views.x, views.a, &agw,
                                          model.predictor ? &agg : nullptr);
      loss += align->lambda * aloss;
      grad_w += align->lambda * agw;
      if (model.predictor) {
        if (grad_g.size() == 0)
          grad_g = Matrix::Zero(model.predictor->rows(), model.predictor->cols());
        grad_g += align->lambda * agg;
      }
    }
  }

  if (!std::isfinite(loss)) throw NumericalDivergence("sgd_step: non-finite loss", dataset.source_id);
  model.weight -= learning_rate * grad_w;
  if (model.predictor && grad_g.size() > 0) *model.predictor -= learning_rate * grad_g;
  if (!model.weight.allFinite())
    throw NumericalDivergence("sgd_step: non-finite weights", dataset.source_id);
  return loss;
}

LinearEncoder local_update(const LinearEncoder& model, const LocalDataset& dataset, int steps,
                           double learning_rate, const UpdateOptions& opt, Rng& rng,
                           const AlignmentReg* align) {
  if (steps < 0) throw std::invalid_argument("local_update: steps must be nonnegative");
  if (dataset.dim() != model.weight.cols())
    throw std::invalid_argument("local_update: dimension mismatch");
  LinearEncoder out = model;
  if (steps == 0) return out;
  Matrix cov;
  const Matrix* cov_ptr = nullptr;
  if (opt.flavor == ObjectiveFlavor::linear_ssl && opt.expected_gradient) {
    cov = empirical_covariance(dataset);
    cov_ptr = &cov;
  }
  for (int s = 0; s < steps; ++s) {
    try {
      sgd_step(out, dataset, opt, learning_rate, cov_ptr, rng, align);
    } catch (const NumericalDivergence& e) {
      throw NumericalDivergence(std::string(e.what()) + " at step " + std::to_string(s),
                                dataset.source_id, s);
    }
  }
  return out;
}

double eval_loss(const LinearEncoder& model, const LocalDataset& dataset, const UpdateOptions& opt,
                 std::uint64_t eval_seed) {
  switch (opt.flavor) {
    case ObjectiveFlavor::linear_ssl:
      return linear_ssl_loss_expected(model, empirical_covariance(dataset));
    case ObjectiveFlavor::supervised_softmax:
      return softmax_ce_batch(model.weight, dataset.samples, dataset.labels, nullptr);
    case ObjectiveFlavor::infonce:
    case ObjectiveFlavor::simsiam: {
      Rng rng(eval_seed);
      Matrix a = dataset.samples;
      Matrix b = dataset.samples;
      for (Eigen::Index i = 0; i < a.cols(); ++i) {
        for (Eigen::Index r = 0; r < a.rows(); ++r) a(r, i) += rng.normal();
        for (Eigen::Index r = 0; r < b.rows(); ++r) b(r, i) += rng.normal();
      }
      if (opt.flavor == ObjectiveFlavor::infonce)
        return infonce_batch(model.weight, a, b, opt.temperature, nullptr);
      return simsiam_batch(model.weight, model.predictor, a, b, nullptr, nullptr);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<int> sample_participants(int num_sources, double participation, std::uint64_t seed,
                                     int round_index) {
  const int take =
      std::max(1, static_cast<int>(std::ceil(participation * num_sources - 1e-9)));
  std::vector<int> ids(static_cast<std::size_t>(num_sources));
  std::iota(ids.begin(), ids.end(), 0);
  if (take >= num_sources) return ids;
  Rng rng = Rng(seed).derive(detail::kParticipantTag, static_cast<std::uint64_t>(round_index));
  // Partial Fisher-Yates: the first `take` slots become the sample.
  for (int i = 0; i < take; ++i) {
    const int j = i + rng.uniform_int(num_sources - i);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }
  ids.resize(static_cast<std::size_t>(take));
  std::sort(ids.begin(), ids.end());
  return ids;
}

LinearEncoder init_encoder(const FedConfig& cfg, int embed_dim, Eigen::Index input_dim) {
  Rng rng = Rng(cfg.seed).derive(detail::kInitTag);
  LinearEncoder enc;
  enc.weight.resize(embed_dim, input_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (Eigen::Index i = 0; i < enc.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < enc.weight.cols(); ++j) enc.weight(i, j) = scale * rng.normal();
  if (cfg.flavor == ObjectiveFlavor::simsiam && cfg.learnable_predictor)
    enc.predictor = Matrix::Identity(embed_dim, embed_dim);
  return enc;
}

LinearEncoder fedavg_round(const LinearEncoder& global, const std::vector<LocalDataset>& sources,
                           const FedConfig& cfg, int round_index) {
  check_sources(sources);
  const auto participants = sample_participants(static_cast<int>(sources.size()),
                                                cfg.participation, cfg.seed, round_index);
  const UpdateOptions opt = UpdateOptions::from(cfg);

  std::deque<LinearEncoder> updated;
  std::vector<std::pair<int, const LinearEncoder*>> members;
  std::vector<double> weights;
  long total = 0;
  for (int id : participants) total += source_by_id(sources, id).size();
  for (int id : participants) {
    const LocalDataset& ds = source_by_id(sources, id);
    Rng rng = local_stream(cfg.seed, id, round_index);
    updated.push_back(
        local_update(global, ds, cfg.steps_for(ds.size()), cfg.learning_rate, opt, rng));
    members.emplace_back(id, &updated.back());
    weights.push_back(static_cast<double>(ds.size()) / static_cast<double>(total));
  }
  return average_models(members, cfg.weighted_aggregation ? &weights : nullptr);
}

std::string to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::star: return "star";
    case TopologyKind::cycle: return "cycle";
    case TopologyKind::binary_tree: return "binary-tree";
    case TopologyKind::random_graph: return "random-graph";
    case TopologyKind::complete: return "complete";
  }
  return "complete";
}

TopologyKind topology_from_string(const std::string& s) {
  if (s == "star") return TopologyKind::star;
  if (s == "cycle") return TopologyKind::cycle;
  if (s == "binary-tree") return TopologyKind::binary_tree;
  if (s == "random-graph") return TopologyKind::random_graph;
  if (s == "complete") return TopologyKind::complete;
  throw std::invalid_argument("unknown topology kind: " + s);
}

int Topology::degree(int i) const {
  int deg = 0;
  for (int j = 0; j < num_nodes(); ++j)
    if (adjacency(i, j)) ++deg;
  return deg;
}

Matrix Topology::metropolis_matrix() const {
  const int k = num_nodes();
  std::vector<int> deg(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) deg[static_cast<std::size_t>(i)] = degree(i);
  Matrix p = Matrix::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    double off = 0.0;
    for (int j = 0; j < k; ++j) {
      if (!adjacency(i, j)) continue;
      p(i, j) = 1.0 / (1.0 + std::max(deg[static_cast<std::size_t>(i)],
                                      deg[static_cast<std::size_t>(j)]));
      off += p(i, j);
    }
    p(i, i) = 1.0 - off;
  }
  return p;
}

bool graph_connected(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adjacency) {
  const int k = static_cast<int>(adjacency.rows());
  if (k == 0) return false;
  std::vector<bool> visited(static_cast<std::size_t>(k), false);
  std::vector<int> stack{0};
  visited[0] = true;
  int count = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < k; ++v) {
      if (adjacency(u, v) && !visited[static_cast<std::size_t>(v)]) {
        visited[static_cast<std::size_t>(v)] = true;
        stack.push_back(v);
        ++count;
      }
    }
  }
  return count == k;
}

Topology build_topology(TopologyKind kind, int num_nodes, double edge_probability,
                        std::uint64_t seed) {
  if (num_nodes < 2) throw std::invalid_argument("build_topology: need at least 2 nodes");
  Topology topo;
  topo.kind = kind;
  topo.adjacency.setConstant(num_nodes, num_nodes, false);
  auto connect = [&](int i, int j) {
    topo.adjacency(i, j) = true;
    topo.adjacency(j, i) = true;
  };
  switch (kind) {
    case TopologyKind::star:
      for (int i = 1; i < num_nodes; ++i) connect(0, i);
      break;
    case TopologyKind::cycle:
      for (int i = 0; i < num_nodes; ++i) connect(i, (i + 1) % num_nodes);
      break;
    case TopologyKind::binary_tree:
      for (int i = 1; i < num_nodes; ++i) connect(i, (i - 1) / 2);
      break;
    case TopologyKind::complete:
      for (int i = 0; i < num_nodes; ++i)
        for (int j = i + 1; j < num_nodes; ++j) connect(i, j);
      break;
    case TopologyKind::random_graph: {
      if (edge_probability <= 0.0 || edge_probability > 1.0)
        throw std::invalid_argument("build_topology: edge_probability must be in (0,1]");
      topo.edge_probability = edge_probability;
      Rng rng(seed);
      constexpr int kMaxAttempts = 10000;
      for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        topo.adjacency.setConstant(num_nodes, num_nodes, false);
        for (int i = 0; i < num_nodes; ++i)
          for (int j = i + 1; j < num_nodes; ++j)
            if (rng.uniform() < edge_probability) connect(i, j);
        if (graph_connected(topo.adjacency)) return topo;
      }
      throw std::runtime_error("build_topology: could not sample a connected graph");
    }
  }
  if (!graph_connected(topo.adjacency))
    throw std::runtime_error("build_topology: constructed graph is not connected");
  return topo;
}

std::vector<LinearEncoder> gossip_round(const std::vector<LinearEncoder>& models,
                                        const Topology& topology,
                                        const std::vector<LocalDataset>& sources,
                                        const FedConfig& cfg, int round_index) {
  const int k = topology.num_nodes();
  if (static_cast<int>(models.size()) != k || static_cast<int>(sources.size()) != k)
    throw std::invalid_argument("gossip_round: model/source/topology size mismatch");
  for (const auto& m : models) {
    if (m.predictor.has_value() != models.front().predictor.has_value())
      throw std::invalid_argument("gossip_round: mixed predictor presence across nodes");
  }
  const UpdateOptions opt = UpdateOptions::from(cfg);

  std::vector<LinearEncoder> updated;
  updated.reserve(static_cast<std::size_t>(k));
  for (int id = 0; id < k; ++id) {
    const LocalDataset& ds = source_by_id(sources, id);
    Rng rng = local_stream(cfg.seed, id, round_index);
    updated.push_back(local_update(models[static_cast<std::size_t>(id)], ds,
                                   cfg.steps_for(ds.size()), cfg.learning_rate, opt, rng));
  }

  const Matrix p = topology.metropolis_matrix();
  std::vector<LinearEncoder> mixed(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    LinearEncoder acc;
    acc.weight = Matrix::Zero(updated[0].weight.rows(), updated[0].weight.cols());
    if (updated[0].predictor)
      acc.predictor = Matrix::Zero(updated[0].predictor->rows(), updated[0].predictor->cols());
    for (int j = 0; j < k; ++j) {
      if (p(i, j) == 0.0) continue;
      acc.weight += p(i, j) * updated[static_cast<std::size_t>(j)].weight;
      if (acc.predictor) *acc.predictor += p(i, j) * *updated[static_cast<std::size_t>(j)].predictor;
    }
    mixed[static_cast<std::size_t>(i)] = std::move(acc);
  }
  return mixed;
}

bool encoders_equal_bitwise(const LinearEncoder& a, const LinearEncoder& b) {
  if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
  if (a.predictor.has_value() != b.predictor.has_value()) return false;
  if ((a.weight.array() != b.weight.array()).any()) return false;
  if (a.predictor && (a.predictor->array() != b.predictor->array()).any()) return false;
  return true;
}

namespace {

bool records_equal(const RoundRecord& a, const RoundRecord& b) {
  auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  return a.round == b.round && same(a.mean_local_loss, b.mean_local_loss) &&
         same(a.global_loss, b.global_loss) &&
         same(a.principal_angle_to_oracle, b.principal_angle_to_oracle) &&
         same(a.consensus_mean_distance, b.consensus_mean_distance) &&
         same(a.consensus_max_distance, b.consensus_max_distance) &&
         a.node_losses == b.node_losses && a.node_angles == b.node_angles;
}

std::optional<LinearEncoder> oracle_for(const std::vector<LocalDataset>& sources,
                                        const FedConfig& cfg, int m) {
  if (cfg.flavor != ObjectiveFlavor::linear_ssl || !cfg.trace_oracle_angle) return std::nullopt;
  return ssl_minimizer_oracle(global_covariance(sources), m);
}

double angle_or_nan(const std::optional<LinearEncoder>& oracle, const LinearEncoder& model) {
  if (!oracle) return std::numeric_limits<double>::quiet_NaN();
  return principal_angle(model.weight, oracle->weight);
}

}  // namespace

bool trace_equal_bitwise(const TrainingTrace& a, const TrainingTrace& b) {
  if (a.rounds.size() != b.rounds.size() || a.final_models.size() != b.final_models.size())
    return false;
  if (a.diverged != b.diverged) return false;
  for (std::size_t i = 0; i < a.rounds.size(); ++i)
    if (!records_equal(a.rounds[i], b.rounds[i])) return false;
  for (std::size_t i = 0; i < a.final_models.size(); ++i)
    if (!encoders_equal_bitwise(a.final_models[i], b.final_models[i])) return false;
  return true;
}

TrainingTrace run_fedavg(const std::vector<LocalDataset>& sources, const FedConfig& cfg) {
  check_sources(sources);
  cfg.validate(static_cast<int>(sources.size()));
  const int k = static_cast<int>(sources.size());
  const int m = cfg.resolved_embedding_dim(k);
  const UpdateOptions opt = UpdateOptions::from(cfg);

  LinearEncoder global = init_encoder(cfg, m, sources.front().dim());
  const auto oracle = oracle_for(sources, cfg, m);

  TrainingTrace trace;
  for (int t = 0; t < cfg.rounds; ++t) {
    StopWatch watch;
    RoundRecord rec;
    rec.round = t;
    const auto participants = sample_participants(k, cfg.participation, cfg.seed, t);
    std::deque<LinearEncoder> updated;
    std::vector<std::pair<int, const LinearEncoder*>> members;
    std::vector<double> weights;
    long total = 0;
    for (int id : participants) total += source_by_id(sources, id).size();
    double local_loss_sum = 0.0;
    try {
      for (int id : participants) {
        const LocalDataset& ds = source_by_id(sources, id);
        Rng rng = local_stream(cfg.seed, id, t);
        updated.push_back(
            local_update(global, ds, cfg.steps_for(ds.size()), cfg.learning_rate, opt, rng));
        members.emplace_back(id, &updated.back());
        weights.push_back(static_cast<double>(ds.size()) / static_cast<double>(total));
        local_loss_sum += eval_loss(updated.back(), ds, opt, eval_seed_for(cfg.seed, id, t));
      }
    } catch (const NumericalDivergence& e) {
      trace.diverged = true;
      trace.diverged_source = e.source_id;
      trace.divergence_message = e.what();
      break;
    }
    global = average_models(members, cfg.weighted_aggregation ? &weights : nullptr);
    rec.mean_local_loss = local_loss_sum / static_cast<double>(participants.size());
    rec.global_loss = detail::mixture_loss(global, sources, opt, cfg.seed, t);
    rec.principal_angle_to_oracle = angle_or_nan(oracle, global);
    rec.wall_time_ms = watch.ms();
    trace.rounds.push_back(std::move(rec));
  }
  trace.final_models.push_back(std::move(global));
  return trace;
}

TrainingTrace run_decentralized(const std::vector<LocalDataset>& sources, const Topology& topology,
                                const FedConfig& cfg) {
  check_sources(sources);
  cfg.validate(static_cast<int>(sources.size()));
  const int k = static_cast<int>(sources.size());
  if (topology.num_nodes() != k)
    throw std::invalid_argument("run_decentralized: topology size mismatch");
  const int m = cfg.resolved_embedding_dim(k);
  const UpdateOptions opt = UpdateOptions::from(cfg);

  std::vector<LinearEncoder> models(static_cast<std::size_t>(k),
                                    init_encoder(cfg, m, sources.front().dim()));
  const auto oracle = oracle_for(sources, cfg, m);

  TrainingTrace trace;
  for (int t = 0; t < cfg.rounds; ++t) {
    StopWatch watch;
    RoundRecord rec;
    rec.round = t;
    try {
      models = gossip_round(models, topology, sources, cfg, t);
    } catch (const NumericalDivergence& e) {
      trace.diverged = true;
      trace.diverged_source = e.source_id;
      trace.divergence_message = e.what();
      break;
    }
    rec.node_losses.resize(static_cast<std::size_t>(k));
    rec.node_angles.resize(static_cast<std::size_t>(k));
    double loss_sum = 0.0;
    for (int id = 0; id < k; ++id) {
      const LocalDataset& ds = source_by_id(sources, id);
      rec.node_losses[static_cast<std::size_t>(id)] =
          eval_loss(models[static_cast<std::size_t>(id)], ds, opt, eval_seed_for(cfg.seed, id, t));
      rec.node_angles[static_cast<std::size_t>(id)] =
          angle_or_nan(oracle, models[static_cast<std::size_t>(id)]);
      loss_sum += rec.node_losses[static_cast<std::size_t>(id)];
    }
    rec.mean_local_loss = loss_sum / static_cast<double>(k);
    double dist_sum = 0.0;
    double dist_max = 0.0;
    int pairs = 0;
    for (int i = 0; i < k; ++i) {
      for (int j = i + 1; j < k; ++j) {
        const double dist = weight_distance(models[static_cast<std::size_t>(i)],
                                            models[static_cast<std::size_t>(j)]);
        dist_sum += dist;
        dist_max = std::max(dist_max, dist);
        ++pairs;
      }
    }
    rec.consensus_mean_distance = pairs > 0 ? dist_sum / pairs : 0.0;
    rec.consensus_max_distance = dist_max;
    rec.wall_time_ms = watch.ms();
    trace.rounds.push_back(std::move(rec));
  }
  trace.final_models = std::move(models);
  return trace;
}

TrainingTrace run_local(const std::vector<LocalDataset>& sources, const FedConfig& cfg) {
  check_sources(sources);
  cfg.validate(static_cast<int>(sources.size()));
  const int k = static_cast<int>(sources.size());
  const int m = cfg.resolved_embedding_dim(k);
  const UpdateOptions opt = UpdateOptions::from(cfg);

  std::vector<LinearEncoder> models(static_cast<std::size_t>(k),
                                    init_encoder(cfg, m, sources.front().dim()));
  TrainingTrace trace;
  for (int t = 0; t < cfg.rounds; ++t) {
    StopWatch watch;
    RoundRecord rec;
    rec.round = t;
    rec.node_losses.resize(static_cast<std::size_t>(k));
    double loss_sum = 0.0;
    try {
      for (int id = 0; id < k; ++id) {
        const LocalDataset& ds = source_by_id(sources, id);
        Rng rng = local_stream(cfg.seed, id, t);
        models[static_cast<std::size_t>(id)] =
            local_update(models[static_cast<std::size_t>(id)], ds, cfg.steps_for(ds.size()),
                         cfg.learning_rate, opt, rng);
        rec.node_losses[static_cast<std::size_t>(id)] = eval_loss(
            models[static_cast<std::size_t>(id)], ds, opt, eval_seed_for(cfg.seed, id, t));
        loss_sum += rec.node_losses[static_cast<std::size_t>(id)];
      }
    } catch (const NumericalDivergence& e) {
      trace.diverged = true;
      trace.diverged_source = e.source_id;
      trace.divergence_message = e.what();
      break;
    }
    rec.mean_local_loss = loss_sum / static_cast<double>(k);
    rec.wall_time_ms = watch.ms();
    trace.rounds.push_back(std::move(rec));
  }
  trace.final_models = std::move(models);
  return trace;
}

TrainingTrace run_central(const std::vector<LocalDataset>& sources, const FedConfig& cfg) {
  check_sources(sources);
  cfg.validate(static_cast<int>(sources.size()));
  const int k = static_cast<int>(sources.size());
  const int m = cfg.resolved_embedding_dim(k);
  const UpdateOptions opt = UpdateOptions::from(cfg);

  long total = 0;
  for (const auto& ds : sources) total += ds.size();
  LocalDataset pooled;
  pooled.source_id = 0;
  pooled.samples.resize(sources.front().dim(), total);
  pooled.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index col = 0;
  for (int id = 0; id < k; ++id) {
    const LocalDataset& ds = source_by_id(sources, id);
    pooled.samples.middleCols(col, ds.size()) = ds.samples;
    pooled.labels.insert(pooled.labels.end(), ds.labels.begin(), ds.labels.end());
    col += ds.size();
  }

  LinearEncoder model = init_encoder(cfg, m, pooled.dim());
  const auto oracle = oracle_for(sources, cfg, m);

  TrainingTrace trace;
  for (int t = 0; t < cfg.rounds; ++t) {
    StopWatch watch;
    RoundRecord rec;
    rec.round = t;
    try {
      Rng rng = local_stream(cfg.seed, 0, t);
      model = local_update(model, pooled, cfg.steps_for(pooled.size()), cfg.learning_rate, opt, rng);
    } catch (const NumericalDivergence& e) {
      trace.diverged = true;
      trace.diverged_source = e.source_id;
      trace.divergence_message = e.what();
      break;
    }
    rec.global_loss = eval_loss(model, pooled, opt, eval_seed_for(cfg.seed, 0, t));
    rec.mean_local_loss = rec.global_loss;
    rec.principal_angle_to_oracle = angle_or_nan(oracle, model);
    rec.wall_time_ms = watch.ms();
    trace.rounds.push_back(std::move(rec));
  }
  trace.final_models.push_back(std::move(model));
  return trace;
}

}  // namespace decssl
