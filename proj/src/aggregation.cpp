#include "crowdcluster/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "crowdcluster/kernels.hpp"
#include "crowdcluster/rng.hpp"

namespace crowdcluster {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kBacktrack = 0.5;
constexpr int kMaxHalvings = 50;
constexpr double kInitialStep = 1e-3;
constexpr double kMaxStep = 1e3;

void require_finite(double value, const char* term) {
  if (!std::isfinite(value))
    throw NumericalError(std::string("objective term '") + term + "' is not finite");
}

double gaussian_log_prior(const Eigen::VectorXd& v, double mean, double sigma) {
  const double norm = -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma);
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double d = v(i) - mean;
    total += norm - 0.5 * d * d / (sigma * sigma);
  }
  return total;
}

double prior_terms(const ModelState& state, const AggregationConfig& config) {
  const double scale_prior = gaussian_log_prior(state.scale, 1.0, config.sigma_s);
  require_finite(scale_prior, "worker scale prior");
  const double bias_prior = gaussian_log_prior(state.bias, 0.0, config.sigma_tau);
  require_finite(bias_prior, "worker bias prior");

  const double var_mu = config.sigma_mu * config.sigma_mu;
  const double mean_prior =
      state.n_components() *
          (-0.5 * state.dim() * std::log(2.0 * std::numbers::pi * var_mu)) -
      0.5 * state.means.squaredNorm() / var_mu;
  require_finite(mean_prior, "component mean prior");

  const double k = state.n_components();
  const double conc = 1.0 + config.alpha / k;
  double log_weights = 0.0;
  for (Eigen::Index c = 0; c < state.weights.size(); ++c) log_weights += std::log(state.weights(c));
  const double weight_prior =
      std::lgamma(k * conc) - k * std::lgamma(conc) + (conc - 1.0) * log_weights;
  require_finite(weight_prior, "mixture weight prior");
  return scale_prior + bias_prior + mean_prior + weight_prior;
}

enum Block { kEmbeddings = 0, kScale = 1, kBias = 2 };
constexpr const char* kBlockNames[] = {"embeddings", "scale", "bias"};

double block_norm2(const ObjectiveGradient& g, Block block) {
  switch (block) {
    case kEmbeddings: return g.embeddings.squaredNorm();
    case kScale: return g.scale.squaredNorm();
    case kBias: return g.bias.squaredNorm();
  }
  return 0.0;
}

void apply_step(ModelState& s, const ObjectiveGradient& g, Block block, double t) {
  switch (block) {
    case kEmbeddings: s.embeddings += t * g.embeddings; break;
    case kScale: s.scale += t * g.scale; break;
    case kBias: s.bias += t * g.bias; break;
  }
}

// Objective that reports non-finite candidates as -inf so the line search
// can back off from them.
double try_objective(const ModelState& s, const PairSet& pairs, const AggregationConfig& c) {
  try {
    return objective(s, pairs, c);
  } catch (const NumericalError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

void AggregationConfig::validate() const {
  if (dim < 1) throw ValidationError("aggregation: dim must be at least 1");
  if (max_components < 2) throw ValidationError("aggregation: max_components must be at least 2");
  if (!(alpha > 0)) throw ValidationError("aggregation: alpha must be positive");
  if (!(sigma_x > 0 && sigma_mu > 0 && sigma_s > 0 && sigma_tau > 0))
    throw ValidationError("aggregation: prior scales must be positive");
  if (max_sweeps < 1) throw ValidationError("aggregation: max_sweeps must be at least 1");
  if (!(rel_tol >= 0)) throw ValidationError("aggregation: rel_tol must be non-negative");
  if (restarts < 1) throw ValidationError("aggregation: restarts must be at least 1");
}

PairSet::PairSet(std::vector<IndexedPair> pairs, int n_objects, int n_workers)
    : pairs_(std::move(pairs)), n_objects_(n_objects), n_workers_(n_workers) {
  if (n_objects < 1) throw ValidationError("pair set needs at least one object");
  if (n_workers < 1) throw ValidationError("pair set needs at least one worker");
  std::vector<std::size_t> object_degree(n_objects, 0);
  std::vector<std::size_t> worker_degree(n_workers, 0);
  for (const auto& p : pairs_) {
    if (p.a < 0 || p.a >= n_objects || p.b < 0 || p.b >= n_objects)
      throw ValidationError("pair references an object index out of range");
    if (p.a == p.b) throw ValidationError("pair references the same object twice");
    if (p.worker < 0 || p.worker >= n_workers)
      throw ValidationError("pair references a worker index out of range");
    ++object_degree[p.a];
    ++object_degree[p.b];
    ++worker_degree[p.worker];
  }
  auto prefix = [](const std::vector<std::size_t>& degree) {
    std::vector<std::size_t> offsets(degree.size() + 1, 0);
    for (std::size_t i = 0; i < degree.size(); ++i) offsets[i + 1] = offsets[i] + degree[i];
    return offsets;
  };
  object_offsets_ = prefix(object_degree);
  worker_offsets_ = prefix(worker_degree);
  object_pairs_.resize(object_offsets_.back());
  object_neighbors_.resize(object_offsets_.back());
  worker_pairs_.resize(worker_offsets_.back());
  std::vector<std::size_t> obj_fill(object_offsets_.begin(), object_offsets_.end() - 1);
  std::vector<std::size_t> wrk_fill(worker_offsets_.begin(), worker_offsets_.end() - 1);
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const auto idx = static_cast<std::uint32_t>(i);
    object_neighbors_[obj_fill[pairs_[i].a]] = static_cast<std::uint32_t>(pairs_[i].b);
    object_pairs_[obj_fill[pairs_[i].a]++] = idx;
    object_neighbors_[obj_fill[pairs_[i].b]] = static_cast<std::uint32_t>(pairs_[i].a);
    object_pairs_[obj_fill[pairs_[i].b]++] = idx;
    worker_pairs_[wrk_fill[pairs_[i].worker]++] = idx;
  }
}

IndexedEvidence index_evidence(const std::vector<PairLabel>& labels,
                               std::vector<ObjectId> object_ids) {
  IndexedEvidence out;
  if (object_ids.empty()) {
    std::set<ObjectId> ids;
    for (const auto& l : labels) {
      ids.insert(l.a);
      ids.insert(l.b);
    }
    out.object_ids.assign(ids.begin(), ids.end());
  } else {
    out.object_ids = std::move(object_ids);
  }
  std::map<ObjectId, int> object_index;
  for (std::size_t i = 0; i < out.object_ids.size(); ++i) {
    if (!object_index.emplace(out.object_ids[i], static_cast<int>(i)).second)
      throw ValidationError("duplicate object id " + out.object_ids[i]);
  }
  std::set<WorkerId> workers;
  for (const auto& l : labels) workers.insert(l.worker_id);
  out.worker_ids.assign(workers.begin(), workers.end());
  std::map<WorkerId, int> worker_index;
  for (std::size_t j = 0; j < out.worker_ids.size(); ++j)
    worker_index.emplace(out.worker_ids[j], static_cast<int>(j));

  out.pairs.reserve(labels.size());
  for (const auto& l : labels) {
    auto a = object_index.find(l.a);
    auto b = object_index.find(l.b);
    if (a == object_index.end()) throw ValidationError("pair references unknown object " + l.a);
    if (b == object_index.end()) throw ValidationError("pair references unknown object " + l.b);
    out.pairs.push_back({a->second, b->second, worker_index.at(l.worker_id), l.same});
  }
  return out;
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double pair_probability(const ModelState& state, int a, int b, int worker) {
  const double z =
      state.scale(worker) * state.embeddings.row(a).dot(state.embeddings.row(b)) +
      state.bias(worker);
  return logistic(z);
}

double objective(const ModelState& state, const PairSet& pairs,
                 const AggregationConfig& config) {
  const double pair_term =
      kernels::pair_log_likelihood(state.embeddings, state.scale, state.bias, pairs);
  require_finite(pair_term, "pair log-likelihood");
  const double mixture = kernels::mixture_term(state.embeddings, state.means, state.weights,
                                               state.responsibilities, config.sigma_x);
  require_finite(mixture, "mixture");
  const double total = pair_term + mixture + prior_terms(state, config);
  require_finite(total, "total");
  return total;
}

ObjectiveGradient objective_gradient(const ModelState& state, const PairSet& pairs,
                                     const AggregationConfig& config) {
  ObjectiveGradient g;
  g.embeddings = RowMatrix::Zero(state.n_objects(), state.dim());
  g.scale = Eigen::VectorXd::Zero(state.n_workers());
  g.bias = Eigen::VectorXd::Zero(state.n_workers());
  kernels::pair_gradient(state.embeddings, state.scale, state.bias, pairs, g.embeddings,
                         g.scale, g.bias);

  // Mixture pull: sum_k r_ik (mu_k - x_i) / sigma_x^2.
  const double inv_var = 1.0 / (config.sigma_x * config.sigma_x);
  g.embeddings += inv_var * (state.responsibilities * state.means - state.embeddings);

  g.scale.array() -= (state.scale.array() - 1.0) / (config.sigma_s * config.sigma_s);
  g.bias -= state.bias / (config.sigma_tau * config.sigma_tau);
  return g;
}

void update_responsibilities(ModelState& state, const AggregationConfig& config) {
  kernels::responsibilities(state.embeddings, state.means, state.weights, config.sigma_x,
                            state.responsibilities);
}

void update_components(ModelState& state, const AggregationConfig& config) {
  const double inv_var_x = 1.0 / (config.sigma_x * config.sigma_x);
  const double inv_var_mu = 1.0 / (config.sigma_mu * config.sigma_mu);
  const Eigen::VectorXd counts = state.responsibilities.colwise().sum().transpose();
  const RowMatrix weighted = state.responsibilities.transpose() * state.embeddings;
  const int k = state.n_components();
  for (int c = 0; c < k; ++c) {
    state.means.row(c) = (inv_var_x * weighted.row(c)) / (counts(c) * inv_var_x + inv_var_mu);
  }
  const double extra = config.alpha / k;
  state.weights = (counts.array() + extra) / (counts.sum() + config.alpha);
}

ModelState initial_state(int n_objects, int n_workers, const AggregationConfig& config,
                         std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ModelState s;
  s.embeddings.resize(n_objects, config.dim);
  for (Eigen::Index i = 0; i < s.embeddings.size(); ++i) s.embeddings.data()[i] = 0.1 * normal(rng);
  s.scale = Eigen::VectorXd::Ones(n_workers);
  s.bias = Eigen::VectorXd::Zero(n_workers);
  s.means.resize(config.max_components, config.dim);
  for (Eigen::Index i = 0; i < s.means.size(); ++i)
    s.means.data()[i] = config.sigma_mu * normal(rng);
  s.weights = Eigen::VectorXd::Constant(config.max_components, 1.0 / config.max_components);
  s.responsibilities =
      RowMatrix::Constant(n_objects, config.max_components, 1.0 / config.max_components);
  return s;
}

ModelState em_step(const ModelState& state, const PairSet& pairs,
                   const AggregationConfig& config, SweepRecord* record,
                   std::array<double, 3>* step_sizes) {
  std::array<double, 3> local_steps{kInitialStep, kInitialStep, kInitialStep};
  std::array<double, 3>& steps = step_sizes ? *step_sizes : local_steps;

  ModelState s = state;
  update_responsibilities(s, config);
  update_components(s, config);
  double current = objective(s, pairs, config);

  int halvings = 0;
  std::vector<std::string> skipped;
  for (Block block : {kEmbeddings, kScale, kBias}) {
    const ObjectiveGradient g = objective_gradient(s, pairs, config);
    const double norm2 = block_norm2(g, block);
    if (norm2 == 0.0) continue;
    double t = std::min(2.0 * steps[block], kMaxStep);
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      ModelState candidate = s;
      apply_step(candidate, g, block, t);
      const double value = try_objective(candidate, pairs, config);
      if (value >= current + kArmijo * t * norm2) {
        s = std::move(candidate);
        current = value;
        steps[block] = t;
        accepted = true;
        break;
      }
      t *= kBacktrack;
      ++halvings;
    }
    if (!accepted) {
      skipped.emplace_back(kBlockNames[block]);
      // Restart the next search from the step that last worked, not from
      // the exhausted one.
      steps[block] = std::max(steps[block] * 0.5, 1e-12);
    }
  }
  s.objective = current;
  if (record) {
    record->objective = current;
    record->halvings = halvings;
    record->skipped_blocks = std::move(skipped);
    record->active_components = active_components(s);
  }
  return s;
}

FitResult fit(const PairSet& pairs, const AggregationConfig& config,
              const SweepCallback& on_sweep) {
  config.validate();
  if (pairs.size() == 0) throw ValidationError("aggregation needs at least one pair label");

  FitResult best;
  bool have_best = false;
  for (int restart = 0; restart < config.restarts; ++restart) {
    ModelState state = initial_state(pairs.n_objects(), pairs.n_workers(), config,
                                     derive_seed(config.seed, static_cast<std::uint64_t>(restart)));
    state.objective = objective(state, pairs, config);
    std::array<double, 3> steps{kInitialStep, kInitialStep, kInitialStep};
    std::vector<SweepRecord> sweeps;
    bool converged = false;
    for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
      SweepRecord record;
      record.sweep = sweep;
      ModelState next = em_step(state, pairs, config, &record, &steps);
      const double change = std::abs(next.objective - state.objective) /
                            std::max(1.0, std::abs(state.objective));
      state = std::move(next);
      if (on_sweep) on_sweep(restart, record);
      sweeps.push_back(std::move(record));
      if (change < config.rel_tol) {
        converged = true;
        break;
      }
    }
    best.diagnostics.restart_objectives.push_back(state.objective);
    best.diagnostics.restart_sweeps.push_back(static_cast<int>(sweeps.size()));
    // Strictly greater keeps the lowest restart index on ties.
    if (!have_best || state.objective > best.state.objective) {
      best.state = std::move(state);
      best.diagnostics.best_restart = restart;
      best.diagnostics.sweeps = std::move(sweeps);
      best.diagnostics.converged = converged;
      have_best = true;
    }
  }
  return best;
}

FitResult fit(const std::vector<IndexedPair>& pairs, int n_objects, int n_workers,
              const AggregationConfig& config) {
  if (pairs.empty()) throw ValidationError("aggregation needs at least one pair label");
  return fit(PairSet(pairs, n_objects, n_workers), config);
}

int active_components(const ModelState& state) {
  std::set<Eigen::Index> used;
  for (Eigen::Index i = 0; i < state.responsibilities.rows(); ++i) {
    Eigen::Index arg = 0;
    state.responsibilities.row(i).maxCoeff(&arg);
    used.insert(arg);
  }
  return static_cast<int>(used.size());
}

ClusteringResult extract_clusters(const ModelState& state,
                                  const std::vector<ObjectId>& object_ids) {
  const int n = state.n_objects();
  const int k = state.n_components();
  if (static_cast<int>(object_ids.size()) != n)
    throw ValidationError("extract_clusters: object id count does not match the state");

  std::vector<int> component(n, 0);
  std::vector<int> sizes(k, 0);
  for (int i = 0; i < n; ++i) {
    int arg = 0;
    for (int c = 1; c < k; ++c) {
      if (state.responsibilities(i, c) > state.responsibilities(i, arg)) arg = c;
    }
    component[i] = arg;
    ++sizes[arg];
  }
  std::vector<int> order;
  for (int c = 0; c < k; ++c) {
    if (sizes[c] > 0) order.push_back(c);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return sizes[x] > sizes[y]; });
  std::vector<int> label(k, -1);
  for (std::size_t rank = 0; rank < order.size(); ++rank) label[order[rank]] = static_cast<int>(rank);

  ClusteringResult result;
  result.cluster_count = static_cast<int>(order.size());
  result.members.resize(order.size());
  for (int i = 0; i < n; ++i) {
    const int l = label[component[i]];
    result.assignment.assignment.emplace(object_ids[i], l);
    result.members[l].push_back(object_ids[i]);
  }
  for (auto& m : result.members) std::sort(m.begin(), m.end());
  return result;
}

Projection project_2d(const ModelState& state) {
  const int n = state.n_objects();
  const int d = state.dim();
  Projection out;
  out.points.assign(n, {0.0, 0.0});
  if (n == 0) return out;

  if (d == 1) {
    for (int i = 0; i < n; ++i) out.points[i] = {state.embeddings(i, 0), 0.0};
    out.degenerate = true;
    return out;
  }

  const Eigen::RowVectorXd mean = state.embeddings.colwise().mean();
  const Eigen::MatrixXd centered = state.embeddings.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::VectorXd values = solver.eigenvalues();   // ascending
  const Eigen::MatrixXd vectors = solver.eigenvectors();

  const double top = std::max(values(d - 1), 0.0);
  const double second = std::max(values(d - 2), 0.0);
  const double floor = 1e-12 * std::max(1.0, top);
  std::array<Eigen::VectorXd, 2> axes;
  for (int a = 0; a < 2; ++a) {
    Eigen::VectorXd v = vectors.col(d - 1 - a);
    for (int c = 0; c < d; ++c) {
      if (std::abs(v(c)) > 1e-12) {
        if (v(c) < 0) v = -v;
        break;
      }
    }
    axes[a] = v;
  }
  const bool first_ok = top > floor;
  const bool second_ok = second > floor;
  out.degenerate = !second_ok;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd row = centered.row(i).transpose();
    out.points[i] = {first_ok ? row.dot(axes[0]) : 0.0, second_ok ? row.dot(axes[1]) : 0.0};
  }
  return out;
}

ClusteringResult summarize(const ModelState& state, const std::vector<ObjectId>& object_ids) {
  ClusteringResult result = extract_clusters(state, object_ids);
  const Projection projection = project_2d(state);
  result.projection_degenerate = projection.degenerate;
  for (std::size_t i = 0; i < object_ids.size(); ++i)
    result.projection.emplace(object_ids[i], projection.points[i]);
  return result;
}

}  // namespace crowdcluster
