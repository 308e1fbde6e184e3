#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "crowdcluster/core.hpp"

namespace crowdcluster {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct AggregationConfig {
  int dim = 4;
  int max_components = 20;
  double alpha = 1.0;
  double sigma_x = 0.7;    // component spread
  double sigma_mu = 2.0;   // prior on component means
  double sigma_s = 0.5;    // prior on worker scale around 1
  double sigma_tau = 1.0;  // prior on worker bias around 0
  int max_sweeps = 500;
  double rel_tol = 1e-6;
  int restarts = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

// Pair evidence with objects and workers replaced by dense indices.
struct IndexedPair {
  int a = 0;
  int b = 0;
  int worker = 0;
  bool same = false;
};

// Pair list plus incidence lists used by the gradient gathers.
class PairSet {
 public:
  PairSet(std::vector<IndexedPair> pairs, int n_objects, int n_workers);

  const std::vector<IndexedPair>& pairs() const { return pairs_; }
  int n_objects() const { return n_objects_; }
  int n_workers() const { return n_workers_; }
  std::size_t size() const { return pairs_.size(); }

  // CSR: pairs touching object i are object_pairs[object_offsets[i] ..
  // object_offsets[i+1]); same for workers.
  const std::vector<std::size_t>& object_offsets() const { return object_offsets_; }
  const std::vector<std::uint32_t>& object_pairs() const { return object_pairs_; }
  // The other endpoint of each object_pairs entry.
  const std::vector<std::uint32_t>& object_neighbors() const { return object_neighbors_; }
  const std::vector<std::size_t>& worker_offsets() const { return worker_offsets_; }
  const std::vector<std::uint32_t>& worker_pairs() const { return worker_pairs_; }

 private:
  std::vector<IndexedPair> pairs_;
  int n_objects_;
  int n_workers_;
  std::vector<std::size_t> object_offsets_;
  std::vector<std::uint32_t> object_pairs_;
  std::vector<std::uint32_t> object_neighbors_;
  std::vector<std::size_t> worker_offsets_;
  std::vector<std::uint32_t> worker_pairs_;
};

struct ModelState {
  RowMatrix embeddings;            // N x D
  Eigen::VectorXd scale;           // per worker
  Eigen::VectorXd bias;            // per worker
  RowMatrix means;                 // K x D
  Eigen::VectorXd weights;         // K, on the simplex
  RowMatrix responsibilities;      // N x K, rows on the simplex
  double objective = 0.0;

  int n_objects() const { return static_cast<int>(embeddings.rows()); }
  int dim() const { return static_cast<int>(embeddings.cols()); }
  int n_components() const { return static_cast<int>(means.rows()); }
  int n_workers() const { return static_cast<int>(scale.size()); }
};

struct ObjectiveGradient {
  RowMatrix embeddings;
  Eigen::VectorXd scale;
  Eigen::VectorXd bias;
};

struct SweepRecord {
  int sweep = 0;
  double objective = 0.0;
  int active_components = 0;
  int halvings = 0;
  std::vector<std::string> skipped_blocks;
};

struct FitDiagnostics {
  int best_restart = 0;
  std::vector<double> restart_objectives;
  std::vector<int> restart_sweeps;
  std::vector<SweepRecord> sweeps;  // of the winning restart
  bool converged = false;
};

struct FitResult {
  ModelState state;
  FitDiagnostics diagnostics;
};

struct ClusteringResult {
  Partition assignment;
  int cluster_count = 0;
  std::vector<std::vector<ObjectId>> members;  // by cluster label
  std::map<ObjectId, std::array<double, 2>> projection;
  bool projection_degenerate = false;
};

// Maps string-keyed pair labels onto dense indices. Objects and workers are
// numbered in lexicographic order unless explicit object ids are supplied.
struct IndexedEvidence {
  std::vector<ObjectId> object_ids;
  std::vector<WorkerId> worker_ids;
  std::vector<IndexedPair> pairs;
};
IndexedEvidence index_evidence(const std::vector<PairLabel>& labels,
                               std::vector<ObjectId> object_ids = {});

double logistic(double z);

// sigma(s_j <x_a, x_b> + tau_j).
double pair_probability(const ModelState& state, int a, int b, int worker);

// Free energy: pair log-likelihood, mixture terms with responsibility
// entropy, and the log-priors on s, tau, mu and pi.
double objective(const ModelState& state, const PairSet& pairs,
                 const AggregationConfig& config);

// d objective / d (X, s, tau), responsibilities held fixed.
ObjectiveGradient objective_gradient(const ModelState& state, const PairSet& pairs,
                                     const AggregationConfig& config);

// Exact maximizers given everything else.
void update_responsibilities(ModelState& state, const AggregationConfig& config);
void update_components(ModelState& state, const AggregationConfig& config);

// E step, closed-form means and weights, then one Armijo gradient step on
// each of the embedding, scale and bias blocks. step_sizes carries the
// accepted step per block across sweeps.
ModelState em_step(const ModelState& state, const PairSet& pairs,
                   const AggregationConfig& config, SweepRecord* record = nullptr,
                   std::array<double, 3>* step_sizes = nullptr);

ModelState initial_state(int n_objects, int n_workers, const AggregationConfig& config,
                         std::uint64_t seed);

using SweepCallback = std::function<void(int restart, const SweepRecord&)>;

FitResult fit(const PairSet& pairs, const AggregationConfig& config,
              const SweepCallback& on_sweep = {});

// Convenience overload matching the pair-list contract.
FitResult fit(const std::vector<IndexedPair>& pairs, int n_objects, int n_workers,
              const AggregationConfig& config);

// argmax responsibilities (ties to the lower component), empty components
// dropped, labels renumbered by decreasing size.
ClusteringResult extract_clusters(const ModelState& state,
                                  const std::vector<ObjectId>& object_ids);

struct Projection {
  std::vector<std::array<double, 2>> points;
  bool degenerate = false;
};
Projection project_2d(const ModelState& state);

// extract_clusters plus project_2d keyed by object id.
ClusteringResult summarize(const ModelState& state, const std::vector<ObjectId>& object_ids);

int active_components(const ModelState& state);

}  // namespace crowdcluster
