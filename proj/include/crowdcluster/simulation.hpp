#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crowdcluster/aggregation.hpp"
#include "crowdcluster/core.hpp"
#include "crowdcluster/evaluation.hpp"
#include "crowdcluster/sampler.hpp"

namespace crowdcluster {

// A planted ground truth for end-to-end runs without a real crowd.
struct WorldSpec {
  int N = 0;
  int K_true = 0;
  int attribute_count = 1;
  std::uint64_t seed = 0;
  std::vector<ObjectId> object_ids;
  Partition truth;
  std::map<ObjectId, int> attributes;
};

enum class WorkerKind { kFaithful, kNoisy, kSplitter, kSpammer };

std::string to_string(WorkerKind kind);
WorkerKind worker_kind_from_string(const std::string& text);

struct SimWorker {
  WorkerId worker_id;
  WorkerKind kind = WorkerKind::kFaithful;
  double p_flip = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

WorldSpec make_world(int n, int k_true, int attribute_count, std::uint64_t seed);

// Answers are a pure function of (worker.seed, page_id).
GroupingResponse simulate_grouping(const SimWorker& worker, const Page& page,
                                   const WorldSpec& world);

IntruderResponse simulate_intruder_pick(const SimWorker& worker, const IntruderTask& task,
                                        const WorldSpec& world);

// count workers of one kind with ids prefix0000.., seeds derived from base.
std::vector<SimWorker> make_crowd(const std::string& prefix, WorkerKind kind, int count,
                                  double p_flip, std::uint64_t seed);

struct PipelineOptions {
  int M = kDefaultPageSize;
  int R = kDefaultReplication;
  std::optional<int> V;  // occurrences_per_object(N, M) when unset
  std::uint64_t plan_seed = 0;
  AggregationConfig aggregation;
  int display_size = kDefaultDisplaySize;
  int tasks_per_cluster = kDefaultTasksPerCluster;
  int evaluation_replication = kDefaultEvaluators;
  std::uint64_t evaluation_seed = 0;
  std::vector<SimWorker> evaluators;  // faithful evaluators when empty
};

struct PipelineMetrics {
  double ari = 0.0;
  int cluster_count = 0;
  std::optional<double> intruder_quality;  // unset when fewer than 2 clusters
  long long intruder_responses = 0;
  long long pair_count = 0;
  int sweep_count = 0;
  double objective = 0.0;
  int V = 0;
  int pages = 0;
  std::vector<std::string> diagnostics;
  ClusteringResult clustering;
  std::optional<EvaluationReport> report;
};

// Picks R distinct workers per page, deterministically per (seed, page_id).
std::vector<std::size_t> assign_workers(const std::string& page_id, std::size_t worker_count,
                                        int replication, std::uint64_t seed);

std::vector<GroupingResponse> simulate_responses(const SamplingPlan& plan,
                                                 const std::vector<SimWorker>& workers,
                                                 const WorldSpec& world, std::uint64_t seed);

PipelineMetrics run_pipeline(const WorldSpec& world, const std::vector<SimWorker>& workers,
                             const PipelineOptions& options);

}  // namespace crowdcluster
