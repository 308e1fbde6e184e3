#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "crowdcluster/aggregation.hpp"
#include "crowdcluster/core.hpp"

namespace crowdcluster {

inline constexpr int kDefaultDisplaySize = 6;
inline constexpr int kDefaultTasksPerCluster = 2;
inline constexpr int kDefaultEvaluators = 3;

// G-1 members of one cluster plus one object from elsewhere, in display order.
struct IntruderTask {
  std::string task_id;
  int cluster_id = 0;
  std::vector<ObjectId> shown_objects;
  ObjectId intruder;
  std::uint64_t seed = 0;

  bool operator==(const IntruderTask&) const = default;
};

struct IntruderResponse {
  std::string task_id;
  WorkerId worker_id;
  ObjectId chosen;

  bool operator==(const IntruderResponse&) const = default;
};

struct ClusterScore {
  long long correct = 0;
  long long total = 0;
  double quality = 0.0;
};

struct EvaluationReport {
  double overall_quality = 0.0;
  long long correct = 0;
  long long total = 0;
  std::map<int, ClusterScore> per_cluster;
  std::pair<double, double> ci95{0.0, 0.0};
};

struct IntruderGeneration {
  std::vector<IntruderTask> tasks;
  std::vector<std::string> diagnostics;  // skipped clusters
};

// Throws ProtocolError when fewer than two clusters exist or no cluster has
// G-1 members.
IntruderGeneration generate_intruder_tasks(const ClusteringResult& result,
                                           int display_size = kDefaultDisplaySize,
                                           int tasks_per_cluster = kDefaultTasksPerCluster,
                                           std::uint64_t seed = 0);

void validate_intruder_task(const IntruderTask& task, const Partition& clusters);

EvaluationReport score_intruder(const std::vector<IntruderTask>& tasks,
                                const std::vector<IntruderResponse>& responses);

std::pair<double, double> wilson_interval(long long successes, long long trials,
                                          double z = 1.959963984540054);

std::string report_table(const EvaluationReport& report);

}  // namespace crowdcluster
