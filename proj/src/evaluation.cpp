#include "crowdcluster/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "crowdcluster/rng.hpp"

namespace crowdcluster {

namespace {

std::string task_name(int cluster, int index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "it-c%03d-t%04d", cluster, index);
  return buf;
}

}  // namespace

IntruderGeneration generate_intruder_tasks(const ClusteringResult& result, int display_size,
                                           int tasks_per_cluster, std::uint64_t seed) {
  if (display_size < 2) throw ValidationError("intruder display size must be at least 2");
  if (tasks_per_cluster < 1) throw ValidationError("tasks_per_cluster must be at least 1");
  const int clusters = static_cast<int>(result.members.size());
  if (clusters < 2)
    throw ProtocolError("intruder undefined: the clustering has " + std::to_string(clusters) +
                        " cluster(s), at least 2 are needed");

  const auto need = static_cast<std::size_t>(display_size - 1);
  IntruderGeneration out;
  bool any_eligible = false;
  for (int c = 0; c < clusters; ++c) {
    const auto& members = result.members[c];
    if (members.size() < need) {
      out.diagnostics.push_back("cluster " + std::to_string(c) + " skipped: " +
                                std::to_string(members.size()) + " members, need " +
                                std::to_string(need));
      continue;
    }
    any_eligible = true;
    std::vector<ObjectId> outsiders;
    for (int other = 0; other < clusters; ++other) {
      if (other == c) continue;
      outsiders.insert(outsiders.end(), result.members[other].begin(),
                       result.members[other].end());
    }
    std::sort(outsiders.begin(), outsiders.end());
    for (int t = 0; t < tasks_per_cluster; ++t) {
      const std::uint64_t task_seed =
          derive_seed(seed, (static_cast<std::uint64_t>(c) << 32) | static_cast<std::uint32_t>(t));
      std::mt19937_64 rng(task_seed);
      IntruderTask task;
      task.task_id = task_name(c, t);
      task.cluster_id = c;
      task.seed = task_seed;
      std::sample(members.begin(), members.end(), std::back_inserter(task.shown_objects), need,
                  rng);
      task.intruder =
          outsiders[std::uniform_int_distribution<std::size_t>(0, outsiders.size() - 1)(rng)];
      task.shown_objects.push_back(task.intruder);
      std::shuffle(task.shown_objects.begin(), task.shown_objects.end(), rng);
      out.tasks.push_back(std::move(task));
    }
  }
  if (!any_eligible)
    throw ProtocolError("intruder undefined: no cluster has the " + std::to_string(need) +
                        " members a display needs");
  return out;
}

void validate_intruder_task(const IntruderTask& task, const Partition& clusters) {
  const std::set<ObjectId> shown(task.shown_objects.begin(), task.shown_objects.end());
  if (shown.size() != task.shown_objects.size())
    throw ValidationError("task " + task.task_id + ": duplicate shown object");
  if (!shown.count(task.intruder))
    throw ValidationError("task " + task.task_id + ": intruder is not displayed");
  for (const auto& id : task.shown_objects) {
    auto it = clusters.assignment.find(id);
    if (it == clusters.assignment.end())
      throw ValidationError("task " + task.task_id + ": unknown object " + id);
    const bool in_cluster = it->second == task.cluster_id;
    if (id == task.intruder && in_cluster)
      throw ValidationError("task " + task.task_id + ": intruder belongs to the cluster");
    if (id != task.intruder && !in_cluster)
      throw ValidationError("task " + task.task_id + ": member " + id +
                            " is outside the cluster");
  }
}

EvaluationReport score_intruder(const std::vector<IntruderTask>& tasks,
                                const std::vector<IntruderResponse>& responses) {
  if (responses.empty()) throw ValidationError("no intruder responses to score");
  std::map<std::string, const IntruderTask*> by_id;
  for (const auto& t : tasks) by_id.emplace(t.task_id, &t);

  EvaluationReport report;
  for (const auto& r : responses) {
    auto it = by_id.find(r.task_id);
    if (it == by_id.end()) throw ValidationError("response for unknown task " + r.task_id);
    const IntruderTask& task = *it->second;
    if (std::find(task.shown_objects.begin(), task.shown_objects.end(), r.chosen) ==
        task.shown_objects.end())
      throw ValidationError("task " + r.task_id + ": chosen object " + r.chosen +
                            " was not displayed");
    auto& cell = report.per_cluster[task.cluster_id];
    ++cell.total;
    ++report.total;
    if (r.chosen == task.intruder) {
      ++cell.correct;
      ++report.correct;
    }
  }
  for (auto& [cluster, cell] : report.per_cluster)
    cell.quality = static_cast<double>(cell.correct) / static_cast<double>(cell.total);
  report.overall_quality = static_cast<double>(report.correct) / static_cast<double>(report.total);
  report.ci95 = wilson_interval(report.correct, report.total);
  return report;
}

std::pair<double, double> wilson_interval(long long successes, long long trials, double z) {
  if (trials <= 0) throw ValidationError("wilson_interval needs at least one trial");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = p + z2 / (2.0 * n);
  const double spread = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, (center - spread) / denom), std::min(1.0, (center + spread) / denom)};
}

std::string report_table(const EvaluationReport& report) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s\n", "cluster", "correct", "total",
                "quality");
  out += line;
  for (const auto& [cluster, cell] : report.per_cluster) {
    std::snprintf(line, sizeof line, "%-10d %8lld %8lld %8.4f\n", cluster, cell.correct,
                  cell.total, cell.quality);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-10s %8lld %8lld %8.4f\n", "overall", report.correct,
                report.total, report.overall_quality);
  out += line;
  std::snprintf(line, sizeof line, "95%% Wilson interval: [%.4f, %.4f]\n", report.ci95.first,
                report.ci95.second);
  out += line;
  return out;
}

}  // namespace crowdcluster
