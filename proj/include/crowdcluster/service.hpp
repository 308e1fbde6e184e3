#pragma once

// Project coordinator. Every mutation is an event appended to the project's
// JSON Lines log and then applied to memory by the same function replay uses,
// so reopening a data directory rebuilds the exact in-memory state.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crowdcluster/io.hpp"

namespace crowdcluster::service {

enum class ProjectState { kCollecting, kAggregating, kAggregated, kEvaluating, kDone };

std::string to_string(ProjectState state);
ProjectState project_state_from_string(const std::string& text);

struct ProjectConfig {
  int M = kDefaultPageSize;
  int R = kDefaultReplication;
  std::optional<int> V;
  std::uint64_t seed = 0;
  AggregationConfig aggregation;
  int display_size = kDefaultDisplaySize;
  int tasks_per_cluster = kDefaultTasksPerCluster;
  int evaluation_replication = kDefaultEvaluators;
  double skill_threshold = kDefaultSkillThreshold;
};

void to_json(Json& j, const ProjectConfig& v);
void from_json(const Json& j, ProjectConfig& v);

struct Event {
  long long sequence_number = 0;
  std::int64_t timestamp = 0;  // ms since epoch
  std::string kind;
  Json payload;
};

void to_json(Json& j, const Event& v);
void from_json(const Json& j, Event& v);

struct Lease {
  std::string task_kind;  // training | grouping | intruder
  std::int64_t expires = 0;
};

struct WorkerRecord {
  std::vector<GroupingResponse> training;
  WorkerProfile profile;
};

struct JobRecord {
  std::string job_id;
  std::string status;  // running | succeeded | failed
  ProjectState prior_state = ProjectState::kCollecting;
  std::string error;
  std::int64_t started = 0;
  std::int64_t finished = 0;
};

// Everything the log determines. Progress counters of a running job are not
// part of it.
struct ProjectData {
  std::string project_id;
  std::vector<ObjectRecord> objects;
  ProjectConfig config;
  SamplingPlan plan;
  ProjectState state = ProjectState::kCollecting;
  std::int64_t created = 0;
  long long last_sequence = 0;

  std::map<WorkerId, WorkerRecord> workers;
  std::map<std::pair<std::string, WorkerId>, Lease> leases;
  std::map<std::pair<std::string, WorkerId>, Json> acks;
  std::map<std::string, std::vector<GroupingResponse>> page_responses;
  std::map<WorkerId, std::set<std::string>> answered;

  int job_counter = 0;
  std::optional<JobRecord> job;
  std::optional<Json> results;  // {job_id, result, diagnostics}

  std::vector<IntruderTask> evaluation_tasks;
  std::map<std::string, std::vector<IntruderResponse>> evaluation_responses;
};

// Applies one event. Pure: the outcome depends only on data and event.
void apply(ProjectData& data, const Event& event);

// Canonical JSON of the replayable state; equal states dump identically.
Json state_json(const ProjectData& data);

using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

struct CoordinatorOptions {
  std::filesystem::path data_dir = "data";
  std::int64_t lease_ms = 30 * 60 * 1000;
  Clock clock = system_clock_ms;
  bool synchronous_jobs = false;  // run aggregation inline (CLI, tests)
  int snapshot_every = 64;
};

class Coordinator {
 public:
  explicit Coordinator(CoordinatorOptions options);
  ~Coordinator();
  Coordinator(const Coordinator&) = delete;
  Coordinator& operator=(const Coordinator&) = delete;

  // Body: {"project_id"?, "objects": [...], "config"?: {...}}.
  Json create_project(const Json& request);
  Json describe(const std::string& project_id) const;
  std::vector<std::string> project_ids() const;

  Json next_task(const std::string& project_id, const WorkerId& worker_id);
  // Grouping responses carry "groups", intruder responses carry "chosen".
  Json submit(const std::string& project_id, const Json& response);
  Json submit(const std::string& project_id, const GroupingResponse& response);
  Json submit(const std::string& project_id, const IntruderResponse& response);

  Json start_aggregation(const std::string& project_id);
  void wait_for_job(const std::string& project_id);
  Json results(const std::string& project_id) const;

  Json start_evaluation(const std::string& project_id);
  EvaluationReport report(const std::string& project_id) const;

  std::vector<Event> events(const std::string& project_id) const;
  Json state(const std::string& project_id) const;

  // Marks jobs left running by a previous process as failed.
  void recover_interrupted_jobs();

  const std::vector<TrainingItem>& curriculum() const { return curriculum_; }

 private:
  struct Project;

  Project& find(const std::string& project_id) const;
  Event append(Project& project, const std::string& kind, Json payload);
  void run_aggregation(Project& project, std::string job_id);
  void load_existing();

  CoordinatorOptions options_;
  std::vector<TrainingItem> curriculum_;
  mutable std::mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<Project>> projects_;
};

// Reads an event log, dropping a torn final line. Throws Error on any other
// corruption.
std::vector<Event> read_event_log(const std::filesystem::path& path);

}  // namespace crowdcluster::service
