#include "crowdcluster/service.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <regex>
#include <thread>

namespace crowdcluster::service {

namespace {

using Key = std::pair<std::string, WorkerId>;

const char* kStateNames[] = {"collecting", "aggregating", "aggregated", "evaluating", "done"};

std::string key_text(const Key& k) { return k.first + "|" + k.second; }

const Page* find_page(const SamplingPlan& plan, const std::string& page_id) {
  for (const auto& p : plan.pages) {
    if (p.page_id == page_id) return &p;
  }
  return nullptr;
}

const TrainingItem* find_training(const std::vector<TrainingItem>& items, const std::string& id) {
  for (const auto& item : items) {
    if (item.page.page_id == id) return &item;
  }
  return nullptr;
}

const IntruderTask* find_intruder(const ProjectData& d, const std::string& task_id) {
  for (const auto& t : d.evaluation_tasks) {
    if (t.task_id == task_id) return &t;
  }
  return nullptr;
}

std::string job_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "job-%04d", index);
  return buf;
}

void validate_config(const ProjectConfig& c) {
  if (c.M < 2) throw ValidationError("config: M must be at least 2");
  if (c.R < 1) throw ValidationError("config: R must be at least 1");
  if (c.V && *c.V < 1) throw ValidationError("config: V must be at least 1");
  if (c.display_size < 2) throw ValidationError("config: display_size must be at least 2");
  if (c.tasks_per_cluster < 1) throw ValidationError("config: tasks_per_cluster must be at least 1");
  if (c.evaluation_replication < 1)
    throw ValidationError("config: evaluation_replication must be at least 1");
  if (!(c.skill_threshold >= 0 && c.skill_threshold <= 100))
    throw ValidationError("config: skill_threshold must be in [0, 100]");
  c.aggregation.validate();
}

bool all_evaluated(const ProjectData& d) {
  if (d.evaluation_tasks.empty()) return false;
  for (const auto& t : d.evaluation_tasks) {
    auto it = d.evaluation_responses.find(t.task_id);
    const std::size_t have = it == d.evaluation_responses.end() ? 0 : it->second.size();
    if (have < static_cast<std::size_t>(d.config.evaluation_replication)) return false;
  }
  return true;
}

Json object_records(const std::vector<ObjectRecord>& all, const std::vector<ObjectId>& ids) {
  std::map<ObjectId, const ObjectRecord*> by_id;
  for (const auto& o : all) by_id.emplace(o.object_id, &o);
  Json out = Json::array();
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    out.push_back(it == by_id.end() ? Json(ObjectRecord{id, id, {}}) : Json(*it->second));
  }
  return out;
}

struct LogContents {
  std::vector<Event> events;
  std::uintmax_t good_bytes = 0;
  bool torn = false;
};

LogContents read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open event log " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  LogContents out;
  std::size_t pos = 0;
  long long last = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = text.substr(pos, complete ? nl - pos : std::string::npos);
    Event e;
    try {
      e = Json::parse(line).get<Event>();
    } catch (const std::exception& ex) {
      if (!complete) {
        out.torn = true;
        break;
      }
      throw Error("corrupt event log " + path.string() + " at byte " + std::to_string(pos) +
                  ": " + ex.what());
    }
    if (!complete) {
      // A parseable line without its newline is still an unfinished write.
      out.torn = true;
      break;
    }
    if (e.sequence_number != last + 1)
      throw Error("event log " + path.string() + ": sequence " +
                  std::to_string(e.sequence_number) + " follows " + std::to_string(last));
    last = e.sequence_number;
    out.events.push_back(std::move(e));
    pos = nl + 1;
    out.good_bytes = pos;
  }
  return out;
}

}  // namespace

std::string to_string(ProjectState state) { return kStateNames[static_cast<int>(state)]; }

ProjectState project_state_from_string(const std::string& text) {
  for (int i = 0; i < 5; ++i) {
    if (text == kStateNames[i]) return static_cast<ProjectState>(i);
  }
  throw ValidationError("unknown project state '" + text + "'");
}

void to_json(Json& j, const ProjectConfig& v) {
  j = Json{{"M", v.M},
           {"R", v.R},
           {"V", v.V ? Json(*v.V) : Json(nullptr)},
           {"seed", v.seed},
           {"aggregation", v.aggregation},
           {"display_size", v.display_size},
           {"tasks_per_cluster", v.tasks_per_cluster},
           {"evaluation_replication", v.evaluation_replication},
           {"skill_threshold", v.skill_threshold}};
}

void from_json(const Json& j, ProjectConfig& v) {
  ProjectConfig d;
  v.M = j.value("M", d.M);
  v.R = j.value("R", d.R);
  v.V.reset();
  if (j.contains("V") && !j.at("V").is_null()) v.V = j.at("V").get<int>();
  v.seed = j.value("seed", d.seed);
  v.aggregation = j.contains("aggregation") ? j.at("aggregation").get<AggregationConfig>()
                                            : AggregationConfig{};
  if (!j.contains("aggregation") || !j.at("aggregation").contains("seed"))
    v.aggregation.seed = v.seed;
  v.display_size = j.value("display_size", d.display_size);
  v.tasks_per_cluster = j.value("tasks_per_cluster", d.tasks_per_cluster);
  v.evaluation_replication = j.value("evaluation_replication", d.evaluation_replication);
  v.skill_threshold = j.value("skill_threshold", d.skill_threshold);
}

void to_json(Json& j, const Event& v) {
  j = Json{{"sequence_number", v.sequence_number},
           {"timestamp", v.timestamp},
           {"kind", v.kind},
           {"payload", v.payload}};
}

void from_json(const Json& j, Event& v) {
  j.at("sequence_number").get_to(v.sequence_number);
  j.at("timestamp").get_to(v.timestamp);
  j.at("kind").get_to(v.kind);
  v.payload = j.at("payload");
}

void apply(ProjectData& d, const Event& e) {
  if (e.sequence_number != d.last_sequence + 1)
    throw Error("event " + std::to_string(e.sequence_number) + " applied out of order after " +
                std::to_string(d.last_sequence));
  const Json& p = e.payload;

  if (e.kind == "created") {
    d.project_id = p.at("project_id").get<std::string>();
    d.objects = p.at("objects").get<std::vector<ObjectRecord>>();
    d.config = p.at("config").get<ProjectConfig>();
    d.plan = p.at("plan").get<SamplingPlan>();
    d.state = ProjectState::kCollecting;
    d.created = e.timestamp;
  } else if (e.kind == "assignment") {
    const std::string task = p.at("task_id").get<std::string>();
    const Key key{task, p.at("worker_id").get<WorkerId>()};
    for (auto it = d.leases.lower_bound({task, ""}); it != d.leases.end() && it->first.first == task;) {
      it = it->second.expires <= e.timestamp ? d.leases.erase(it) : std::next(it);
    }
    d.leases[key] = Lease{p.at("task_kind").get<std::string>(), p.at("expires").get<std::int64_t>()};
  } else if (e.kind == "response") {
    const auto r = p.at("response").get<GroupingResponse>();
    const Key key{r.page_id, r.worker_id};
    if (p.at("training").get<bool>()) {
      auto& w = d.workers[r.worker_id];
      w.profile.worker_id = r.worker_id;
      w.training.push_back(r);
    } else {
      d.page_responses[r.page_id].push_back(r);
    }
    d.answered[r.worker_id].insert(r.page_id);
    d.leases.erase(key);
    d.acks[key] = p.at("ack");
  } else if (e.kind == "qualification") {
    const auto profile = p.at("profile").get<WorkerProfile>();
    d.workers[profile.worker_id].profile = profile;
  } else if (e.kind == "job") {
    const std::string job_kind = p.at("job").get<std::string>();
    const std::string status = p.at("status").get<std::string>();
    if (job_kind == "aggregation") {
      if (status == "started") {
        ++d.job_counter;
        d.job = JobRecord{p.at("job_id").get<std::string>(), "running", d.state, "", e.timestamp, 0};
        d.state = ProjectState::kAggregating;
      } else {
        if (!d.job) throw Error("job result without a started job");
        d.job->status = status;
        d.job->finished = e.timestamp;
        if (status == "succeeded") {
          d.results = Json{{"job_id", d.job->job_id},
                           {"result", p.at("result")},
                           {"diagnostics", p.at("diagnostics")}};
          d.state = ProjectState::kAggregated;
        } else {
          d.job->error = p.value("error", std::string{});
          d.state = d.job->prior_state;
        }
      }
    } else if (job_kind == "evaluation") {
      d.evaluation_tasks = p.at("tasks").get<std::vector<IntruderTask>>();
      d.evaluation_responses.clear();
      d.state = ProjectState::kEvaluating;
    } else {
      throw Error("unknown job kind '" + job_kind + "'");
    }
  } else if (e.kind == "evaluation_response") {
    const auto r = p.at("response").get<IntruderResponse>();
    const Key key{r.task_id, r.worker_id};
    d.evaluation_responses[r.task_id].push_back(r);
    d.leases.erase(key);
    d.acks[key] = p.at("ack");
    if (all_evaluated(d)) d.state = ProjectState::kDone;
  } else {
    throw Error("unknown event kind '" + e.kind + "'");
  }
  d.last_sequence = e.sequence_number;
}

Json state_json(const ProjectData& d) {
  Json workers = Json::object();
  for (const auto& [id, w] : d.workers)
    workers[id] = Json{{"training", w.training}, {"profile", w.profile}};
  Json leases = Json::object();
  for (const auto& [k, l] : d.leases)
    leases[key_text(k)] = Json{{"task_kind", l.task_kind}, {"expires", l.expires}};
  Json acks = Json::object();
  for (const auto& [k, a] : d.acks) acks[key_text(k)] = a;
  Json answered = Json::object();
  for (const auto& [w, pages] : d.answered) answered[w] = pages;
  Json job = nullptr;
  if (d.job) {
    job = Json{{"job_id", d.job->job_id},       {"status", d.job->status},
               {"prior_state", to_string(d.job->prior_state)}, {"error", d.job->error},
               {"started", d.job->started},     {"finished", d.job->finished}};
  }
  return Json{{"project_id", d.project_id},
              {"objects", d.objects},
              {"config", d.config},
              {"plan", d.plan},
              {"state", to_string(d.state)},
              {"created", d.created},
              {"last_sequence", d.last_sequence},
              {"workers", workers},
              {"leases", leases},
              {"acks", acks},
              {"page_responses", d.page_responses},
              {"answered", answered},
              {"job_counter", d.job_counter},
              {"job", job},
              {"results", d.results ? *d.results : Json(nullptr)},
              {"evaluation_tasks", d.evaluation_tasks},
              {"evaluation_responses", d.evaluation_responses}};
}

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::vector<Event> read_event_log(const std::filesystem::path& path) {
  return read_log(path).events;
}

struct Coordinator::Project {
  std::mutex mutex;
  std::condition_variable job_done;
  ProjectData data;
  std::vector<Event> events;
  std::filesystem::path dir;
  std::ofstream log;
  std::thread job_thread;
  bool job_active = false;
  std::atomic<int> restart{0};
  std::atomic<int> sweeps{0};
};

Coordinator::Coordinator(CoordinatorOptions options)
    : options_(std::move(options)), curriculum_(default_curriculum()) {
  if (options_.lease_ms <= 0) throw ValidationError("lease duration must be positive");
  if (!options_.clock) options_.clock = system_clock_ms;
  validate_curriculum(curriculum_);
  std::filesystem::create_directories(options_.data_dir / "projects");
  load_existing();
}

Coordinator::~Coordinator() {
  std::lock_guard<std::mutex> registry(registry_mutex_);
  for (auto& [id, project] : projects_) {
    if (project->job_thread.joinable()) project->job_thread.join();
  }
}

void Coordinator::load_existing() {
  for (const auto& entry : std::filesystem::directory_iterator(options_.data_dir / "projects")) {
    const auto log_path = entry.path() / "events.jsonl";
    if (!entry.is_directory() || !std::filesystem::exists(log_path)) continue;
    LogContents contents = read_log(log_path);
    if (contents.torn) std::filesystem::resize_file(log_path, contents.good_bytes);
    if (contents.events.empty()) continue;
    auto project = std::make_unique<Project>();
    for (const auto& e : contents.events) apply(project->data, e);
    project->events = std::move(contents.events);
    project->dir = entry.path();
    project->log.open(log_path, std::ios::binary | std::ios::app);
    if (!project->log) throw Error("cannot append to " + log_path.string());
    projects_.emplace(project->data.project_id, std::move(project));
  }
}

Coordinator::Project& Coordinator::find(const std::string& project_id) const {
  std::lock_guard<std::mutex> registry(registry_mutex_);
  auto it = projects_.find(project_id);
  if (it == projects_.end()) throw NotFoundError("project " + project_id + " not found");
  return *it->second;
}

Event Coordinator::append(Project& project, const std::string& kind, Json payload) {
  Event e{project.data.last_sequence + 1, options_.clock(), kind, std::move(payload)};
  project.log << Json(e).dump() << '\n';
  project.log.flush();
  if (!project.log) throw Error("failed to append to the event log of " + project.data.project_id);
  apply(project.data, e);
  project.events.push_back(e);
  if (options_.snapshot_every > 0 && e.sequence_number % options_.snapshot_every == 0) {
    // Informational only; recovery always replays the log.
    const auto tmp = project.dir / "snapshot.json.tmp";
    write_text_file(tmp, state_json(project.data).dump());
    std::filesystem::rename(tmp, project.dir / "snapshot.json");
  }
  return e;
}

Json Coordinator::create_project(const Json& request) {
  if (!request.is_object()) throw ValidationError("project request must be a JSON object");
  if (!request.contains("objects")) throw ValidationError("project request needs objects");
  const auto objects = objects_from_json(request.at("objects"));
  const ProjectConfig config =
      decode<ProjectConfig>(request.value("config", Json::object()), "project config");
  validate_config(config);
  const int v = config.V ? *config.V
                         : occurrences_per_object(static_cast<long long>(objects.size()), config.M);
  const SamplingPlan plan = build_plan(objects, config.M, v, config.R, config.seed);

  std::lock_guard<std::mutex> registry(registry_mutex_);
  std::string id = request.value("project_id", std::string{});
  if (id.empty()) {
    for (int n = static_cast<int>(projects_.size()) + 1;; ++n) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "project-%04d", n);
      if (!projects_.count(buf) && !std::filesystem::exists(options_.data_dir / "projects" / buf)) {
        id = buf;
        break;
      }
    }
  }
  static const std::regex kId("[A-Za-z0-9_-][A-Za-z0-9._-]{0,63}");
  if (!std::regex_match(id, kId))
    throw ValidationError("project_id must match [A-Za-z0-9_-][A-Za-z0-9._-]{0,63}");
  if (projects_.count(id)) throw ConflictError("project " + id + " already exists");

  auto project = std::make_unique<Project>();
  project->dir = options_.data_dir / "projects" / id;
  if (std::filesystem::exists(project->dir / "events.jsonl"))
    throw ConflictError("project directory for " + id + " already holds a log");
  std::filesystem::create_directories(project->dir);
  project->log.open(project->dir / "events.jsonl", std::ios::binary | std::ios::app);
  if (!project->log) throw Error("cannot create the event log for " + id);
  std::lock_guard<std::mutex> lock(project->mutex);
  append(*project, "created",
         Json{{"project_id", id}, {"objects", objects}, {"config", config}, {"plan", plan}});
  Project& ref = *project;
  projects_.emplace(id, std::move(project));

  const ProjectData& d = ref.data;
  return Json{{"project_id", id},
              {"state", to_string(d.state)},
              {"N", d.plan.N},
              {"M", d.plan.M},
              {"V", d.plan.V},
              {"R", d.plan.R},
              {"pages", d.plan.pages.size()}};
}

Json Coordinator::describe(const std::string& project_id) const {
  Project& project = find(project_id);
  std::lock_guard<std::mutex> lock(project.mutex);
  const ProjectData& d = project.data;
  long long responses = 0, complete_pages = 0;
  for (const auto& [page, list] : d.page_responses) {
    responses += static_cast<long long>(list.size());
    if (static_cast<int>(list.size()) >= d.plan.R) ++complete_pages;
  }
  int qualified = 0;
  for (const auto& [id, w] : d.workers) qualified += w.profile.qualified;
  Json job = nullptr;
  if (d.job) {
    job = Json{{"job_id", d.job->job_id}, {"status", d.job->status}};
    if (!d.job->error.empty()) job["error"] = d.job->error;
    if (d.job->status == "running") {
      job["progress"] = Json{{"restart", project.restart.load()},
                             {"sweeps", project.sweeps.load()},
                             {"restarts", d.config.aggregation.restarts},
                             {"max_sweeps", d.config.aggregation.max_sweeps}};
    }
  }
  long long evaluation_responses = 0;
  for (const auto& [t, list] : d.evaluation_responses)
    evaluation_responses += static_cast<long long>(list.size());
  return Json{{"project_id", d.project_id},
              {"state", to_string(d.state)},
              {"config", d.config},
              {"N", d.plan.N},
              {"M", d.plan.M},
              {"V", d.plan.V},
              {"R", d.plan.R},
              {"pages", d.plan.pages.size()},
              {"complete_pages", complete_pages},
              {"responses", responses},
              {"workers", d.workers.size()},
              {"qualified_workers", qualified},
              {"job", job},
              {"has_results", d.results.has_value()},
              {"evaluation", Json{{"tasks", d.evaluation_tasks.size()},
                                  {"responses", evaluation_responses}}},
              {"last_sequence", d.last_sequence}};
}

std::vector<std::string> Coordinator::project_ids() const {
  std::lock_guard<std::mutex> registry(registry_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, p] : projects_) out.push_back(id);
  return out;
}

Json Coordinator::next_task(const std::string& project_id, const WorkerId& worker_id) {
  if (worker_id.empty()) throw ValidationError("worker_id is required");
  Project& project = find(project_id);
  std::lock_guard<std::mutex> lock(project.mutex);
  const ProjectData& d = project.data;
  const std::int64_t now = options_.clock();

  auto describe_task = [&](const std::string& kind, const std::string& task_id,
                           std::int64_t expires) -> Json {
    Json out{{"kind", kind}, {"task_id", task_id}, {"lease_expires", expires}};
    if (kind == "training") {
      const TrainingItem* item = find_training(curriculum_, task_id);
      out["page"] = item->page;
      out["hint"] = item->hint;
      out["objects"] = object_records({}, item->page.object_ids);
      for (std::size_t i = 0; i < curriculum_.size(); ++i) {
        if (&curriculum_[i] == item) out["index"] = i;
      }
      out["of"] = curriculum_.size();
    } else if (kind == "grouping") {
      const Page* page = find_page(d.plan, task_id);
      out["page"] = *page;
      out["objects"] = object_records(d.objects, page->object_ids);
    } else {
      const IntruderTask* t = find_intruder(d, task_id);
      out["cluster_id"] = t->cluster_id;
      out["shown_objects"] = t->shown_objects;
      out["objects"] = object_records(d.objects, t->shown_objects);
    }
    return out;
  };
  auto none = [](const std::string& reason) { return Json{{"kind", "none"}, {"reason", reason}}; };

  for (const auto& [key, lease] : d.leases) {
    if (key.second == worker_id && lease.expires > now)
      return describe_task(lease.task_kind, key.first, lease.expires);
  }

  auto lease = [&](const std::string& kind, const std::string& task_id) {
    const std::int64_t expires = now + options_.lease_ms;
    append(project, "assignment",
           Json{{"task_kind", kind}, {"task_id", task_id}, {"worker_id", worker_id},
                {"expires", expires}});
    return describe_task(kind, task_id, expires);
  };
  auto others_holding = [&](const std::string& task_id) {
    int count = 0;
    for (auto it = d.leases.lower_bound({task_id, ""});
         it != d.leases.end() && it->first.first == task_id; ++it) {
      if (it->first.second != worker_id && it->second.expires > now) ++count;
    }
    return count;
  };

  auto worker = d.workers.find(worker_id);
  const bool qualified = worker != d.workers.end() && worker->second.profile.qualified;
  if (!qualified) {
    const std::size_t done = worker == d.workers.end() ? 0 : worker->second.training.size();
    if (done < curriculum_.size()) return lease("training", curriculum_[done].page.page_id);
    return none("worker did not reach the skill threshold");
  }

  const auto answered_it = d.answered.find(worker_id);
  auto has_answered = [&](const std::string& task_id) {
    return answered_it != d.answered.end() && answered_it->second.count(task_id);
  };

  switch (d.state) {
    case ProjectState::kDone: return none("project is done");
    case ProjectState::kEvaluating: {
      const int r = d.config.evaluation_replication;
      for (const auto& t : d.evaluation_tasks) {
        auto it = d.evaluation_responses.find(t.task_id);
        const int have = it == d.evaluation_responses.end() ? 0 : static_cast<int>(it->second.size());
        bool mine = false;
        if (it != d.evaluation_responses.end()) {
          for (const auto& resp : it->second) mine |= resp.worker_id == worker_id;
        }
        if (!mine && have + others_holding(t.task_id) < r) return lease("intruder", t.task_id);
      }
      return none("no intruder task available");
    }
    default: {
      for (const auto& page : d.plan.pages) {
        if (has_answered(page.page_id)) continue;
        auto it = d.page_responses.find(page.page_id);
        const int have = it == d.page_responses.end() ? 0 : static_cast<int>(it->second.size());
        if (have + others_holding(page.page_id) < d.plan.R) return lease("grouping", page.page_id);
      }
      return none("no page available");
    }
  }
}

Json Coordinator::submit(const std::string& project_id, const Json& response) {
  if (!response.is_object()) throw ValidationError("response must be a JSON object");
  if (response.contains("groups"))
    return submit(project_id, decode<GroupingResponse>(response, "grouping response"));
  if (response.contains("chosen"))
    return submit(project_id, decode<IntruderResponse>(response, "intruder response"));
  throw ValidationError("response needs either groups or chosen");
}

Json Coordinator::submit(const std::string& project_id, const GroupingResponse& r) {
  Project& project = find(project_id);
  std::lock_guard<std::mutex> lock(project.mutex);
  const ProjectData& d = project.data;
  const Key key{r.page_id, r.worker_id};
  if (auto ack = d.acks.find(key); ack != d.acks.end()) return ack->second;

  auto lease = d.leases.find(key);
  if (lease == d.leases.end())
    throw ConflictError("no open assignment of page " + r.page_id + " to worker " + r.worker_id);
  if (lease->second.expires <= options_.clock())
    throw ConflictError("assignment of page " + r.page_id + " to worker " + r.worker_id +
                        " has expired");
  const bool training = lease->second.task_kind == "training";
  if (training) {
    validate_response(r, find_training(curriculum_, r.page_id)->page);
  } else if (lease->second.task_kind == "grouping") {
    validate_response(r, *find_page(d.plan, r.page_id));
    auto done = d.page_responses.find(r.page_id);
    if (done != d.page_responses.end() && static_cast<int>(done->second.size()) >= d.plan.R)
      throw ConflictError("page " + r.page_id + " already has R responses");
  } else {
    throw ConflictError("task " + r.page_id + " expects an intruder response");
  }

  const Json ack{{"status", "accepted"},
                 {"task_id", r.page_id},
                 {"worker_id", r.worker_id},
                 {"sequence_number", d.last_sequence + 1}};
  append(project, "response", Json{{"response", r}, {"training", training}, {"ack", ack}});

  if (training) {
    const auto& answered = d.workers.at(r.worker_id).training;
    WorkerProfile profile;
    if (answered.size() == curriculum_.size()) {
      profile = score_training(answered, curriculum_, d.config.skill_threshold);
    } else {
      int correct = 0;
      for (const auto& a : answered)
        correct += partition_equal(partition_of(a), find_training(curriculum_, a.page_id)->gold);
      profile.worker_id = r.worker_id;
      profile.completed_pages = static_cast<int>(answered.size());
      profile.skill = 100.0 * correct / static_cast<double>(answered.size());
    }
    append(project, "qualification", Json{{"profile", profile}});
  }
  return ack;
}

Json Coordinator::submit(const std::string& project_id, const IntruderResponse& r) {
  Project& project = find(project_id);
  std::lock_guard<std::mutex> lock(project.mutex);
  const ProjectData& d = project.data;
  const Key key{r.task_id, r.worker_id};
  if (auto ack = d.acks.find(key); ack != d.acks.end()) return ack->second;

  auto lease = d.leases.find(key);
  if (lease == d.leases.end())
    throw ConflictError("no open assignment of task " + r.task_id + " to worker " + r.worker_id);
  if (lease->second.expires <= options_.clock())
    throw ConflictError("assignment of task " + r.task_id + " to worker " + r.worker_id +
                        " has expired");
  if (lease->second.task_kind != "intruder")
    throw ConflictError("task " + r.task_id + " expects a grouping response");
  const IntruderTask* task = find_intruder(d, r.task_id);
  if (std::find(task->shown_objects.begin(), task->shown_objects.end(), r.chosen) ==
      task->shown_objects.end())
    throw ValidationError("task " + r.task_id + ": chosen object " + r.chosen +
                          " was not displayed");

  const Json ack{{"status", "accepted"},
                 {"task_id", r.task_id},
                 {"worker_id", r.worker_id},
                 {"sequence_number", d.last_sequence + 1}};
  append(project, "evaluation_response", Json{{"response", r}, {"ack", ack}});
  return ack;
}

Json Coordinator::start_aggregation(const std::string& project_id) {
  Project& project = find(project_id);
  std::unique_lock<std::mutex> lock(project.mutex);
  const ProjectData& d = project.data;
  if (d.state == ProjectState::kAggregating)
    throw ConflictError("an aggregation job is already running for " + project_id);
  if (d.state != ProjectState::kCollecting && d.state != ProjectState::kAggregated)
    throw ConflictError("project " + project_id + " is " + to_string(d.state) +
                        "; aggregation needs collecting or aggregated");
  long long responses = 0;
  for (const auto& [page, list] : d.page_responses) responses += static_cast<long long>(list.size());
  if (responses == 0)
    throw ProtocolError("precondition failed: project " + project_id +
                        " has no grouping responses to aggregate");

  const std::string job_id = job_name(d.job_counter + 1);
  append(project, "job",
         Json{{"job", "aggregation"}, {"status", "started"}, {"job_id", job_id},
              {"responses", responses}});
  if (project.job_thread.joinable()) project.job_thread.join();
  project.job_active = true;
  project.restart = 0;
  project.sweeps = 0;
  if (options_.synchronous_jobs) {
    lock.unlock();
    run_aggregation(project, job_id);
    lock.lock();
    return Json{{"job_id", job_id}, {"status", project.data.job->status}};
  }
  project.job_thread = std::thread([this, &project, job_id] { run_aggregation(project, job_id); });
  return Json{{"job_id", job_id}, {"status", "running"}};
}

void Coordinator::run_aggregation(Project& project, std::string job_id) {
  std::vector<PairLabel> labels;
  std::vector<ObjectId> object_ids;
  AggregationConfig config;
  {
    std::lock_guard<std::mutex> lock(project.mutex);
    const ProjectData& d = project.data;
    for (const auto& page : d.plan.pages) {
      auto it = d.page_responses.find(page.page_id);
      if (it == d.page_responses.end()) continue;
      for (const auto& r : it->second) {
        auto pairs = canonical_pairs(r, page);
        labels.insert(labels.end(), pairs.begin(), pairs.end());
      }
    }
    object_ids = d.plan.object_ids;
    config = d.config.aggregation;
  }

  Json payload{{"job", "aggregation"}, {"job_id", job_id}};
  try {
    const IndexedEvidence evidence = index_evidence(labels, object_ids);
    const PairSet pairs(evidence.pairs, static_cast<int>(evidence.object_ids.size()),
                        static_cast<int>(evidence.worker_ids.size()));
    const FitResult fitted = fit(pairs, config, [&](int restart, const SweepRecord& s) {
      project.restart = restart;
      project.sweeps = s.sweep;
    });
    Json diagnostics = fitted.diagnostics;
    diagnostics["pair_count"] = labels.size();
    diagnostics["worker_count"] = evidence.worker_ids.size();
    diagnostics["objective"] = fitted.state.objective;
    payload["status"] = "succeeded";
    payload["result"] = summarize(fitted.state, evidence.object_ids);
    payload["diagnostics"] = diagnostics;
  } catch (const std::exception& e) {
    payload["status"] = "failed";
    payload["error"] = e.what();
  }

  std::lock_guard<std::mutex> lock(project.mutex);
  append(project, "job", std::move(payload));
  project.job_active = false;
  project.job_done.notify_all();
}

void Coordinator::wait_for_job(const std::string& project_id) {
  Project& project = find(project_id);
  std::unique_lock<std::mutex> lock(project.mutex);
  project.job_done.wait(lock, [&] { return !project.job_active; });
}

Json Coordinator::results(const std::string& project_id) const {
  Project& project = find(project_id);
  std::lock_guard<std::mutex> lock(project.mutex);
  if (!project.data.results)
    throw NotFoundError("project " + project_id + " has no aggregation results yet");
  Json out = *project.data.results;
  out["state"] = to_string(project.data.state);
  return out;
}

Json Coordinator::start_evaluation(const std::string& project_id) {
  Project& project = find(project_id);
  std::lock_guard<std::mutex> lock(project.mutex);
  const ProjectData& d = project.data;
  if (d.state != ProjectState::kAggregated || !d.results)
    throw ConflictError("project " + project_id + " is " + to_string(d.state) +
                        "; evaluation needs aggregated results");
  const auto result = d.results->at("result").get<ClusteringResult>();
  const IntruderGeneration generated = generate_intruder_tasks(
      result, d.config.display_size, d.config.tasks_per_cluster, d.config.seed);
  append(project, "job",
         Json{{"job", "evaluation"}, {"status", "started"}, {"tasks", generated.tasks},
              {"diagnostics", generated.diagnostics}});
  return Json{{"tasks", generated.tasks.size()},
              {"replication", d.config.evaluation_replication},
              {"diagnostics", generated.diagnostics}};
}

EvaluationReport Coordinator::report(const std::string& project_id) const {
  Project& project = find(project_id);
  std::lock_guard<std::mutex> lock(project.mutex);
  const ProjectData& d = project.data;
  std::vector<IntruderResponse> all;
  for (const auto& t : d.evaluation_tasks) {
    auto it = d.evaluation_responses.find(t.task_id);
    if (it != d.evaluation_responses.end()) all.insert(all.end(), it->second.begin(), it->second.end());
  }
  return score_intruder(d.evaluation_tasks, all);
}

std::vector<Event> Coordinator::events(const std::string& project_id) const {
  Project& project = find(project_id);
  std::lock_guard<std::mutex> lock(project.mutex);
  return project.events;
}

Json Coordinator::state(const std::string& project_id) const {
  Project& project = find(project_id);
  std::lock_guard<std::mutex> lock(project.mutex);
  return state_json(project.data);
}

void Coordinator::recover_interrupted_jobs() {
  std::vector<Project*> all;
  {
    std::lock_guard<std::mutex> registry(registry_mutex_);
    for (auto& [id, p] : projects_) all.push_back(p.get());
  }
  for (Project* project : all) {
    std::lock_guard<std::mutex> lock(project->mutex);
    const auto& job = project->data.job;
    if (job && job->status == "running" && !project->job_active) {
      append(*project, "job",
             Json{{"job", "aggregation"}, {"job_id", job->job_id}, {"status", "failed"},
                  {"error", "interrupted by a service restart"}});
    }
  }
}

}  // namespace crowdcluster::service
