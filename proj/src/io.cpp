#include "crowdcluster/io.hpp"

#include <fstream>
#include <sstream>

#include "crowdcluster/rng.hpp"

namespace crowdcluster {

void to_json(Json& j, const ObjectRecord& v) {
  j = Json{{"object_id", v.object_id}, {"payload_uri", v.payload_uri}};
  if (!v.metadata.empty()) j["metadata"] = v.metadata;
}

void from_json(const Json& j, ObjectRecord& v) {
  if (j.is_string()) {
    v.object_id = j.get<std::string>();
    v.payload_uri = v.object_id;
    return;
  }
  j.at("object_id").get_to(v.object_id);
  v.payload_uri = j.value("payload_uri", std::string{});
  if (j.contains("metadata")) {
    for (const auto& [key, value] : j.at("metadata").items())
      v.metadata[key] = value.is_string() ? value.get<std::string>() : value.dump();
  }
}

void to_json(Json& j, const Page& v) {
  j = Json{{"page_id", v.page_id}, {"object_ids", v.object_ids}};
}

void from_json(const Json& j, Page& v) {
  j.at("page_id").get_to(v.page_id);
  j.at("object_ids").get_to(v.object_ids);
}

void to_json(Json& j, const GroupingResponse& v) {
  j = Json{{"page_id", v.page_id}, {"worker_id", v.worker_id}, {"groups", v.groups}};
}

void from_json(const Json& j, GroupingResponse& v) {
  j.at("page_id").get_to(v.page_id);
  j.at("worker_id").get_to(v.worker_id);
  j.at("groups").get_to(v.groups);
}

void to_json(Json& j, const PairLabel& v) {
  j = Json{{"a", v.a}, {"b", v.b}, {"worker_id", v.worker_id}, {"page_id", v.page_id},
           {"same", v.same}};
}

void to_json(Json& j, const Partition& v) { j = v.assignment; }

void from_json(const Json& j, Partition& v) { j.get_to(v.assignment); }

void to_json(Json& j, const SamplingPlan& v) {
  j = Json{{"N", v.N},           {"M", v.M},           {"V", v.V},
           {"R", v.R},           {"seed", v.seed},     {"allow_any_page_size", v.allow_any_page_size},
           {"object_ids", v.object_ids}, {"pages", v.pages}};
}

void from_json(const Json& j, SamplingPlan& v) {
  j.at("N").get_to(v.N);
  j.at("M").get_to(v.M);
  j.at("V").get_to(v.V);
  j.at("R").get_to(v.R);
  v.seed = j.value("seed", std::uint64_t{0});
  v.allow_any_page_size = j.value("allow_any_page_size", false);
  j.at("object_ids").get_to(v.object_ids);
  j.at("pages").get_to(v.pages);
}

void to_json(Json& j, const PlanViolation& v) {
  j = Json{{"page_id", v.page_id}, {"rule", v.rule}, {"detail", v.detail}};
}

void to_json(Json& j, const TrainingItem& v) {
  j = Json{{"page", v.page}, {"gold", v.gold}, {"hint", v.hint}};
}

void from_json(const Json& j, TrainingItem& v) {
  j.at("page").get_to(v.page);
  j.at("gold").get_to(v.gold);
  v.hint = j.value("hint", std::string{});
}

void to_json(Json& j, const WorkerProfile& v) {
  j = Json{{"worker_id", v.worker_id},
           {"skill", v.skill},
           {"qualified", v.qualified},
           {"completed_pages", v.completed_pages}};
}

void from_json(const Json& j, WorkerProfile& v) {
  j.at("worker_id").get_to(v.worker_id);
  j.at("skill").get_to(v.skill);
  j.at("qualified").get_to(v.qualified);
  j.at("completed_pages").get_to(v.completed_pages);
}

void to_json(Json& j, const AggregationConfig& v) {
  j = Json{{"D", v.dim},
           {"K_max", v.max_components},
           {"alpha", v.alpha},
           {"sigma_x", v.sigma_x},
           {"sigma_mu", v.sigma_mu},
           {"sigma_s", v.sigma_s},
           {"sigma_tau", v.sigma_tau},
           {"max_sweeps", v.max_sweeps},
           {"rel_tol", v.rel_tol},
           {"restarts", v.restarts},
           {"seed", v.seed}};
}

void from_json(const Json& j, AggregationConfig& v) {
  AggregationConfig d;
  v.dim = j.value("D", d.dim);
  v.max_components = j.value("K_max", d.max_components);
  v.alpha = j.value("alpha", d.alpha);
  v.sigma_x = j.value("sigma_x", d.sigma_x);
  v.sigma_mu = j.value("sigma_mu", d.sigma_mu);
  v.sigma_s = j.value("sigma_s", d.sigma_s);
  v.sigma_tau = j.value("sigma_tau", d.sigma_tau);
  v.max_sweeps = j.value("max_sweeps", d.max_sweeps);
  v.rel_tol = j.value("rel_tol", d.rel_tol);
  v.restarts = j.value("restarts", d.restarts);
  v.seed = j.value("seed", d.seed);
  v.validate();
}

void to_json(Json& j, const SweepRecord& v) {
  j = Json{{"sweep", v.sweep},
           {"objective", v.objective},
           {"active_components", v.active_components},
           {"halvings", v.halvings}};
  if (!v.skipped_blocks.empty()) j["skipped_blocks"] = v.skipped_blocks;
}

void to_json(Json& j, const FitDiagnostics& v) {
  j = Json{{"best_restart", v.best_restart},
           {"restart_objectives", v.restart_objectives},
           {"restart_sweeps", v.restart_sweeps},
           {"converged", v.converged},
           {"sweeps", v.sweeps.size()}};
}

void to_json(Json& j, const ClusteringResult& v) {
  Json projection = Json::object();
  for (const auto& [id, xy] : v.projection) projection[id] = {xy[0], xy[1]};
  j = Json{{"cluster_count", v.cluster_count},
           {"assignment", v.assignment},
           {"members", v.members},
           {"projection", projection},
           {"projection_degenerate", v.projection_degenerate}};
}

void from_json(const Json& j, ClusteringResult& v) {
  j.at("assignment").get_to(v.assignment);
  j.at("members").get_to(v.members);
  v.cluster_count = j.value("cluster_count", static_cast<int>(v.members.size()));
  v.projection.clear();
  if (j.contains("projection")) {
    for (const auto& [id, xy] : j.at("projection").items())
      v.projection[id] = {xy.at(0).get<double>(), xy.at(1).get<double>()};
  }
  v.projection_degenerate = j.value("projection_degenerate", false);
  if (v.cluster_count != static_cast<int>(v.members.size()))
    throw ValidationError("clustering result: cluster_count disagrees with members");
}

void to_json(Json& j, const IntruderTask& v) {
  j = Json{{"task_id", v.task_id},
           {"cluster_id", v.cluster_id},
           {"shown_objects", v.shown_objects},
           {"intruder", v.intruder},
           {"seed", v.seed}};
}

void from_json(const Json& j, IntruderTask& v) {
  j.at("task_id").get_to(v.task_id);
  j.at("cluster_id").get_to(v.cluster_id);
  j.at("shown_objects").get_to(v.shown_objects);
  j.at("intruder").get_to(v.intruder);
  v.seed = j.value("seed", std::uint64_t{0});
}

void to_json(Json& j, const IntruderResponse& v) {
  j = Json{{"task_id", v.task_id}, {"worker_id", v.worker_id}, {"chosen", v.chosen}};
}

void from_json(const Json& j, IntruderResponse& v) {
  j.at("task_id").get_to(v.task_id);
  j.at("worker_id").get_to(v.worker_id);
  j.at("chosen").get_to(v.chosen);
}

void to_json(Json& j, const ClusterScore& v) {
  j = Json{{"correct", v.correct}, {"total", v.total}, {"quality", v.quality}};
}

void to_json(Json& j, const EvaluationReport& v) {
  Json per_cluster = Json::object();
  for (const auto& [cluster, score] : v.per_cluster) per_cluster[std::to_string(cluster)] = score;
  j = Json{{"overall_quality", v.overall_quality},
           {"correct", v.correct},
           {"total", v.total},
           {"per_cluster", per_cluster},
           {"ci95", {v.ci95.first, v.ci95.second}}};
}

void from_json(const Json& j, EvaluationReport& v) {
  j.at("overall_quality").get_to(v.overall_quality);
  j.at("correct").get_to(v.correct);
  j.at("total").get_to(v.total);
  v.per_cluster.clear();
  for (const auto& [key, cell] : j.at("per_cluster").items()) {
    ClusterScore s;
    cell.at("correct").get_to(s.correct);
    cell.at("total").get_to(s.total);
    cell.at("quality").get_to(s.quality);
    v.per_cluster[std::stoi(key)] = s;
  }
  v.ci95 = {j.at("ci95").at(0).get<double>(), j.at("ci95").at(1).get<double>()};
}

void to_json(Json& j, const SimWorker& v) {
  j = Json{{"worker_id", v.worker_id},
           {"kind", to_string(v.kind)},
           {"p_flip", v.p_flip},
           {"seed", v.seed}};
}

void from_json(const Json& j, SimWorker& v) {
  j.at("worker_id").get_to(v.worker_id);
  v.kind = worker_kind_from_string(j.at("kind").get<std::string>());
  v.p_flip = j.value("p_flip", 0.0);
  v.seed = j.value("seed", stable_hash(v.worker_id));
  v.validate();
}

void to_json(Json& j, const PipelineMetrics& v) {
  j = Json{{"ari", v.ari},
           {"cluster_count", v.cluster_count},
           {"intruder_quality", v.intruder_quality ? Json(*v.intruder_quality) : Json(nullptr)},
           {"intruder_responses", v.intruder_responses},
           {"pair_count", v.pair_count},
           {"sweep_count", v.sweep_count},
           {"objective", v.objective},
           {"V", v.V},
           {"pages", v.pages},
           {"diagnostics", v.diagnostics}};
}

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(what + ": invalid JSON: " + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_json(buffer.str(), path.string());
}

std::vector<Json> read_jsonl_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<Json> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_json(line, path.string() + ":" + std::to_string(number)));
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<ObjectRecord> objects_from_json(const Json& j) {
  const Json& list = j.is_object() && j.contains("objects") ? j.at("objects") : j;
  if (!list.is_array()) throw ValidationError("objects document must be a list");
  auto objects = decode<std::vector<ObjectRecord>>(list, "objects");
  validate_objects(objects);
  return objects;
}

Scenario scenario_from_json(const Json& j) {
  try {
    Scenario s;
    const Json& w = j.at("world");
    s.world = make_world(w.at("N").get<int>(), w.at("K_true").get<int>(),
                         w.value("attribute_count", 1), w.value("seed", std::uint64_t{0}));
    const auto seed = j.value("seed", std::uint64_t{0});

    auto crowd_from = [&](const Json& list, const std::string& default_prefix,
                          std::uint64_t stream) {
      std::vector<SimWorker> out;
      for (std::size_t g = 0; g < list.size(); ++g) {
        const Json& entry = list[g];
        if (entry.contains("worker_id")) {
          out.push_back(entry.get<SimWorker>());
          continue;
        }
        const std::string kind = entry.at("kind").get<std::string>();
        const std::string prefix =
            entry.value("prefix", default_prefix + std::to_string(g) + "-" + kind + "-");
        auto group = make_crowd(prefix, worker_kind_from_string(kind), entry.at("count").get<int>(),
                                entry.value("p_flip", 0.0), derive_seed(seed, stream + g));
        out.insert(out.end(), group.begin(), group.end());
      }
      return out;
    };

    s.workers = crowd_from(j.at("workers"), "w", 0);
    if (s.workers.empty()) throw ValidationError("scenario needs at least one worker");
    s.options.M = j.value("M", kDefaultPageSize);
    s.options.R = j.value("R", kDefaultReplication);
    if (j.contains("V") && !j.at("V").is_null()) s.options.V = j.at("V").get<int>();
    s.options.plan_seed = seed;
    if (j.contains("aggregation")) s.options.aggregation = j.at("aggregation").get<AggregationConfig>();
    if (!j.contains("aggregation") || !j.at("aggregation").contains("seed"))
      s.options.aggregation.seed = seed;
    if (j.contains("evaluation")) {
      const Json& e = j.at("evaluation");
      s.options.display_size = e.value("G", kDefaultDisplaySize);
      s.options.tasks_per_cluster = e.value("tasks_per_cluster", kDefaultTasksPerCluster);
      s.options.evaluation_replication = e.value("replication", kDefaultEvaluators);
      s.options.evaluation_seed = e.value("seed", seed);
      if (e.contains("evaluators")) s.options.evaluators = crowd_from(e.at("evaluators"), "e", 1000);
    } else {
      s.options.evaluation_seed = seed;
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
}

}  // namespace crowdcluster
