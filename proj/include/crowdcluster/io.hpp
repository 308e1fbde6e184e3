#pragma once

// JSON mapping for every document the service, CLI and simulation exchange.
// Field names are the wire format; keep them stable.

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "crowdcluster/aggregation.hpp"
#include "crowdcluster/core.hpp"
#include "crowdcluster/evaluation.hpp"
#include "crowdcluster/qualification.hpp"
#include "crowdcluster/sampler.hpp"
#include "crowdcluster/simulation.hpp"

namespace crowdcluster {

using Json = nlohmann::json;

void to_json(Json& j, const ObjectRecord& v);
void from_json(const Json& j, ObjectRecord& v);
void to_json(Json& j, const Page& v);
void from_json(const Json& j, Page& v);
void to_json(Json& j, const GroupingResponse& v);
void from_json(const Json& j, GroupingResponse& v);
void to_json(Json& j, const PairLabel& v);
void to_json(Json& j, const Partition& v);
void from_json(const Json& j, Partition& v);
void to_json(Json& j, const SamplingPlan& v);
void from_json(const Json& j, SamplingPlan& v);
void to_json(Json& j, const PlanViolation& v);
void to_json(Json& j, const TrainingItem& v);
void from_json(const Json& j, TrainingItem& v);
void to_json(Json& j, const WorkerProfile& v);
void from_json(const Json& j, WorkerProfile& v);
void to_json(Json& j, const AggregationConfig& v);
void from_json(const Json& j, AggregationConfig& v);
void to_json(Json& j, const SweepRecord& v);
void to_json(Json& j, const FitDiagnostics& v);
void to_json(Json& j, const ClusteringResult& v);
void from_json(const Json& j, ClusteringResult& v);
void to_json(Json& j, const IntruderTask& v);
void from_json(const Json& j, IntruderTask& v);
void to_json(Json& j, const IntruderResponse& v);
void from_json(const Json& j, IntruderResponse& v);
void to_json(Json& j, const ClusterScore& v);
void to_json(Json& j, const EvaluationReport& v);
void from_json(const Json& j, EvaluationReport& v);
void to_json(Json& j, const SimWorker& v);
void from_json(const Json& j, SimWorker& v);
void to_json(Json& j, const PipelineMetrics& v);

// Parses `text`, wrapping parser and type errors as ValidationError.
Json parse_json(const std::string& text, const std::string& what);

Json read_json_file(const std::filesystem::path& path);
std::vector<Json> read_jsonl_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Converts a JSON value to T, reporting schema errors as ValidationError.
template <typename T>
T decode(const Json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

// Objects file: either a list of records or {"objects": [...]}. Bare strings
// are accepted as ids whose payload_uri equals the id.
std::vector<ObjectRecord> objects_from_json(const Json& j);

// Scenario document for `simulate`.
struct Scenario {
  WorldSpec world;
  std::vector<SimWorker> workers;
  PipelineOptions options;
};
Scenario scenario_from_json(const Json& j);

}  // namespace crowdcluster
