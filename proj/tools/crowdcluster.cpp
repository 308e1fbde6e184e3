// Command-line driver: planning, serving, offline aggregation and evaluation,
// simulation, and log import/export.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <regex>
#include <sstream>

#include "crowdcluster/http_server.hpp"
#include "crowdcluster/io.hpp"
#include "crowdcluster/rng.hpp"
#include "crowdcluster/service.hpp"

namespace fs = std::filesystem;
using namespace crowdcluster;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitInternal = 2;
constexpr int kExitUsage = 64;

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

// Records what a run read and wrote. No timestamps: reruns must match byte for byte.
class Manifest {
 public:
  Manifest(std::string command, const CLI::App& sub) : command_(std::move(command)) {
    for (const CLI::Option* opt : sub.get_options()) {
      if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
      if (opt->count() == 0 && opt->get_default_str().empty()) continue;
      const auto& results = opt->results();
      parameters_[opt->get_name()] = results.empty() ? opt->get_default_str() : results.back();
    }
  }
  void seed(std::uint64_t s) { seed_ = s; }
  void input(const fs::path& p) {
    inputs_.push_back(Json{{"path", p.string()}, {"fnv1a64", hex64(stable_hash(read_bytes(p)))}});
  }
  void output(const fs::path& p) { outputs_.push_back(p); }

  void write() const {
    Json outs = Json::array();
    for (const auto& p : outputs_)
      outs.push_back(Json{{"path", p.string()}, {"fnv1a64", hex64(stable_hash(read_bytes(p)))}});
    const Json doc{{"command", command_},
                   {"parameters", parameters_},
                   {"seed", seed_ ? Json(*seed_) : Json(nullptr)},
                   {"inputs", inputs_},
                   {"outputs", outs},
                   {"version", CROWDCLUSTER_VERSION}};
    for (const auto& p : outputs_) write_text_file(p.string() + ".manifest.json", doc.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::map<std::string, std::string> parameters_;
  std::optional<std::uint64_t> seed_;
  Json inputs_ = Json::array();
  std::vector<fs::path> outputs_;
};

void write_output(Manifest& m, const fs::path& path, const std::string& text) {
  write_text_file(path, text);
  m.output(path);
}

std::vector<GroupingResponse> read_grouping_responses(const fs::path& path) {
  std::vector<GroupingResponse> out;
  for (const Json& line : read_jsonl_file(path))
    out.push_back(decode<GroupingResponse>(line, path.string()));
  return out;
}

std::vector<IntruderResponse> read_intruder_responses(const fs::path& path) {
  std::vector<IntruderResponse> out;
  for (const Json& line : read_jsonl_file(path))
    out.push_back(decode<IntruderResponse>(line, path.string()));
  return out;
}

service::HttpServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd clustering pipeline: plan pages, collect groupings, aggregate, evaluate."};
  app.require_subcommand(1);

  // plan
  auto* plan = app.add_subcommand("plan", "objects file -> sampling plan");
  fs::path plan_objects, plan_out = "plan.json";
  int plan_m = kDefaultPageSize, plan_r = kDefaultReplication, plan_v = 0;
  std::uint64_t plan_seed = 0;
  plan->add_option("--objects", plan_objects, "objects JSON")->required();
  plan->add_option("--m", plan_m, "objects per page")->capture_default_str();
  plan->add_option("--v", plan_v, "occurrences per object (0: from formula)")->capture_default_str();
  plan->add_option("--r", plan_r, "workers per page")->capture_default_str();
  plan->add_option("--seed", plan_seed)->capture_default_str();
  plan->add_option("--out", plan_out)->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  service::ServerOptions server_options;
  fs::path data_dir = "data";
  double lease_minutes = 30;
  serve->add_option("--host", server_options.host)->capture_default_str();
  serve->add_option("--port", server_options.port)->capture_default_str();
  serve->add_option("--data-dir", data_dir)->capture_default_str();
  serve->add_option("--lease-minutes", lease_minutes)->capture_default_str();
  serve->add_option("--static-dir", server_options.static_dir, "served under /static");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "scenario file -> metrics");
  fs::path sim_scenario, sim_out = "metrics.json", sim_result;
  std::optional<std::uint64_t> sim_seed;
  simulate->add_option("--scenario", sim_scenario)->required();
  simulate->add_option("--seed", sim_seed, "overrides the scenario seed");
  simulate->add_option("--out", sim_out)->capture_default_str();
  simulate->add_option("--result", sim_result, "also write the clustering");

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "grouping responses -> clustering");
  fs::path agg_responses, agg_plan, agg_config, agg_out = "result.json", agg_diag;
  std::uint64_t agg_seed = 0;
  aggregate->add_option("--responses", agg_responses, "JSON Lines of grouping responses")->required();
  aggregate->add_option("--seed", agg_seed)->capture_default_str();
  aggregate->add_option("--plan", agg_plan, "check responses against this plan");
  aggregate->add_option("--config", agg_config, "aggregation config JSON");
  aggregate->add_option("--out", agg_out)->capture_default_str();
  aggregate->add_option("--diagnostics", agg_diag, "per-sweep JSON Lines");

  // evaluate
  auto* evaluate = app.add_subcommand(
      "evaluate", "clustering -> intruder tasks, or tasks + responses -> report");
  fs::path ev_result, ev_tasks, ev_responses, ev_out = "report.json";
  int ev_display = kDefaultDisplaySize, ev_per_cluster = kDefaultTasksPerCluster;
  std::uint64_t ev_seed = 0;
  evaluate->add_option("--result", ev_result, "clustering result JSON")->required();
  evaluate->add_option("--tasks", ev_tasks, "tasks JSON (written when --responses is absent)")
      ->required();
  evaluate->add_option("--responses", ev_responses, "JSON Lines of intruder picks");
  evaluate->add_option("--display-size", ev_display)->capture_default_str();
  evaluate->add_option("--tasks-per-cluster", ev_per_cluster)->capture_default_str();
  evaluate->add_option("--seed", ev_seed)->capture_default_str();
  evaluate->add_option("--out", ev_out, "report JSON")->capture_default_str();

  // viz
  auto* viz = app.add_subcommand("viz", "clustering -> CSV of object_id,x,y,cluster");
  fs::path viz_result, viz_out = "scatter.csv";
  viz->add_option("--result", viz_result)->required();
  viz->add_option("--out", viz_out)->capture_default_str();

  // export / import
  auto* exporter = app.add_subcommand("export", "project log -> JSON Lines");
  fs::path ex_dir = "data", ex_out;
  std::string ex_project, ex_what = "events";
  exporter->add_option("--data-dir", ex_dir)->capture_default_str();
  exporter->add_option("--project", ex_project)->required();
  exporter->add_option("--what", ex_what, "events | responses | intruder-responses")
      ->check(CLI::IsMember({"events", "responses", "intruder-responses"}))
      ->capture_default_str();
  exporter->add_option("--out", ex_out)->required();

  auto* importer = app.add_subcommand("import", "JSON Lines event log -> project");
  fs::path im_dir = "data", im_events;
  std::string im_project;
  importer->add_option("--data-dir", im_dir)->capture_default_str();
  importer->add_option("--events", im_events)->required();
  importer->add_option("--project", im_project, "store under this id (default: from log)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*plan) {
      Manifest m("plan", *plan);
      m.seed(plan_seed);
      m.input(plan_objects);
      const auto objects = objects_from_json(read_json_file(plan_objects));
      const int v = plan_v > 0 ? plan_v
                               : occurrences_per_object(static_cast<long long>(objects.size()), plan_m);
      const SamplingPlan p = build_plan(objects, plan_m, v, plan_r, plan_seed);
      write_output(m, plan_out, Json(p).dump(2) + "\n");
      m.write();
      std::cout << "N=" << p.N << " M=" << p.M << " V=" << p.V << " pages=" << p.pages.size()
                << " pair observations=" << pair_observation_budget(static_cast<long long>(p.pages.size()), p.M, p.R)
                << " exhaustive pairs=" << exhaustive_pair_count(p.N) << "\n";
    } else if (*serve) {
      service::CoordinatorOptions options;
      options.data_dir = data_dir;
      options.lease_ms = static_cast<std::int64_t>(lease_minutes * 60'000);
      service::Coordinator coordinator(options);
      coordinator.recover_interrupted_jobs();
      service::HttpServer server(coordinator, server_options);
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cout << "listening on http://" << server_options.host << ":" << port << " (data in "
                << data_dir.string() << ")" << std::endl;
      server.serve();
      g_server = nullptr;
    } else if (*simulate) {
      Manifest m("simulate", *simulate);
      m.input(sim_scenario);
      Json doc = read_json_file(sim_scenario);
      if (sim_seed) doc["seed"] = *sim_seed;
      const Scenario s = scenario_from_json(doc);
      m.seed(doc.value("seed", std::uint64_t{0}));
      const PipelineMetrics metrics = run_pipeline(s.world, s.workers, s.options);
      write_output(m, sim_out, Json(metrics).dump(2) + "\n");
      if (!sim_result.empty()) write_output(m, sim_result, Json(metrics.clustering).dump(2) + "\n");
      m.write();
      std::cout << "ARI=" << metrics.ari << " clusters=" << metrics.cluster_count;
      if (metrics.intruder_quality) std::cout << " intruder quality=" << *metrics.intruder_quality;
      std::cout << "\n";
    } else if (*aggregate) {
      Manifest m("aggregate", *aggregate);
      m.seed(agg_seed);
      m.input(agg_responses);
      const auto responses = read_grouping_responses(agg_responses);
      if (responses.empty()) throw ValidationError(agg_responses.string() + " holds no responses");
      std::map<std::string, Page> pages;
      std::vector<ObjectId> ids;
      if (!agg_plan.empty()) {
        m.input(agg_plan);
        const auto p = decode<SamplingPlan>(read_json_file(agg_plan), agg_plan.string());
        for (const auto& page : p.pages) pages.emplace(page.page_id, page);
        ids = p.object_ids;
      }
      AggregationConfig config;
      if (!agg_config.empty()) {
        m.input(agg_config);
        config = decode<AggregationConfig>(read_json_file(agg_config), agg_config.string());
      }
      config.seed = agg_seed;
      std::vector<PairLabel> labels;
      for (const auto& r : responses) {
        Page page;
        if (agg_plan.empty()) {
          page = page_from_response(r);
        } else {
          auto it = pages.find(r.page_id);
          if (it == pages.end()) throw ValidationError("response for unknown page " + r.page_id);
          page = it->second;
        }
        const auto pairs = canonical_pairs(r, page);
        labels.insert(labels.end(), pairs.begin(), pairs.end());
      }
      const IndexedEvidence evidence = index_evidence(labels, ids);
      const PairSet set(evidence.pairs, static_cast<int>(evidence.object_ids.size()),
                        static_cast<int>(evidence.worker_ids.size()));
      std::string diag_lines;
      const FitResult fitted = fit(set, config, [&](int restart, const SweepRecord& s) {
        Json line = s;
        line["restart"] = restart;
        diag_lines += line.dump() + "\n";
      });
      write_output(m, agg_out, Json(summarize(fitted.state, evidence.object_ids)).dump(2) + "\n");
      if (!agg_diag.empty()) write_output(m, agg_diag, diag_lines);
      m.write();
      std::cout << "objects=" << evidence.object_ids.size() << " workers=" << evidence.worker_ids.size()
                << " pairs=" << labels.size() << " clusters=" << active_components(fitted.state)
                << " best restart=" << fitted.diagnostics.best_restart << "\n";
    } else if (*evaluate) {
      Manifest m("evaluate", *evaluate);
      m.input(ev_result);
      const auto result = decode<ClusteringResult>(read_json_file(ev_result), ev_result.string());
      if (ev_responses.empty()) {
        m.seed(ev_seed);
        const IntruderGeneration g = generate_intruder_tasks(result, ev_display, ev_per_cluster, ev_seed);
        for (const auto& d : g.diagnostics) std::cerr << d << "\n";
        write_output(m, ev_tasks, Json(g.tasks).dump(2) + "\n");
        m.write();
        std::cout << g.tasks.size() << " intruder tasks\n";
      } else {
        m.input(ev_tasks);
        m.input(ev_responses);
        const auto tasks = decode<std::vector<IntruderTask>>(read_json_file(ev_tasks), ev_tasks.string());
        for (const auto& t : tasks) validate_intruder_task(t, result.assignment);
        const EvaluationReport report = score_intruder(tasks, read_intruder_responses(ev_responses));
        write_output(m, ev_out, Json(report).dump(2) + "\n");
        const std::string table = report_table(report);
        write_output(m, ev_out.string() + ".txt", table);
        m.write();
        std::cout << table;
      }
    } else if (*viz) {
      Manifest m("viz", *viz);
      m.input(viz_result);
      const auto result = decode<ClusteringResult>(read_json_file(viz_result), viz_result.string());
      std::ostringstream csv;
      csv << std::setprecision(17) << "object_id,x,y,cluster\n";
      for (const auto& [id, xy] : result.projection)
        csv << id << "," << xy[0] << "," << xy[1] << "," << result.assignment.assignment.at(id) << "\n";
      write_output(m, viz_out, csv.str());
      m.write();
    } else if (*exporter) {
      Manifest m("export", *exporter);
      const fs::path log = ex_dir / "projects" / ex_project / "events.jsonl";
      if (!fs::exists(log)) throw NotFoundError("no event log for project " + ex_project);
      m.input(log);
      std::string out;
      for (const auto& e : service::read_event_log(log)) {
        if (ex_what == "events") {
          out += Json(e).dump() + "\n";
        } else if (ex_what == "responses" && e.kind == "response" && !e.payload.at("training").get<bool>()) {
          out += e.payload.at("response").dump() + "\n";
        } else if (ex_what == "intruder-responses" && e.kind == "evaluation_response") {
          out += e.payload.at("response").dump() + "\n";
        }
      }
      write_output(m, ex_out, out);
      m.write();
    } else if (*importer) {
      const auto events = service::read_event_log(im_events);
      if (events.empty()) throw ValidationError(im_events.string() + " holds no events");
      service::ProjectData data;
      std::string text;
      for (auto e : events) {
        if (!im_project.empty() && e.kind == "created") e.payload["project_id"] = im_project;
        service::apply(data, e);
        text += Json(e).dump() + "\n";
      }
      if (!std::regex_match(data.project_id, std::regex("[A-Za-z0-9_-][A-Za-z0-9._-]{0,63}")))
        throw ValidationError("unusable project id '" + data.project_id + "'");
      const fs::path dir = im_dir / "projects" / data.project_id;
      if (fs::exists(dir / "events.jsonl"))
        throw ConflictError("project " + data.project_id + " already exists in " + im_dir.string());
      write_text_file(dir / "events.jsonl", text);
      std::cout << "imported " << events.size() << " events as " << data.project_id << "\n";
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NotFoundError& e) {
    std::cerr << "not found: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConflictError& e) {
    std::cerr << "conflict: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ProtocolError& e) {
    std::cerr << "precondition failed: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
