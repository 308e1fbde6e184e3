#include "crowdcluster/http_server.hpp"

#include <httplib.h>

namespace crowdcluster::service {

int http_status_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return 422;
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const ConflictError*>(&e)) return 409;
  if (dynamic_cast<const ProtocolError*>(&e)) return 412;
  if (dynamic_cast<const Json::exception*>(&e)) return 400;
  return 500;
}

namespace {

const char* error_name(int status) {
  switch (status) {
    case 400: return "bad_request";
    case 404: return "not_found";
    case 409: return "conflict";
    case 412: return "precondition_failed";
    case 422: return "validation_error";
    default: return "internal_error";
  }
}

void send_json(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

Json body_json(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  return Json::parse(req.body);
}

}  // namespace

struct HttpServer::Impl {
  Coordinator& coordinator;
  ServerOptions options;
  httplib::Server server;
  int port = 0;

  Impl(Coordinator& c, ServerOptions o) : coordinator(c), options(std::move(o)) {}

  template <class F>
  void route(httplib::Server& (httplib::Server::*method)(const std::string&, httplib::Server::Handler),
             const std::string& pattern, F handler) {
    (server.*method)(pattern, [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const std::exception& e) {
        const int status = http_status_for(e);
        send_json(res, Json{{"error", error_name(status)}, {"message", e.what()}}, status);
      }
    });
  }

  void install() {
    using S = httplib::Server;
    route(&S::Post, "/projects", [this](const auto& req, auto& res) {
      send_json(res, coordinator.create_project(body_json(req)), 201);
    });
    route(&S::Get, "/projects", [this](const auto&, auto& res) {
      send_json(res, Json{{"projects", coordinator.project_ids()}});
    });
    route(&S::Get, R"(/projects/([^/]+))", [this](const auto& req, auto& res) {
      send_json(res, coordinator.describe(req.matches[1]));
    });
    route(&S::Get, R"(/projects/([^/]+)/tasks/next)", [this](const auto& req, auto& res) {
      send_json(res, coordinator.next_task(req.matches[1], req.get_param_value("worker_id")));
    });
    route(&S::Post, R"(/projects/([^/]+)/responses)", [this](const auto& req, auto& res) {
      send_json(res, coordinator.submit(req.matches[1], body_json(req)));
    });
    route(&S::Post, R"(/projects/([^/]+)/aggregate)", [this](const auto& req, auto& res) {
      send_json(res, coordinator.start_aggregation(req.matches[1]), 202);
    });
    route(&S::Get, R"(/projects/([^/]+)/results)", [this](const auto& req, auto& res) {
      send_json(res, coordinator.results(req.matches[1]));
    });
    route(&S::Post, R"(/projects/([^/]+)/evaluation)", [this](const auto& req, auto& res) {
      send_json(res, coordinator.start_evaluation(req.matches[1]), 201);
    });
    route(&S::Get, R"(/projects/([^/]+)/report)", [this](const auto& req, auto& res) {
      const EvaluationReport report = coordinator.report(req.matches[1]);
      Json body = report;
      body["summary"] = report_table(report);
      send_json(res, body);
    });
    route(&S::Get, R"(/projects/([^/]+)/export)", [this](const auto& req, auto& res) {
      std::string out;
      for (const auto& e : coordinator.events(req.matches[1])) out += Json(e).dump() + "\n";
      res.set_content(out, "application/x-ndjson");
    });
    if (!options.static_dir.empty()) {
      if (!server.set_mount_point("/static", options.static_dir.string()))
        throw ValidationError("static directory " + options.static_dir.string() + " does not exist");
    }
  }
};

HttpServer::HttpServer(Coordinator& coordinator, ServerOptions options)
    : impl_(std::make_unique<Impl>(coordinator, std::move(options))) {
  impl_->install();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& o = impl_->options;
  impl_->port = o.port == 0 ? impl_->server.bind_to_any_port(o.host)
                            : (impl_->server.bind_to_port(o.host, o.port) ? o.port : -1);
  if (impl_->port <= 0)
    throw Error("cannot listen on " + o.host + ":" + std::to_string(o.port));
  return impl_->port;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace crowdcluster::service
