#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "crowdcluster/service.hpp"

namespace crowdcluster::service {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path static_dir;  // served under /static when set
};

// JSON over HTTP in front of a Coordinator.
class HttpServer {
 public:
  HttpServer(Coordinator& coordinator, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds the socket; returns the bound port. Throws Error on failure.
  int bind();
  // Blocks serving requests until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// HTTP status for an exception thrown by the coordinator.
int http_status_for(const std::exception& e);

}  // namespace crowdcluster::service
