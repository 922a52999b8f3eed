#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "igs/session.hpp"

namespace igs {

struct ServerOptions {
  std::string host = "0.0.0.0";
  /// 0 picks a free port.
  int port = 8080;
  /// Optional directory served at "/" (the labeling UI).
  std::string static_dir;
  std::int64_t sweep_interval_ms = 1000;
};

/// HTTP status for a service error.
int http_status(Errc code);

/// JSON API over a SessionService:
///   POST /hierarchies, GET /hierarchies/{id}, GET /hierarchies/{id}/stats,
///   POST /sessions, GET /sessions/{id}, POST /sessions/{id}/answers,
///   GET /healthz.
class HttpServer {
 public:
  HttpServer(SessionService& service, ServerOptions options);
  ~HttpServer();

  /// Binds the listening socket and returns the port. Throws port_in_use.
  int bind();
  /// Serves until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace igs
