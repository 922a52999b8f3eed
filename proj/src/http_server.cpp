#include "igs/http_server.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <thread>

#define CPPHTTPLIB_LISTEN_BACKLOG 512
#include <httplib.h>

namespace igs {

using nlohmann::json;

int http_status(Errc code) {
  switch (code) {
    case Errc::unknown_hierarchy:
    case Errc::unknown_session:
      return 404;
    case Errc::session_closed:
    case Errc::ordinal_mismatch:
    case Errc::stale_question:
    case Errc::already_resolved:
      return 409;
    case Errc::io_error:
    case Errc::bad_data_dir:
    case Errc::port_in_use:
      return 500;
    default:
      return 400;
  }
}

struct HttpServer::Impl {
  SessionService& service;
  ServerOptions options;
  httplib::Server server;
  std::thread sweeper;
  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;

  Impl(SessionService& s, ServerOptions o) : service(s), options(std::move(o)) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

// Runs a handler, mapping exceptions to {code, message} bodies.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "ParseError", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = json::parse(req.body);
  if (!body.is_object()) throw Error(Errc::parse_error, "request body must be an object");
  return body;
}

}  // namespace

HttpServer::HttpServer(SessionService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& srv = impl_->server;
  SessionService& svc = impl_->service;

  // SO_REUSEPORT (httplib's default) would let a second server share the port.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes),
               sizeof(yes));
  });
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  srv.Post("/hierarchies", guarded([&svc](const httplib::Request& req,
                                          httplib::Response& res) {
    std::string edges, weights, id;
    const auto type = req.get_header_value("Content-Type");
    if (type.rfind("application/json", 0) == 0) {
      const json body = parse_body(req);
      edges = body.at("edges").get<std::string>();
      weights = body.value("weights", "");
      id = body.value("id", "");
    } else {
      edges = req.body;
    }
    const std::string key = svc.add_hierarchy(edges, weights, id);
    send_json(res, 201, svc.hierarchy_json(key));
  }));

  srv.Get(R"(/hierarchies/([^/]+))",
          guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, svc.hierarchy_json(req.matches[1]));
          }));

  srv.Get(R"(/hierarchies/([^/]+)/stats)",
          guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, svc.stats_json(req.matches[1]));
          }));

  srv.Post("/sessions", guarded([&svc](const httplib::Request& req,
                                       httplib::Response& res) {
    const json body = parse_body(req);
    const PolicyKind policy =
        parse_policy(body.value("policy", std::string("greedy_naive")));
    const DistributionMode mode = parse_mode(body.value("mode", std::string("offline")));
    send_json(res, 201,
              svc.create_session(body.at("hierarchy_id").get<std::string>(), policy,
                                 mode, body.value("object_ref", "")));
  }));

  srv.Get(R"(/sessions/([^/]+))",
          guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, svc.get_session(req.matches[1]));
          }));

  srv.Post(R"(/sessions/([^/]+)/answers)",
           guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             const auto ordinal = body.at("ordinal").get<std::size_t>();
             const Answer answer = parse_answer(body.at("answer").get<std::string>());
             send_json(res, 200, svc.post_answer(req.matches[1], ordinal, answer));
           }));

  if (!impl_->options.static_dir.empty() &&
      !srv.set_mount_point("/", impl_->options.static_dir))
    throw Error(Errc::bad_parameter,
                "static directory " + impl_->options.static_dir + " does not exist");
}

HttpServer::~HttpServer() {
  stop();
  if (impl_->sweeper.joinable()) impl_->sweeper.join();
}

int HttpServer::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    const int port = impl_->server.bind_to_any_port(o.host);
    if (port < 0) throw Error(Errc::port_in_use, "cannot bind " + o.host);
    o.port = port;
    return port;
  }
  if (!impl_->server.bind_to_port(o.host, o.port))
    throw Error(Errc::port_in_use, "port " + std::to_string(o.port) + " is in use");
  return o.port;
}

void HttpServer::run() {
  Impl& impl = *impl_;
  impl.sweeper = std::thread([&impl] {
    std::unique_lock lock(impl.mu);
    while (!impl.stopping) {
      impl.cv.wait_for(lock, std::chrono::milliseconds(
                                 std::max<std::int64_t>(impl.options.sweep_interval_ms, 10)));
      if (impl.stopping) break;
      lock.unlock();
      try {
        impl.service.expire_idle();
      } catch (const std::exception&) {
      }
      lock.lock();
    }
  });
  impl.server.listen_after_bind();
  stop();
  if (impl.sweeper.joinable()) impl.sweeper.join();
}

void HttpServer::stop() {
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  impl_->server.stop();
}

}  // namespace igs
