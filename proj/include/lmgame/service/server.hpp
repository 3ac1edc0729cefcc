#pragma once

#include <atomic>
#include <functional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/service/service.hpp"

namespace lmgame {

inline int http_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::end_of_set: return 409;
    case ErrorKind::transport: return 502;
    default: return 500;
  }
}

// HTTP front end for Service:
//   GET  /health
//   GET  /api/sets
//   GET  /api/tokenize?text=
//   POST /api/session                 {participant, game, set} -> {session_id, length}
//   GET  /api/session/{id}
//   GET  /api/session/{id}/round
//   POST /api/session/{id}/top1       {guess}  -> {true_token, correct, excluded}
//   POST /api/session/{id}/compare    {p}      -> {outcome, reward, score}
//   GET  /api/export?game=&set=&participant=   (JSON lines)
//   GET  /api/stats
// Errors come back as {"error": message, "kind": kind} with a matching status.
class HttpServer {
 public:
  explicit HttpServer(Service& service) : service_(service) { routes(); }

  // Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) fail(ErrorKind::runtime, "cannot bind " + host + ":" + std::to_string(port));
    return port_;
  }
  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }
  int port() const { return port_; }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static void reply(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        reply(res, {{"error", e.what()}, {"kind", to_string(e.kind())}}, http_status(e.kind()));
      } catch (const nlohmann::json::exception& e) {
        reply(res, {{"error", std::string("bad request body: ") + e.what()}, {"kind", "validation"}}, 400);
      } catch (const std::exception& e) {
        reply(res, {{"error", e.what()}, {"kind", "runtime"}}, 500);
      }
    };
  }

  static nlohmann::json body(const httplib::Request& req) {
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(ErrorKind::validation, "request body must be a JSON object");
    return j;
  }

  template <class T>
  static T field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) fail(ErrorKind::validation, std::string("missing field '") + key + "'");
    try {
      return j[key].get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::validation, std::string("field '") + key + "' has the wrong type");
    }
  }

  void routes() {
    server_.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
                  reply(res, {{"status", "ok"}, {"replayed_events", service_.replayed_events()}});
                }));
    server_.Get("/api/sets", guarded([this](const httplib::Request&, httplib::Response& res) { reply(res, service_.sets_info()); }));
    server_.Get("/api/tokenize", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service_.tokenize(req.get_param_value("text")));
                }));
    server_.Post("/api/session", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto j = body(req);
                   reply(res, service_.create_session(field<std::string>(j, "participant"), field<std::string>(j, "game"),
                                                      field<std::string>(j, "set")));
                 }));
    server_.Get(R"(/api/session/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service_.session_info(req.matches[1]));
                }));
    server_.Get(R"(/api/session/([^/]+)/round)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service_.round(req.matches[1]));
                }));
    server_.Post(R"(/api/session/([^/]+)/top1)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   reply(res, service_.submit_top1(req.matches[1], field<std::string>(body(req), "guess")));
                 }));
    server_.Post(R"(/api/session/([^/]+)/compare)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   reply(res, service_.submit_compare(req.matches[1], field<double>(body(req), "p")));
                 }));
    server_.Get("/api/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  ExportFilter f;
                  if (req.has_param("game") && !req.get_param_value("game").empty())
                    f.game = game_from_string(req.get_param_value("game"));
                  if (req.has_param("set") && !req.get_param_value("set").empty()) f.set = req.get_param_value("set");
                  if (req.has_param("participant") && !req.get_param_value("participant").empty())
                    f.participant = req.get_param_value("participant");
                  res.set_content(service_.export_records(f), "application/x-ndjson");
                }));
    server_.Get("/api/stats", guarded([this](const httplib::Request&, httplib::Response& res) { reply(res, service_.stats()); }));
  }

  Service& service_;
  httplib::Server server_;
  int port_ = -1;
};

}  // namespace lmgame
