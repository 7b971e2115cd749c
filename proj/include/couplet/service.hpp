#pragma once

#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "couplet/pipeline.hpp"

namespace couplet {

struct HttpReply {
  int status = 200;
  std::string body;
};

inline HttpReply error_reply(int status, const std::string& message, const std::string& stage = {}) {
  nlohmann::json j{{"error", message}};
  if (!stage.empty()) j["stage"] = stage;
  return {status, j.dump()};
}

/// Body of POST /v1/couplet, independent of the transport.
inline HttpReply handle_couplet_request(const Pipeline& p, const std::string& body) {
  std::string input;
  try {
    const auto j = nlohmann::json::parse(body);
    if (!j.is_object() || !j.contains("input") || !j["input"].is_string())
      return error_reply(400, "expected a JSON object {\"input\": \"<4 characters>\"}");
    input = j["input"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    return error_reply(400, std::string("malformed JSON: ") + e.what());
  }
  try {
    return {200, result_json(p.generate(input)).dump()};
  } catch (const StageError& e) {
    return error_reply(500, e.what(), e.stage);
  } catch (const std::invalid_argument& e) {
    return error_reply(400, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what(), "pipeline");
  }
}

inline HttpReply handle_health(const Pipeline& p) {
  nlohmann::json j{{"status", "ok"},
                   {"lm_checkpoint", p.lm_id()},
                   {"s2s_checkpoint", p.s2s_id()},
                   {"vocab_size", p.vocab().size()}};
  return {200, j.dump()};
}

/// HTTP front end over a shared, read-only pipeline.
class CoupletService {
 public:
  explicit CoupletService(const Pipeline& p) : pipeline_(p) {
    server_.Post("/v1/couplet", [this](const httplib::Request& req, httplib::Response& res) {
      reply(res, handle_couplet_request(pipeline_, req.body));
    });
    server_.Get("/v1/health",
                [this](const httplib::Request&, httplib::Response& res) { reply(res, handle_health(pipeline_)); });
  }

  /// Binds `host:port` (port 0 picks a free one) and returns the port, or -1.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    return server_.bind_to_port(host, port) ? port : -1;
  }

  /// Serves until stop(); call after bind().
  bool run() { return server_.listen_after_bind(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  void stop() { server_.stop(); }

 private:
  static void reply(httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json; charset=utf-8");
  }

  const Pipeline& pipeline_;
  httplib::Server server_;
};

}  // namespace couplet
