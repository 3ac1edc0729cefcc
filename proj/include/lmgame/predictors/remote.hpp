#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/predictors/predictor.hpp"

namespace lmgame {

// Client for a predictor served over HTTP:
//   POST /v1/distribution {"context": [int...]} -> {"logprobs": [float x V], "vocab_size": V}
//   GET  /v1/info -> {"name": string, "vocab_size": int}
// Each call opens its own connection, so concurrent requests are fine.
class RemotePredictor final : public Predictor {
 public:
  RemotePredictor(std::string base_url, std::size_t vocab_size, std::string name, int timeout_seconds = 60)
      : base_url_(std::move(base_url)), vocab_size_(vocab_size), name_(std::move(name)), timeout_(timeout_seconds) {}

  // Asks /v1/info for the name and vocabulary size.
  static RemotePredictor connect(const std::string& base_url, int timeout_seconds = 60) {
    auto client = make_client(base_url, timeout_seconds);
    auto res = client.Get("/v1/info");
    const auto body = checked_body(res, base_url + "/v1/info");
    try {
      const auto j = nlohmann::json::parse(body);
      return RemotePredictor(base_url, j.at("vocab_size").get<std::size_t>(), j.value("name", base_url), timeout_seconds);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::transport, base_url + "/v1/info: malformed reply: " + e.what());
    }
  }

  std::size_t vocab_size() const override { return vocab_size_; }
  std::string name() const override { return name_; }

  Distribution distribution(TokenView context) const override {
    check_context(context);
    auto client = make_client(base_url_, timeout_);
    const nlohmann::json request{{"context", TokenSeq(context.begin(), context.end())}};
    auto res = client.Post("/v1/distribution", request.dump(), "application/json");
    const auto body = checked_body(res, base_url_ + "/v1/distribution");

    std::vector<double> logprobs;
    try {
      const auto j = nlohmann::json::parse(body);
      if (j.at("vocab_size").get<std::size_t>() != vocab_size_)
        fail(ErrorKind::transport, name_ + ": server reports a different vocab size");
      logprobs = j.at("logprobs").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::transport, name_ + ": malformed reply: " + e.what());
    }
    if (logprobs.size() != vocab_size_)
      fail(ErrorKind::transport, name_ + ": expected " + std::to_string(vocab_size_) + " logprobs, got " +
                                     std::to_string(logprobs.size()));
    for (double lp : logprobs)
      if (!std::isfinite(lp)) fail(ErrorKind::transport, name_ + ": reply contains a non-finite logprob");
    return Distribution::from_logprobs(logprobs);
  }

 private:
  static httplib::Client make_client(const std::string& url, int timeout) {
    httplib::Client client(url);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    return client;
  }

  static std::string checked_body(const httplib::Result& res, const std::string& what) {
    if (!res) fail(ErrorKind::transport, what + ": " + httplib::to_string(res.error()));
    if (res->status != 200) fail(ErrorKind::transport, what + ": HTTP " + std::to_string(res->status));
    return res->body;
  }

  std::string base_url_;
  std::size_t vocab_size_;
  std::string name_;
  int timeout_;
};

}  // namespace lmgame
