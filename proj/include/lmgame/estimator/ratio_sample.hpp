#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/core/types.hpp"

namespace lmgame {

// One elicited ratio r(x, y) = h(x) / h(y) for a sampled candidate x against the true
// token y, together with the generator's probabilities of both.
struct RatioSample {
  std::uint64_t round_id = 0;
  std::uint64_t prompt_id = 0;
  std::size_t context_len = 0;
  TokenId x = 0;
  TokenId y_true = 0;
  double r = 1.0;
  double log_r = 0.0;  // log r as reported; the estimator works from this, not from r
  double g_x = 0.5;
  double g_y = 0.5;
  double weight = 1.0;  // multiplicity of x among the generator draws
  std::string responder_id;
  bool auto_answered = false;

  void validate() const {
    if (!(r > 0.0) || !std::isfinite(r)) fail(ErrorKind::data, "ratio sample has non-positive r");
    if (!std::isfinite(log_r) || std::abs(std::exp(log_r) - r) > 1e-9 * r)
      fail(ErrorKind::data, "ratio sample log_r disagrees with r");
    if (!(g_x > 0.0 && g_x <= 1.0) || !(g_y > 0.0 && g_y <= 1.0))
      fail(ErrorKind::data, "ratio sample generator probabilities must lie in (0, 1]");
    if (!(weight > 0.0) || !std::isfinite(weight)) fail(ErrorKind::data, "ratio sample weight must be positive");
    if (auto_answered && (x != y_true || r != 1.0 || log_r != 0.0)) fail(ErrorKind::data, "auto-answered sample must have x = y_true and r = 1");
  }
};

// Export record: {"round_id", "prompt_id", "context_len", "x", "y_true", "r", "log_r", "g_x",
// "g_y", "weight", "responder_id", "auto"}. prompt_id, log_r and weight are optional on input.
template <class Json = nlohmann::ordered_json>
Json to_record(const RatioSample& s) {
  return Json{{"round_id", s.round_id},
           {"prompt_id", s.prompt_id},
           {"context_len", s.context_len},
           {"x", s.x},
           {"y_true", s.y_true},
           {"r", s.r},
           {"log_r", s.log_r},
           {"g_x", s.g_x},
           {"g_y", s.g_y},
           {"weight", s.weight},
           {"responder_id", s.responder_id},
           {"auto", s.auto_answered}};
}

inline void to_json(nlohmann::json& j, const RatioSample& s) { j = to_record<nlohmann::json>(s); }

inline void from_json(const nlohmann::json& j, RatioSample& s) {
  s.round_id = j.at("round_id").get<std::uint64_t>();
  s.prompt_id = j.contains("prompt_id") ? j["prompt_id"].get<std::uint64_t>() : (s.round_id >> 16);
  s.context_len = j.at("context_len").get<std::size_t>();
  s.x = j.at("x").get<TokenId>();
  s.y_true = j.at("y_true").get<TokenId>();
  s.r = j.at("r").get<double>();
  s.log_r = j.contains("log_r") ? j["log_r"].get<double>() : std::log(s.r);
  s.g_x = j.at("g_x").get<double>();
  s.g_y = j.at("g_y").get<double>();
  s.weight = j.value("weight", 1.0);
  s.responder_id = j.at("responder_id").get<std::string>();
  s.auto_answered = j.at("auto").get<bool>();
  s.validate();
}

}  // namespace lmgame
