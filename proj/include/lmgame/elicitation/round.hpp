#pragma once

#include <cstdint>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/core/random.hpp"
#include "lmgame/corpus/corpus.hpp"
#include "lmgame/estimator/ratio_sample.hpp"
#include "lmgame/predictors/predictor.hpp"

namespace lmgame {

// Round ids pack the prompt index and the candidate index.
constexpr std::uint64_t make_round_id(std::uint64_t prompt_id, std::uint64_t candidate) { return (prompt_id << 16) | candidate; }
constexpr std::uint64_t prompt_of_round(std::uint64_t round_id) { return round_id >> 16; }

inline constexpr std::size_t kMaxCandidatesPerPrompt = 1 << 16;

// One comparison question: the true next token against one generator draw, shown in a
// random order.
struct ComparisonRound {
  std::uint64_t round_id = 0;
  std::uint64_t prompt_id = 0;
  PromptInstance prompt;
  TokenId true_candidate = 0;
  TokenId sampled_candidate = 0;
  bool true_first = true;  // display order
  double g_true = 0.5;
  double g_sampled = 0.5;
  std::uint32_t multiplicity = 1;  // how many of the n draws produced this candidate
  bool auto_answered = false;      // sampled == true; never asked

  TokenId first_displayed() const { return true_first ? true_candidate : sampled_candidate; }
  TokenId second_displayed() const { return true_first ? sampled_candidate : true_candidate; }
  double g_first() const { return true_first ? g_true : g_sampled; }
  double g_second() const { return true_first ? g_sampled : g_true; }
};

// Draws n candidates from the generator's distribution at the prompt. Repeated draws share
// one round carrying their multiplicity. Rounds come out in order of first draw.
inline std::vector<ComparisonRound> build_rounds(const PromptInstance& prompt, std::uint64_t prompt_id,
                                                 const Distribution& generator, std::size_t n, Rng& rng) {
  if (n == 0) fail(ErrorKind::config, "need at least one candidate draw per prompt");
  if (n >= kMaxCandidatesPerPrompt) fail(ErrorKind::config, "too many candidate draws per prompt");
  std::vector<ComparisonRound> rounds;
  std::map<TokenId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    const TokenId x = generator.sample(rng);
    if (auto it = index.find(x); it != index.end()) {
      ++rounds[it->second].multiplicity;
      continue;
    }
    ComparisonRound r;
    r.round_id = make_round_id(prompt_id, rounds.size());
    r.prompt_id = prompt_id;
    r.prompt = prompt;
    r.true_candidate = prompt.true_next;
    r.sampled_candidate = x;
    r.g_true = generator.at(prompt.true_next);
    r.g_sampled = generator.at(x);
    r.auto_answered = x == prompt.true_next;
    index.emplace(x, rounds.size());
    rounds.push_back(std::move(r));
  }
  // Display order drawn after the candidates so the candidates do not depend on it.
  for (auto& r : rounds) r.true_first = uniform01(rng) < 0.5;
  return rounds;
}

inline std::vector<ComparisonRound> build_rounds(const PromptInstance& prompt, std::uint64_t prompt_id, const Predictor& generator,
                                                 std::size_t n, Rng& rng) {
  return build_rounds(prompt, prompt_id, generator.distribution(prompt.context), n, rng);
}

// Every vocabulary token as a candidate, weighted by its generator probability. Only
// simulated responders can answer this many questions.
inline std::vector<ComparisonRound> exhaustive_rounds(const PromptInstance& prompt, std::uint64_t prompt_id,
                                                      const Distribution& generator) {
  std::vector<ComparisonRound> rounds;
  rounds.reserve(generator.size());
  for (TokenId x = 0; x < generator.size(); ++x) {
    ComparisonRound r;
    r.round_id = make_round_id(prompt_id, x);
    r.prompt_id = prompt_id;
    r.prompt = prompt;
    r.true_candidate = prompt.true_next;
    r.sampled_candidate = x;
    r.g_true = generator.at(prompt.true_next);
    r.g_sampled = generator[x];
    r.auto_answered = x == prompt.true_next;
    rounds.push_back(std::move(r));
  }
  return rounds;
}

struct Response {
  std::uint64_t round_id = 0;
  double p = 0.5;  // probability that the first displayed candidate is the true one
  std::string responder_id;
  std::int64_t timestamp_ms = 0;
  // log(P(first) / P(second)) when the responder can state it exactly (simulated players
  // answering without an allowed set). Overrides p in response_to_ratio.
  std::optional<double> log_odds;
  // Unnormalized belief in (first, second) behind log_odds, so r can be formed with a
  // single division.
  std::optional<std::pair<double, double>> weights;
};

// Undoes the display blinding and returns r(sampled, true) = P(sampled) / P(true).
// sample_weight overrides the round multiplicity (exhaustive mode weights by g).
inline RatioSample response_to_ratio(const Response& response, const ComparisonRound& round,
                                     std::optional<double> sample_weight = std::nullopt) {
  if (response.round_id != round.round_id)
    fail(ErrorKind::validation, "response for round " + std::to_string(response.round_id) + " applied to round " +
                                    std::to_string(round.round_id));
  RatioSample s;
  s.round_id = round.round_id;
  s.prompt_id = round.prompt_id;
  s.context_len = round.prompt.context.size();
  s.x = round.sampled_candidate;
  s.y_true = round.true_candidate;
  s.g_x = round.g_sampled;
  s.g_y = round.g_true;
  s.weight = sample_weight.value_or(static_cast<double>(round.multiplicity));
  s.responder_id = response.responder_id;
  s.auto_answered = round.auto_answered;
  if (round.auto_answered) {
    s.r = 1.0;
    s.log_r = 0.0;
  } else if (response.log_odds) {
    if (!std::isfinite(*response.log_odds)) fail(ErrorKind::validation, "response log-odds must be finite");
    s.log_r = round.true_first ? -*response.log_odds : *response.log_odds;
    if (response.weights) {
      const auto [w_first, w_second] = *response.weights;
      if (!(w_first > 0.0 && w_second > 0.0)) fail(ErrorKind::validation, "response weights must be positive");
      s.r = round.true_first ? w_second / w_first : w_first / w_second;
    } else {
      s.r = std::exp(s.log_r);
    }
  } else {
    if (!(response.p > 0.0 && response.p < 1.0)) fail(ErrorKind::validation, "response probability must lie in (0, 1)");
    const double p_sampled = round.true_first ? 1.0 - response.p : response.p;
    s.r = p_sampled / (1.0 - p_sampled);
    s.log_r = std::log(p_sampled) - std::log(1.0 - p_sampled);
  }
  return s;
}

inline nlohmann::ordered_json round_to_json(const ComparisonRound& r) {
  return {{"round_id", r.round_id},
          {"prompt_id", r.prompt_id},
          {"context", r.prompt.context},
          {"true_next", r.prompt.true_next},
          {"origin", {r.prompt.origin.document, r.prompt.origin.offset}},
          {"following", r.prompt.following ? nlohmann::ordered_json(*r.prompt.following) : nlohmann::ordered_json(nullptr)},
          {"sampled", r.sampled_candidate},
          {"true_first", r.true_first},
          {"g_true", r.g_true},
          {"g_sampled", r.g_sampled},
          {"multiplicity", r.multiplicity},
          {"auto", r.auto_answered}};
}

inline ComparisonRound round_from_json(const nlohmann::json& j) {
  ComparisonRound r;
  r.round_id = j.at("round_id").get<std::uint64_t>();
  r.prompt_id = j.at("prompt_id").get<std::uint64_t>();
  r.prompt.context = j.at("context").get<TokenSeq>();
  r.prompt.true_next = j.at("true_next").get<TokenId>();
  r.prompt.origin = {j.at("origin")[0].get<std::size_t>(), j.at("origin")[1].get<std::size_t>()};
  if (!j.at("following").is_null()) r.prompt.following = j["following"].get<TokenId>();
  r.true_candidate = r.prompt.true_next;
  r.sampled_candidate = j.at("sampled").get<TokenId>();
  r.true_first = j.at("true_first").get<bool>();
  r.g_true = j.at("g_true").get<double>();
  r.g_sampled = j.at("g_sampled").get<double>();
  r.multiplicity = j.at("multiplicity").get<std::uint32_t>();
  r.auto_answered = j.at("auto").get<bool>();
  return r;
}

}  // namespace lmgame
