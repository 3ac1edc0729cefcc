#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/core/random.hpp"
#include "lmgame/corpus/corpus.hpp"
#include "lmgame/elicitation/allowed_set.hpp"
#include "lmgame/elicitation/round.hpp"
#include "lmgame/predictors/predictor.hpp"

namespace lmgame {

enum class Game { top1, compare };

inline Game game_from_string(const std::string& s) {
  if (s == "top1") return Game::top1;
  if (s == "compare") return Game::compare;
  fail(ErrorKind::validation, "unknown game '" + s + "' (expected top1 or compare)");
}

inline const char* to_string(Game g) { return g == Game::top1 ? "top1" : "compare"; }

// How to build one question set. For top1, `length` consecutive positions of one document;
// for compare, prompts are added until exactly `length` non-automatic rounds exist.
struct QuestionSetSpec {
  std::string id;
  Game game = Game::compare;
  std::string split = "validation";
  std::size_t length = 40;
  std::size_t n = 10;
  std::string generator;
  std::string allowed = "rounded";
  std::size_t max_context = kDefaultMaxContext;
  std::uint64_t seed = 0;

  static QuestionSetSpec from_json(const nlohmann::json& j) {
    QuestionSetSpec s;
    s.id = j.at("id").get<std::string>();
    s.game = game_from_string(j.at("game").get<std::string>());
    s.split = j.value("split", s.split);
    s.length = j.value("length", s.length);
    s.n = j.value("n", s.n);
    s.generator = j.value("generator", s.generator);
    s.allowed = j.value("allowed", s.allowed);
    s.max_context = j.value("max_context", s.max_context);
    s.seed = j.value("seed", s.seed);
    if (s.id.empty()) fail(ErrorKind::config, "question set needs an id");
    if (s.length == 0) fail(ErrorKind::config, "question set '" + s.id + "' needs length >= 1");
    if (s.game == Game::compare && s.generator.empty())
      fail(ErrorKind::config, "compare question set '" + s.id + "' needs a generator");
    return s;
  }
};

// A frozen list of questions shared by every participant on the set.
struct QuestionSet {
  std::string id;
  Game game = Game::compare;
  std::string generator;
  std::optional<AllowedSet> allowed;
  std::uint64_t seed = 0;
  std::vector<PromptInstance> prompts;  // top1 questions
  std::vector<ComparisonRound> rounds;  // compare: every round in set order, automatic ones included
  std::vector<std::size_t> asked;       // compare: indices into rounds shown to players, in order
  // compare: prompt id -> number of asked rounds answered once that prompt is finished
  std::map<std::uint64_t, std::size_t> prompt_done_at;

  std::size_t length() const { return game == Game::top1 ? prompts.size() : asked.size(); }

  void index() {
    prompt_done_at.clear();
    asked.clear();
    for (std::size_t i = 0; i < rounds.size(); ++i) {
      if (!rounds[i].auto_answered) asked.push_back(i);
      prompt_done_at[rounds[i].prompt_id] = asked.size();
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j{{"format", "lmgame-question-set-1"},
                             {"id", id},
                             {"game", lmgame::to_string(game)},
                             {"generator", generator},
                             {"seed", seed}};
    if (allowed) j["allowed"] = {{"name", allowed->name()}, {"values", allowed->values()}};
    auto& ps = j["prompts"] = nlohmann::ordered_json::array();
    for (const auto& p : prompts)
      ps.push_back({{"context", p.context},
                    {"true_next", p.true_next},
                    {"origin", {p.origin.document, p.origin.offset}},
                    {"following", p.following ? nlohmann::ordered_json(*p.following) : nlohmann::ordered_json(nullptr)}});
    auto& rs = j["rounds"] = nlohmann::ordered_json::array();
    for (const auto& r : rounds) rs.push_back(round_to_json(r));
    return j;
  }

  static QuestionSet from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "lmgame-question-set-1") fail(ErrorKind::data, "not an lmgame question set");
    QuestionSet s;
    s.id = j.at("id").get<std::string>();
    s.game = game_from_string(j.at("game").get<std::string>());
    s.generator = j.value("generator", "");
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("allowed"))
      s.allowed = AllowedSet(j["allowed"].at("values").get<std::vector<double>>(), j["allowed"].at("name").get<std::string>());
    for (const auto& p : j.at("prompts")) {
      PromptInstance pi;
      pi.context = p.at("context").get<TokenSeq>();
      pi.true_next = p.at("true_next").get<TokenId>();
      pi.origin = {p.at("origin")[0].get<std::size_t>(), p.at("origin")[1].get<std::size_t>()};
      if (!p.at("following").is_null()) pi.following = p["following"].get<TokenId>();
      s.prompts.push_back(std::move(pi));
    }
    for (const auto& r : j.at("rounds")) s.rounds.push_back(round_from_json(r));
    s.index();
    if (s.length() == 0) fail(ErrorKind::data, "question set '" + s.id + "' has no questions");
    return s;
  }
};

inline QuestionSet build_top1_set(const QuestionSetSpec& spec, const CorpusSplit& split) {
  QuestionSet s;
  s.id = spec.id;
  s.game = Game::top1;
  s.seed = spec.seed;
  s.prompts = segment_prompts(split, spec.length, spec.max_context, spec.seed);
  return s;
}

// Walks a pool of sampled prompts and keeps each one whose asked rounds still fit, until
// exactly spec.length rounds are askable. Prompts are kept whole so every kept prompt
// carries all n generator draws.
inline QuestionSet build_compare_set(const QuestionSetSpec& spec, const CorpusSplit& split, const Predictor& generator) {
  QuestionSet s;
  s.id = spec.id;
  s.game = Game::compare;
  s.generator = generator.name();
  s.seed = spec.seed;
  s.allowed = AllowedSet::preset(spec.allowed);
  const std::size_t pool = std::max<std::size_t>(200, 20 * spec.length);
  const auto candidates = sample_prompts(split, pool, spec.max_context, spec.seed);
  std::size_t remaining = spec.length;
  std::uint64_t prompt_id = 0;
  for (std::size_t i = 0; i < candidates.size() && remaining > 0; ++i) {
    auto rng = make_rng(spec.seed, i + 1);
    auto rounds = build_rounds(candidates[i], prompt_id, generator, spec.n, rng);
    std::size_t askable = 0;
    for (const auto& r : rounds) askable += !r.auto_answered;
    if (askable > remaining) continue;
    remaining -= askable;
    ++prompt_id;
    s.rounds.insert(s.rounds.end(), rounds.begin(), rounds.end());
  }
  if (remaining > 0)
    fail(ErrorKind::data, "could not fill compare set '" + spec.id + "' with exactly " + std::to_string(spec.length) +
                              " rounds; try another length, n or seed");
  s.index();
  return s;
}

}  // namespace lmgame
