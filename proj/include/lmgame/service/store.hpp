#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/service/event_log.hpp"
#include "lmgame/service/question_set.hpp"

namespace lmgame {

struct GuessRecord {
  std::uint64_t seq = 0;
  std::size_t index = 0;
  std::string guess;
  TokenId guess_token = 0;
  TokenId true_token = 0;
  bool correct = false;
  bool excluded = false;  // the true token is visually empty
  std::int64_t timestamp_ms = 0;
};

struct ComparisonRecord {
  std::uint64_t seq = 0;
  std::size_t index = 0;  // position among the set's asked rounds
  std::uint64_t round_id = 0;
  double p = 0.5;         // probability given to the first displayed candidate
  bool first_true = true;
  double reward = 0.0;
  std::int64_t timestamp_ms = 0;
};

struct Session {
  std::string id;
  std::string participant;
  Game game = Game::compare;
  std::string set_id;
  std::size_t cursor = 0;
  double score = 0.0;
  std::int64_t created_ms = 0;
  std::uint64_t seq = 0;  // event that created it
  std::vector<GuessRecord> guesses;
  std::vector<ComparisonRecord> comparisons;
};

namespace events {
inline constexpr const char* session_created = "session_created";
inline constexpr const char* top1_guess = "top1_guess";
inline constexpr const char* compare_response = "compare_response";
}  // namespace events

// Everything the service knows, as a pure function of the event sequence.
class Store {
 public:
  explicit Store(const std::map<std::string, QuestionSet>& sets) : sets_(&sets) {}

  void apply(const Event& e) {
    const auto& d = e.data;
    if (e.type == events::session_created) {
      Session s;
      s.id = d.at("session_id").get<std::string>();
      s.participant = d.at("participant").get<std::string>();
      s.game = game_from_string(d.at("game").get<std::string>());
      s.set_id = d.at("set").get<std::string>();
      s.created_ms = d.at("created_ms").get<std::int64_t>();
      s.seq = e.seq;
      const auto& set = question_set(s.set_id);
      if (set.game != s.game) fail(ErrorKind::data, "event " + std::to_string(e.seq) + ": game does not match set");
      if (sessions_.count(s.id)) fail(ErrorKind::data, "event " + std::to_string(e.seq) + ": duplicate session id");
      order_.push_back(s.id);
      sessions_.emplace(s.id, std::move(s));
    } else if (e.type == events::top1_guess) {
      auto& s = session_for(e, Game::top1);
      GuessRecord g;
      g.seq = e.seq;
      g.index = d.at("index").get<std::size_t>();
      g.guess = d.at("guess").get<std::string>();
      g.guess_token = d.at("guess_token").get<TokenId>();
      g.true_token = d.at("true_token").get<TokenId>();
      g.correct = d.at("correct").get<bool>();
      g.excluded = d.at("excluded").get<bool>();
      g.timestamp_ms = d.at("timestamp_ms").get<std::int64_t>();
      advance(e, s, g.index);
      s.guesses.push_back(std::move(g));
    } else if (e.type == events::compare_response) {
      auto& s = session_for(e, Game::compare);
      ComparisonRecord c;
      c.seq = e.seq;
      c.index = d.at("index").get<std::size_t>();
      c.round_id = d.at("round_id").get<std::uint64_t>();
      c.p = d.at("p").get<double>();
      c.first_true = d.at("outcome").get<std::string>() == "first";
      c.reward = d.at("reward").get<double>();
      c.timestamp_ms = d.at("timestamp_ms").get<std::int64_t>();
      advance(e, s, c.index);
      const auto& set = question_set(s.set_id);
      if (set.rounds[set.asked[c.index]].round_id != c.round_id)
        fail(ErrorKind::data, "event " + std::to_string(e.seq) + ": round id does not match the set");
      s.score += c.reward;
      s.comparisons.push_back(c);
    } else {
      fail(ErrorKind::data, "event " + std::to_string(e.seq) + ": unknown type '" + e.type + "'");
    }
    last_seq_ = e.seq;
  }

  const Session* find(const std::string& id) const {
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : &it->second;
  }
  const std::map<std::string, Session>& sessions() const { return sessions_; }
  // Session ids in creation order.
  const std::vector<std::string>& creation_order() const { return order_; }
  std::uint64_t last_seq() const { return last_seq_; }

  const QuestionSet& question_set(const std::string& id) const {
    auto it = sets_->find(id);
    if (it == sets_->end()) fail(ErrorKind::not_found, "unknown question set '" + id + "'");
    return it->second;
  }

 private:
  Session& session_for(const Event& e, Game game) {
    const auto id = e.data.at("session_id").get<std::string>();
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorKind::data, "event " + std::to_string(e.seq) + ": unknown session " + id);
    if (it->second.game != game) fail(ErrorKind::data, "event " + std::to_string(e.seq) + ": wrong game for session");
    return it->second;
  }

  void advance(const Event& e, Session& s, std::size_t index) {
    if (index != s.cursor || index >= question_set(s.set_id).length())
      fail(ErrorKind::data, "event " + std::to_string(e.seq) + ": answer out of order for session " + s.id);
    ++s.cursor;
  }

  const std::map<std::string, QuestionSet>* sets_;
  std::map<std::string, Session> sessions_;
  std::vector<std::string> order_;
  std::uint64_t last_seq_ = 0;
};

}  // namespace lmgame
