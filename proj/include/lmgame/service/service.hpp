#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/corpus/bpe.hpp"
#include "lmgame/corpus/filters.hpp"
#include "lmgame/elicitation/reward.hpp"
#include "lmgame/elicitation/round.hpp"
#include "lmgame/estimator/ratio_sample.hpp"
#include "lmgame/service/event_log.hpp"
#include "lmgame/service/question_set.hpp"
#include "lmgame/service/store.hpp"

namespace lmgame {

struct ExportFilter {
  Game game = Game::compare;
  std::optional<std::string> set;
  std::optional<std::string> participant;
};

// Game logic over frozen question sets. Every state change is appended to the event log
// (and fsynced) before it is applied and acknowledged, so a restart replays to the state
// the last caller saw.
class Service {
 public:
  // A read-only service replays the log without opening it for writing, so it can inspect
  // the log of a running server; every state change then fails.
  Service(Tokenizer tokenizer, std::vector<QuestionSet> sets, const std::filesystem::path& log_path, bool read_only = false)
      : tokenizer_(std::move(tokenizer)), store_(sets_), initial_(EventLog::replay(log_path)) {
    if (!read_only) log_.emplace(log_path);
    for (auto& s : sets) {
      if (s.length() == 0) fail(ErrorKind::config, "question set '" + s.id + "' is empty");
      if (sets_.count(s.id)) fail(ErrorKind::config, "duplicate question set id '" + s.id + "'");
      ordinal_[s.id] = ordinal_.size();
      const auto id = s.id;
      sets_.emplace(id, std::move(s));
    }
    for (const auto& e : initial_.events) store_.apply(e);
    replayed_ = initial_.events.size();
    dropped_tail_ = initial_.truncated_tail;
    initial_.events.clear();
  }

  std::size_t replayed_events() const { return replayed_; }
  bool dropped_tail() const { return dropped_tail_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  nlohmann::json create_session(const std::string& participant, const std::string& game, const std::string& set_id) {
    if (participant.empty()) fail(ErrorKind::validation, "participant must not be empty");
    const auto g = game_from_string(game);
    std::unique_lock lock(mu_);
    const auto& set = store_.question_set(set_id);
    if (set.game != g) fail(ErrorKind::validation, "set '" + set_id + "' is a " + to_string(set.game) + " set");
    std::string id;
    do id = new_session_id();
    while (store_.find(id));
    commit(events::session_created,
           {{"session_id", id}, {"participant", participant}, {"game", game}, {"set", set_id}, {"created_ms", now_ms()}});
    return {{"session_id", id}, {"length", set.length()}};
  }

  nlohmann::json round(const std::string& session_id) const {
    std::shared_lock lock(mu_);
    const auto& s = session(session_id);
    const auto& set = store_.question_set(s.set_id);
    if (s.cursor >= set.length()) fail(ErrorKind::end_of_set, "session " + session_id + " has answered every round");
    nlohmann::json j{{"game", to_string(s.game)}, {"set", s.set_id}, {"index", s.cursor}, {"length", set.length()},
                     {"score", s.score}};
    if (s.game == Game::top1) {
      const auto& p = set.prompts[s.cursor];
      j["context_tokens"] = p.context;
      j["context_text"] = tokenizer_.decode(p.context);
    } else {
      const auto& r = set.rounds[set.asked[s.cursor]];
      j["context_tokens"] = r.prompt.context;
      j["context_text"] = tokenizer_.decode(r.prompt.context);
      j["candidates"] = {token_json(r.first_displayed()), token_json(r.second_displayed())};
      j["allowed"] = set.allowed ? nlohmann::json(set.allowed->values()) : nlohmann::json(nullptr);
    }
    return j;
  }

  nlohmann::json submit_top1(const std::string& session_id, const std::string& guess) {
    std::unique_lock lock(mu_);
    const auto& s = session(session_id);
    if (s.game != Game::top1) fail(ErrorKind::validation, "session " + session_id + " is not playing top1");
    const auto& set = store_.question_set(s.set_id);
    if (s.cursor >= set.length()) fail(ErrorKind::end_of_set, "session " + session_id + " has answered every round");
    const auto tokens = tokenizer_.encode(guess);
    if (tokens.size() != 1) fail(ErrorKind::validation, "guess must be exactly one token (got " + std::to_string(tokens.size()) + ")");
    const auto& p = set.prompts[s.cursor];
    const bool correct = tokens[0] == p.true_next;
    const bool excluded = is_visually_empty(p.true_next, tokenizer_.vocab());
    const auto index = s.cursor;
    commit(events::top1_guess, {{"session_id", session_id},
                                {"index", index},
                                {"guess", guess},
                                {"guess_token", tokens[0]},
                                {"true_token", p.true_next},
                                {"correct", correct},
                                {"excluded", excluded},
                                {"timestamp_ms", now_ms()}});
    return {{"index", index},
            {"true_token", tokenizer_.decode(TokenSeq{p.true_next})},
            {"true_token_id", p.true_next},
            {"correct", correct},
            {"excluded", excluded}};
  }

  nlohmann::json submit_compare(const std::string& session_id, double p) {
    std::unique_lock lock(mu_);
    const auto& s = session(session_id);
    if (s.game != Game::compare) fail(ErrorKind::validation, "session " + session_id + " is not playing compare");
    const auto& set = store_.question_set(s.set_id);
    if (s.cursor >= set.length()) fail(ErrorKind::end_of_set, "session " + session_id + " has answered every round");
    if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::validation, "p must lie strictly between 0 and 1");
    if (set.allowed) {
      if (!set.allowed->contains(p)) fail(ErrorKind::validation, "p = " + std::to_string(p) + " is not one of the allowed answers");
      p = round_probability(p, *set.allowed);  // the exact stored value
    }
    const auto& r = set.rounds[set.asked[s.cursor]];
    const auto outcome = r.true_first ? Outcome::x_true : Outcome::y_true;
    const double delta = reward(p, outcome, r.g_first(), r.g_second());
    const auto index = s.cursor;
    commit(events::compare_response, {{"session_id", session_id},
                                      {"index", index},
                                      {"round_id", r.round_id},
                                      {"p", p},
                                      {"outcome", r.true_first ? "first" : "second"},
                                      {"reward", delta},
                                      {"timestamp_ms", now_ms()}});
    return {{"index", index},
            {"outcome", r.true_first ? "first" : "second"},
            {"true_token", tokenizer_.decode(TokenSeq{r.true_candidate})},
            {"reward", delta},
            {"score", session(session_id).score}};
  }

  // JSON lines, one record per line, ordered by (participant, event sequence). Compare
  // records are RatioSample records the estimator reads as they are, plus "set" and
  // "session_id". prompt_id is (set ordinal << 32) | prompt index, unique across sets.
  std::string export_records(const ExportFilter& filter) const {
    std::shared_lock lock(mu_);
    std::vector<const Session*> picked;
    for (const auto& id : store_.creation_order()) {
      const auto* s = store_.find(id);
      if (s->game != filter.game) continue;
      if (filter.set && s->set_id != *filter.set) continue;
      if (filter.participant && s->participant != *filter.participant) continue;
      picked.push_back(s);
    }
    std::stable_sort(picked.begin(), picked.end(), [](const Session* a, const Session* b) { return a->participant < b->participant; });
    std::ostringstream out;
    for (const auto* s : picked) {
      if (s->game == Game::top1)
        export_top1(*s, out);
      else
        export_compare(*s, out);
    }
    return out.str();
  }

  nlohmann::json stats() const {
    std::shared_lock lock(mu_);
    struct Tally {
      std::size_t sessions = 0, guesses = 0, correct = 0, excluded = 0, counted_correct = 0, responses = 0;
      double score = 0.0;
    };
    std::map<std::string, Tally> by;
    for (const auto& [_, s] : store_.sessions()) {
      auto& t = by[s.participant];
      ++t.sessions;
      for (const auto& g : s.guesses) {
        ++t.guesses;
        t.correct += g.correct;
        t.excluded += g.excluded;
        t.counted_correct += g.correct && !g.excluded;
      }
      t.responses += s.comparisons.size();
      t.score += s.score;
    }
    nlohmann::json participants = nlohmann::json::array();
    for (const auto& [name, t] : by) {
      const auto counted = t.guesses - t.excluded;
      participants.push_back({{"participant", name},
                              {"sessions", t.sessions},
                              {"top1_guesses", t.guesses},
                              {"top1_correct", t.correct},
                              {"top1_excluded", t.excluded},
                              {"top1_accuracy", counted ? nlohmann::json(static_cast<double>(t.counted_correct) / counted)
                                                        : nlohmann::json(nullptr)},
                              {"compare_responses", t.responses},
                              {"compare_score", t.score}});
    }
    return {{"participants", participants}, {"sessions", store_.sessions().size()}, {"events", store_.last_seq()}};
  }

  nlohmann::json sets_info() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, s] : sets_)
      out.push_back({{"id", id}, {"game", to_string(s.game)}, {"length", s.length()}, {"generator", s.generator}});
    return out;
  }

  nlohmann::json tokenize(const std::string& text) const {
    const auto ids = tokenizer_.encode(text);
    nlohmann::json toks = nlohmann::json::array();
    for (auto id : ids) toks.push_back(token_json(id));
    return {{"tokens", toks}, {"single_token", ids.size() == 1}};
  }

  nlohmann::json session_info(const std::string& id) const {
    std::shared_lock lock(mu_);
    const auto& s = session(id);
    return {{"session_id", s.id},         {"participant", s.participant}, {"game", to_string(s.game)},
            {"set", s.set_id},            {"cursor", s.cursor},           {"length", store_.question_set(s.set_id).length()},
            {"score", s.score},           {"created_ms", s.created_ms}};
  }

  void close() {
    if (log_) log_->close();
  }

 private:
  void commit(const char* type, nlohmann::json data) {
    if (!log_) fail(ErrorKind::runtime, "service is read-only");
    store_.apply(log_->append(type, std::move(data)));
  }

  const Session& session(const std::string& id) const {
    const auto* s = store_.find(id);
    if (!s) fail(ErrorKind::not_found, "unknown session '" + id + "'");
    return *s;
  }

  nlohmann::json token_json(TokenId id) const { return {{"token", id}, {"text", tokenizer_.decode(TokenSeq{id})}}; }

  void export_top1(const Session& s, std::ostringstream& out) const {
    const auto& set = store_.question_set(s.set_id);
    for (const auto& g : s.guesses) {
      const auto& p = set.prompts[g.index];
      nlohmann::ordered_json j{{"participant", s.participant},
                               {"session_id", s.id},
                               {"set", s.set_id},
                               {"index", g.index},
                               {"origin", {p.origin.document, p.origin.offset}},
                               {"guess", g.guess},
                               {"guess_token", g.guess_token},
                               {"true_token", g.true_token},
                               {"correct", g.correct},
                               {"excluded", g.excluded},
                               {"timestamp_ms", g.timestamp_ms},
                               {"seq", g.seq}};
      out << j.dump() << '\n';
    }
  }

  void export_compare(const Session& s, std::ostringstream& out) const {
    const auto& set = store_.question_set(s.set_id);
    const std::uint64_t base = static_cast<std::uint64_t>(ordinal_.at(s.set_id)) << 32;
    std::size_t asked_pos = 0;
    for (const auto& r : set.rounds) {
      Response resp;
      resp.round_id = r.round_id;
      resp.responder_id = s.participant;
      if (r.auto_answered) {
        if (set.prompt_done_at.at(r.prompt_id) > s.cursor) continue;
      } else {
        const auto pos = asked_pos++;
        if (pos >= s.cursor) continue;
        const auto& c = s.comparisons[pos];
        resp.p = c.p;
        resp.timestamp_ms = c.timestamp_ms;
      }
      auto sample = response_to_ratio(resp, r);
      sample.prompt_id = base | r.prompt_id;
      auto j = to_record(sample);
      j["set"] = s.set_id;
      j["session_id"] = s.id;
      out << j.dump() << '\n';
    }
  }

  static std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
  }

  static std::string new_session_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::ostringstream s;
    s << std::hex << rng() << rng();
    return s.str();
  }

  Tokenizer tokenizer_;
  std::map<std::string, QuestionSet> sets_;
  std::map<std::string, std::size_t> ordinal_;
  Store store_;
  ReplayResult initial_;  // read before the log opens, since opening cuts a torn tail
  std::optional<EventLog> log_;
  mutable std::shared_mutex mu_;
  std::size_t replayed_ = 0;
  bool dropped_tail_ = false;
};

}  // namespace lmgame
