#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/core/random.hpp"
#include "lmgame/core/types.hpp"
#include "lmgame/predictors/distribution.hpp"

namespace lmgame {

// Anything that maps a context to a next-token distribution. Implementations are
// immutable after construction and safe to share between threads.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::string name() const = 0;
  virtual Distribution distribution(TokenView context) const = 0;

 protected:
  void check_context(TokenView context) const {
    for (auto id : context)
      if (id >= vocab_size())
        fail(ErrorKind::data, name() + ": context token " + std::to_string(id) + " >= vocab size " + std::to_string(vocab_size()));
  }
};

using PredictorPtr = std::shared_ptr<const Predictor>;

inline Distribution predict_distribution(const Predictor& p, TokenView context) { return p.distribution(context); }

inline TokenId predict_top1(const Predictor& p, TokenView context) { return p.distribution(context).argmax(); }

inline TokenId sample_next(const Predictor& p, TokenView context, Rng& rng) { return p.distribution(context).sample(rng); }

class UniformPredictor final : public Predictor {
 public:
  explicit UniformPredictor(std::size_t vocab_size, std::string name = "uniform")
      : vocab_size_(vocab_size), name_(std::move(name)) {
    if (vocab_size == 0) fail(ErrorKind::config, "uniform predictor needs vocab_size >= 1");
  }

  std::size_t vocab_size() const override { return vocab_size_; }
  std::string name() const override { return name_; }
  Distribution distribution(TokenView context) const override {
    check_context(context);
    return Distribution::uniform(vocab_size_);
  }

 private:
  std::size_t vocab_size_;
  std::string name_;
};

// Stored rows keyed by the exact context. Unknown contexts use the fallback row, or fail
// when there is none.
class LookupPredictor final : public Predictor {
 public:
  LookupPredictor(std::size_t vocab_size, std::string name = "lookup") : vocab_size_(vocab_size), name_(std::move(name)) {
    if (vocab_size == 0) fail(ErrorKind::config, "lookup predictor needs vocab_size >= 1");
  }

  void set_row(TokenSeq context, Distribution row) {
    check_row(row);
    rows_.insert_or_assign(std::move(context), std::move(row));
  }
  void set_fallback(Distribution row) {
    check_row(row);
    fallback_ = std::move(row);
  }

  std::size_t vocab_size() const override { return vocab_size_; }
  std::string name() const override { return name_; }

  Distribution distribution(TokenView context) const override {
    check_context(context);
    auto it = rows_.find(TokenSeq(context.begin(), context.end()));
    if (it != rows_.end()) return it->second;
    if (fallback_) return *fallback_;
    fail(ErrorKind::data, name_ + ": no row for context of length " + std::to_string(context.size()));
  }

  // {"vocab_size": V, "rows": [{"context": [...], "probs": [...]}], "fallback": [...]}
  static LookupPredictor from_json(const nlohmann::json& j, std::string name = "lookup") {
    LookupPredictor p(j.at("vocab_size").get<std::size_t>(), std::move(name));
    for (const auto& row : j.value("rows", nlohmann::json::array()))
      p.set_row(row.at("context").get<TokenSeq>(), Distribution::from_probs(row.at("probs").get<std::vector<double>>()));
    if (j.contains("fallback")) p.set_fallback(Distribution::from_probs(j["fallback"].get<std::vector<double>>()));
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [ctx, row] : rows_)
      rows.push_back({{"context", ctx}, {"probs", std::vector<double>(row.probs().begin(), row.probs().end())}});
    nlohmann::json j{{"vocab_size", vocab_size_}, {"rows", rows}};
    if (fallback_) j["fallback"] = std::vector<double>(fallback_->probs().begin(), fallback_->probs().end());
    return j;
  }

 private:
  void check_row(const Distribution& row) const {
    if (row.size() != vocab_size_)
      fail(ErrorKind::data, name_ + ": row has " + std::to_string(row.size()) + " entries, expected " + std::to_string(vocab_size_));
  }

  std::size_t vocab_size_;
  std::string name_;
  std::map<TokenSeq, Distribution> rows_;
  std::optional<Distribution> fallback_;
};

}  // namespace lmgame
