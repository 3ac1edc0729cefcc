#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/container_hash/hash.hpp>
#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/corpus/corpus.hpp"
#include "lmgame/predictors/predictor.hpp"

namespace lmgame {

struct TokenSeqHash {
  std::size_t operator()(const TokenSeq& s) const { return boost::hash_range(s.begin(), s.end()); }
};

// Add-k smoothed n-gram model. The prediction is a fixed uniform mixture over suffix
// lengths 0..order-1:
//   P(x | c) = (1/order) * sum_j (count(s_j, x) + k) / (count(s_j) + k V)
// where s_j is the last min(j, |c|) tokens of c.
class NGramModel final : public Predictor {
 public:
  struct SuffixCounts {
    std::uint64_t total = 0;
    std::vector<std::pair<TokenId, std::uint64_t>> next;  // sorted by token id
  };

  NGramModel(std::size_t order, double smoothing_k, std::size_t vocab_size, std::string name = "")
      : order_(order), k_(smoothing_k), vocab_size_(vocab_size), name_(std::move(name)), tables_(order) {
    if (order < 1) fail(ErrorKind::config, "n-gram order must be >= 1");
    if (!(smoothing_k > 0.0)) fail(ErrorKind::config, "n-gram smoothing k must be > 0");
    if (vocab_size == 0) fail(ErrorKind::config, "n-gram vocab size must be >= 1");
    if (name_.empty()) name_ = "ngram-" + std::to_string(order);
  }

  static NGramModel train(const CorpusSplit& corpus, std::size_t order, double smoothing_k, std::size_t vocab_size,
                          std::string name = "") {
    NGramModel model(order, smoothing_k, vocab_size, std::move(name));
    if (corpus.empty()) fail(ErrorKind::data, "cannot train an n-gram model on an empty corpus");
    corpus.check_ids(vocab_size);

    std::vector<std::unordered_map<TokenSeq, std::unordered_map<TokenId, std::uint64_t>, TokenSeqHash>> raw(order);
    for (const auto& doc : corpus.documents) {
      for (std::size_t i = 0; i < doc.size(); ++i) {
        for (std::size_t j = 0; j < order && j <= i; ++j) {
          TokenSeq suffix(doc.begin() + static_cast<std::ptrdiff_t>(i - j), doc.begin() + static_cast<std::ptrdiff_t>(i));
          ++raw[j][std::move(suffix)][doc[i]];
        }
      }
    }
    for (std::size_t j = 0; j < order; ++j) {
      auto& table = model.tables_[j];
      table.reserve(raw[j].size());
      for (auto& [suffix, counts] : raw[j]) {
        SuffixCounts sc;
        sc.next.assign(counts.begin(), counts.end());
        std::sort(sc.next.begin(), sc.next.end());
        for (const auto& [_, c] : sc.next) sc.total += c;
        table.emplace(suffix, std::move(sc));
      }
    }
    return model;
  }

  std::size_t order() const { return order_; }
  double smoothing_k() const { return k_; }
  std::size_t vocab_size() const override { return vocab_size_; }
  std::string name() const override { return name_; }

  const SuffixCounts* counts(const TokenSeq& suffix) const {
    if (suffix.size() >= order_) return nullptr;
    const auto& table = tables_[suffix.size()];
    auto it = table.find(suffix);
    return it == table.end() ? nullptr : &it->second;
  }

  Distribution distribution(TokenView context) const override {
    check_context(context);
    const double weight = 1.0 / static_cast<double>(order_);
    const double kv = k_ * static_cast<double>(vocab_size_);
    std::vector<double> probs(vocab_size_, 0.0);
    double flat = 0.0;
    for (std::size_t j = 0; j < order_; ++j) {
      const std::size_t len = std::min(j, context.size());
      const TokenSeq suffix(context.end() - static_cast<std::ptrdiff_t>(len), context.end());
      const auto* sc = counts(suffix);
      const double denom = static_cast<double>(sc ? sc->total : 0) + kv;
      flat += weight * k_ / denom;
      if (sc)
        for (const auto& [tok, c] : sc->next) probs[tok] += weight * static_cast<double>(c) / denom;
    }
    for (double& p : probs) p += flat;
    return Distribution::from_probs(std::move(probs));
  }

  nlohmann::json to_json() const {
    nlohmann::json tables = nlohmann::json::array();
    for (const auto& table : tables_) {
      std::map<TokenSeq, const SuffixCounts*> sorted;
      for (const auto& [s, c] : table) sorted.emplace(s, &c);
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& [s, c] : sorted) entries.push_back({{"suffix", s}, {"next", c->next}});
      tables.push_back(std::move(entries));
    }
    return {{"format", "lmgame-ngram-1"}, {"name", name_}, {"order", order_}, {"k", k_}, {"vocab_size", vocab_size_},
            {"tables", tables}};
  }

  static NGramModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "lmgame-ngram-1") fail(ErrorKind::data, "not an lmgame n-gram model file");
    NGramModel model(j.at("order").get<std::size_t>(), j.at("k").get<double>(), j.at("vocab_size").get<std::size_t>(),
                     j.value("name", ""));
    const auto& tables = j.at("tables");
    if (tables.size() != model.order_) fail(ErrorKind::data, "n-gram model file has the wrong number of tables");
    for (std::size_t t = 0; t < model.order_; ++t) {
      for (const auto& e : tables[t]) {
        SuffixCounts sc;
        sc.next = e.at("next").get<std::vector<std::pair<TokenId, std::uint64_t>>>();
        for (const auto& [tok, c] : sc.next) {
          if (tok >= model.vocab_size_) fail(ErrorKind::data, "n-gram model file has an out-of-range token");
          sc.total += c;
        }
        auto suffix = e.at("suffix").get<TokenSeq>();
        if (suffix.size() != t) fail(ErrorKind::data, "n-gram suffix stored in the wrong table");
        model.tables_[t].emplace(std::move(suffix), std::move(sc));
      }
    }
    return model;
  }

 private:
  std::size_t order_;
  double k_;
  std::size_t vocab_size_;
  std::string name_;
  std::vector<std::unordered_map<TokenSeq, SuffixCounts, TokenSeqHash>> tables_;
};

inline NGramModel ngram_train(const CorpusSplit& corpus, std::size_t order, double smoothing_k, std::size_t vocab_size) {
  return NGramModel::train(corpus, order, smoothing_k, vocab_size);
}

}  // namespace lmgame
