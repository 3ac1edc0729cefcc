#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/corpus/filters.hpp"
#include "lmgame/estimator/estimator.hpp"
#include "lmgame/predictors/predictor.hpp"

namespace lmgame {

enum class Top1Filter { none, exclude_visually_empty, word_tokens_only };

inline Top1Filter top1_filter_from_string(const std::string& s) {
  if (s == "none") return Top1Filter::none;
  if (s == "exclude_visually_empty") return Top1Filter::exclude_visually_empty;
  if (s == "word_tokens_only") return Top1Filter::word_tokens_only;
  fail(ErrorKind::config, "unknown top-1 filter '" + s + "'");
}

inline const char* to_string(Top1Filter f) {
  switch (f) {
    case Top1Filter::none: return "none";
    case Top1Filter::exclude_visually_empty: return "exclude_visually_empty";
    case Top1Filter::word_tokens_only: return "word_tokens_only";
  }
  return "none";
}

// Whether a prompt survives the filter. Word tokens need the token after the answer.
inline bool keep_prompt(const PromptInstance& p, Top1Filter filter, const Vocab& vocab) {
  switch (filter) {
    case Top1Filter::none: return true;
    case Top1Filter::exclude_visually_empty: return !is_visually_empty(p.true_next, vocab);
    case Top1Filter::word_tokens_only: return p.following && is_word_token(p.true_next, *p.following, vocab);
  }
  return true;
}

struct Top1Report {
  std::string predictor;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
  std::vector<bool> hits;  // per evaluated prompt
};

inline Top1Report top1_accuracy(const Predictor& predictor, std::span<const PromptInstance> prompts, Top1Filter filter,
                                const Vocab& vocab) {
  Top1Report rep;
  rep.predictor = predictor.name();
  for (const auto& p : prompts) {
    if (!keep_prompt(p, filter, vocab)) {
      ++rep.excluded;
      continue;
    }
    const bool hit = predict_top1(predictor, p.context) == p.true_next;
    rep.hits.push_back(hit);
    rep.correct += hit;
  }
  rep.evaluated = rep.hits.size();
  if (rep.evaluated == 0) fail(ErrorKind::data, "every prompt was filtered out");
  rep.accuracy = static_cast<double>(rep.correct) / static_cast<double>(rep.evaluated);
  return rep;
}

// Loss, perplexity and accuracy for one split, each with a 2 * sd / sqrt(N) error bar.
struct SplitStats {
  std::size_t N = 0;
  double loss = 0.0;
  double loss_err = 0.0;
  double perplexity = 0.0;
  double perplexity_lower = 0.0;
  double perplexity_upper = 0.0;
  double accuracy = 0.0;
  double accuracy_err = 0.0;
};

struct SplitReport {
  std::string predictor;
  SplitStats train;
  SplitStats validation;
};

inline SplitStats split_stats(const Predictor& predictor, std::span<const PromptInstance> prompts) {
  if (prompts.size() < 2) fail(ErrorKind::data, "split statistics need at least two prompts");
  SplitStats s;
  std::vector<double> losses, hits;
  for (const auto& p : prompts) {
    const auto d = predictor.distribution(p.context);
    losses.push_back(-std::log(d.at(p.true_next)));
    hits.push_back(d.argmax() == p.true_next ? 1.0 : 0.0);
  }
  const double root_n = std::sqrt(static_cast<double>(prompts.size()));
  s.N = prompts.size();
  s.loss = mean_of(losses);
  s.loss_err = 2.0 * sample_sd(losses) / root_n;
  s.perplexity = std::exp(s.loss);
  s.perplexity_lower = std::exp(s.loss - s.loss_err);
  s.perplexity_upper = std::exp(s.loss + s.loss_err);
  s.accuracy = mean_of(hits);
  s.accuracy_err = 2.0 * sample_sd(hits) / root_n;
  return s;
}

inline SplitReport split_comparison(const Predictor& predictor, std::span<const PromptInstance> train_prompts,
                                    std::span<const PromptInstance> val_prompts) {
  return {predictor.name(), split_stats(predictor, train_prompts), split_stats(predictor, val_prompts)};
}

inline nlohmann::ordered_json to_json(const SplitStats& s) {
  return {{"N", s.N},
          {"loss", s.loss},
          {"loss_err", s.loss_err},
          {"perplexity", s.perplexity},
          {"perplexity_bounds", {s.perplexity_lower, s.perplexity_upper}},
          {"accuracy", s.accuracy},
          {"accuracy_err", s.accuracy_err}};
}

inline nlohmann::ordered_json to_json(const Top1Report& r) {
  return {{"predictor", r.predictor}, {"accuracy", r.accuracy}, {"correct", r.correct}, {"evaluated", r.evaluated},
          {"excluded", r.excluded}};
}

}  // namespace lmgame
