#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/corpus/corpus.hpp"
#include "lmgame/estimator/ratio_sample.hpp"
#include "lmgame/estimator/uncertainty.hpp"
#include "lmgame/predictors/predictor.hpp"

namespace lmgame {

// Per-prompt result of the importance-sampling estimate.
struct PromptEstimate {
  std::uint64_t prompt_id = 0;
  double h_over_g = 1.0;        // estimated h(y|c) / g(y|c)
  double log_term = 0.0;        // log of the weighted mean; equals -log(h_over_g)
  std::size_t n_effective = 0;  // distinct candidates behind the mean
  double generator_loss = 0.0;  // -log g(y|c)
};

// Losses are in nats per token and perplexity is exp(loss).
struct LossReport {
  std::string predictor;
  std::optional<double> loss_gap;        // L_h - L_G, when estimated against a generator
  std::optional<double> generator_loss;  // L_G on the same prompts
  double loss = 0.0;
  double perplexity = 1.0;
  double sigma = 0.0;
  double lower = 1.0;
  double upper = 1.0;
  std::size_t N = 0;
  std::vector<double> per_prompt;  // L_h contribution of each prompt, in prompt order
  std::vector<PromptEstimate> estimates;
};

namespace detail {

inline void fill_from_per_prompt(LossReport& rep) {
  rep.N = rep.per_prompt.size();
  rep.loss = mean_of(rep.per_prompt);
  rep.perplexity = std::exp(rep.loss);
  if (rep.N >= 2) {
    const auto b = uncertainty_bounds(rep.per_prompt);
    rep.sigma = b.sigma;
    rep.lower = b.lower;
    rep.upper = b.upper;
  } else {
    rep.sigma = 0.0;
    rep.lower = rep.upper = rep.perplexity;
  }
}

}  // namespace detail

// Mean negative log-probability of the true next token.
inline LossReport direct_loss(const Predictor& predictor, std::span<const PromptInstance> prompts) {
  if (prompts.empty()) fail(ErrorKind::data, "direct_loss needs at least one prompt");
  LossReport rep;
  rep.predictor = predictor.name();
  rep.per_prompt.reserve(prompts.size());
  for (const auto& p : prompts) rep.per_prompt.push_back(-std::log(predictor.distribution(p.context).at(p.true_next)));
  detail::fill_from_per_prompt(rep);
  return rep;
}

// Weighted mean over candidates x of (g(y)/g(x)) r(x, y), inverted. With r = h(x)/h(y) and
// x ~ g the mean is g(y)/h(y) in expectation.
// Each term is (g(y) / g(x)) * r, except that it is exactly 1 when
// (log g(y) - log g(x)) + log r is exactly 0. With log r = log h(x) - log h(y) and h = g
// the two differences cancel in IEEE arithmetic, so self-estimation gives a gap of exactly
// zero, while other terms keep the accuracy of the plain product.
inline PromptEstimate estimate_h_over_g(std::span<const RatioSample> samples) {
  if (samples.empty()) fail(ErrorKind::data, "estimate_h_over_g needs at least one sample");
  const auto y = samples.front().y_true;
  const auto g_y = samples.front().g_y;
  double num = 0.0, den = 0.0;
  for (const auto& s : samples) {
    s.validate();
    if (s.y_true != y) fail(ErrorKind::data, "samples for one prompt disagree on the true token");
    if (s.g_y != g_y) fail(ErrorKind::data, "samples for one prompt disagree on g(y)");
    const double log_term = (std::log(s.g_y) - std::log(s.g_x)) + s.log_r;
    num += s.weight * (log_term == 0.0 ? 1.0 : (s.g_y / s.g_x) * s.r);
    den += s.weight;
  }
  const double mean = num / den;
  PromptEstimate e;
  e.prompt_id = samples.front().prompt_id;
  e.log_term = std::log(mean);
  e.h_over_g = 1.0 / mean;
  e.n_effective = samples.size();
  e.generator_loss = -std::log(g_y);
  return e;
}

// L_h = L_G + mean log_term. Uncertainty comes from the per-prompt values
// -log g(y) + log_term.
inline LossReport estimate_loss_gap(std::span<const PromptEstimate> estimates, std::string predictor = "estimate") {
  if (estimates.empty()) fail(ErrorKind::data, "estimate_loss_gap needs at least one prompt");
  LossReport rep;
  rep.predictor = std::move(predictor);
  double gap = 0.0, gen = 0.0;
  for (const auto& e : estimates) {
    gap += e.log_term;
    gen += e.generator_loss;
    rep.per_prompt.push_back(e.generator_loss + e.log_term);
  }
  const auto n = static_cast<double>(estimates.size());
  rep.loss_gap = gap / n;
  rep.generator_loss = gen / n;
  detail::fill_from_per_prompt(rep);
  rep.loss = *rep.generator_loss + *rep.loss_gap;
  rep.perplexity = std::exp(rep.loss);
  rep.estimates.assign(estimates.begin(), estimates.end());
  return rep;
}

// Variant taking L_G computed elsewhere (e.g. by direct_loss on the same prompts).
inline LossReport estimate_loss_gap(std::span<const PromptEstimate> estimates, double generator_loss,
                                    std::string predictor = "estimate") {
  auto rep = estimate_loss_gap(estimates, std::move(predictor));
  const double shift = generator_loss - *rep.generator_loss;
  rep.generator_loss = generator_loss;
  for (double& v : rep.per_prompt) v += shift;
  detail::fill_from_per_prompt(rep);
  rep.loss = generator_loss + *rep.loss_gap;
  rep.perplexity = std::exp(rep.loss);
  return rep;
}

// Groups samples by prompt (ascending prompt id) and runs the estimate end to end.
inline LossReport estimate_from_samples(std::span<const RatioSample> samples, std::string predictor = "estimate") {
  std::map<std::uint64_t, std::vector<RatioSample>> by_prompt;
  for (const auto& s : samples) by_prompt[s.prompt_id].push_back(s);
  std::vector<PromptEstimate> estimates;
  estimates.reserve(by_prompt.size());
  for (const auto& [_, group] : by_prompt) estimates.push_back(estimate_h_over_g(group));
  return estimate_loss_gap(estimates, std::move(predictor));
}

struct BootstrapReport {
  std::size_t iterations = 0;
  double median = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> perplexities;
};

inline constexpr std::size_t kDefaultBootstrapIterations = 100;

// Each iteration ignores a uniformly random half (rounded down) of the responders and
// re-estimates perplexity from the rest.
inline BootstrapReport bootstrap_over_users(std::span<const RatioSample> samples, std::size_t iterations, std::uint64_t seed) {
  std::map<std::string, std::vector<const RatioSample*>> by_responder;
  for (const auto& s : samples) by_responder[s.responder_id].push_back(&s);
  if (by_responder.size() < 2) fail(ErrorKind::data, "bootstrap over users needs at least two responders");
  if (iterations == 0) fail(ErrorKind::config, "bootstrap needs at least one iteration");

  std::vector<std::string> responders;
  for (const auto& [id, _] : by_responder) responders.push_back(id);
  const std::size_t drop = responders.size() / 2;

  BootstrapReport rep;
  rep.iterations = iterations;
  rep.seed = seed;
  auto rng = make_rng(seed, 0x626f6f74);
  for (std::size_t it = 0; it < iterations; ++it) {
    auto order = responders;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<RatioSample> kept;
    for (std::size_t k = drop; k < order.size(); ++k)
      for (const auto* s : by_responder[order[k]]) kept.push_back(*s);
    rep.perplexities.push_back(estimate_from_samples(kept).perplexity);
  }
  rep.median = quantile(rep.perplexities, 0.5);
  rep.q05 = quantile(rep.perplexities, 0.05);
  rep.q95 = quantile(rep.perplexities, 0.95);
  return rep;
}

// Display transform: loss in bits and base-2 perplexity (2^bits equals exp(nats)).
struct BitsView {
  double loss_bits;
  double perplexity;
};

inline BitsView to_bits(const LossReport& r) { return {r.loss / std::numbers::ln2, std::exp2(r.loss / std::numbers::ln2)}; }

inline nlohmann::ordered_json to_json(const LossReport& r, bool include_per_prompt = false) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json j{{"predictor", r.predictor},
                           {"loss_gap", opt(r.loss_gap)},
                           {"generator_loss", opt(r.generator_loss)},
                           {"loss", r.loss},
                           {"perplexity", r.perplexity},
                           {"sigma", r.sigma},
                           {"bounds", {r.lower, r.upper}},
                           {"N", r.N},
                           {"loss_bits", to_bits(r).loss_bits}};
  if (include_per_prompt) j["per_prompt"] = r.per_prompt;
  return j;
}

inline nlohmann::ordered_json to_json(const BootstrapReport& r) {
  return {{"iterations", r.iterations}, {"median", r.median}, {"q05", r.q05}, {"q95", r.q95}, {"seed", r.seed}};
}

// prompt_id,log_term,h_over_g,n_effective,generator_loss
inline std::string log_terms_csv(const LossReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "prompt_id,log_term,h_over_g,n_effective,generator_loss\n";
  for (const auto& e : r.estimates)
    out << e.prompt_id << ',' << e.log_term << ',' << e.h_over_g << ',' << e.n_effective << ',' << e.generator_loss << '\n';
  return out.str();
}

}  // namespace lmgame
