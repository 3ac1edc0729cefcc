#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/core/random.hpp"
#include "lmgame/corpus/filters.hpp"
#include "lmgame/elicitation/allowed_set.hpp"
#include "lmgame/elicitation/round.hpp"
#include "lmgame/estimator/estimator.hpp"
#include "lmgame/simulation/participant.hpp"

namespace lmgame {

enum class EstimationMode {
  monte_carlo,  // n generator draws per prompt, duplicates weighted by multiplicity
  exhaustive,   // every token once, weighted by g(x)
};

inline EstimationMode estimation_mode_from_string(const std::string& s) {
  if (s == "monte_carlo") return EstimationMode::monte_carlo;
  if (s == "exhaustive") return EstimationMode::exhaustive;
  fail(ErrorKind::config, "unknown estimation mode '" + s + "'");
}

struct ExperimentConfig {
  PredictorPtr generator;
  PredictorPtr target;
  std::vector<PromptInstance> prompts;
  std::size_t n = 10;
  std::uint64_t seed = 0;
  std::optional<AllowedSet> allowed;  // nullopt: continuous answers
  EstimationMode mode = EstimationMode::monte_carlo;
  Behavior behavior = Behavior::optimal;
  PredictorPtr believed_generator;  // naive_rational only; defaults to the generator
  double logit_noise = 0.0;
  std::size_t responders = 1;  // simulated players answering the same questions

  void validate() const {
    if (!generator || !target) fail(ErrorKind::config, "experiment needs a generator and a target");
    if (generator->vocab_size() != target->vocab_size()) fail(ErrorKind::config, "generator and target vocab sizes differ");
    if (prompts.empty()) fail(ErrorKind::config, "experiment needs N >= 1 prompts");
    if (mode == EstimationMode::monte_carlo && n == 0) fail(ErrorKind::config, "experiment needs n >= 1");
    if (responders == 0) fail(ErrorKind::config, "experiment needs at least one responder");
  }
};

struct ExperimentResult {
  LossReport estimate;   // from simulated responses
  LossReport truth;      // direct loss of the target
  LossReport generator;  // direct loss of the generator
  double bias = 0.0;     // estimate.loss - truth.loss, nats
  std::vector<RatioSample> samples;
};

// Builds rounds, lets simulated players answer them, and runs the estimator. Each prompt
// draws from its own random stream, so results do not depend on evaluation order.
inline ExperimentResult run_estimation_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult res;
  std::vector<SimulatedParticipant> players;
  for (std::size_t j = 0; j < config.responders; ++j) {
    SimulatedParticipant p;
    p.id = config.responders == 1 ? "sim" : "sim-" + std::to_string(j);
    p.belief = config.target;
    p.allowed = config.allowed;
    p.behavior = config.behavior;
    p.believed_generator = config.believed_generator ? config.believed_generator : config.generator;
    p.logit_noise = config.logit_noise;
    players.push_back(std::move(p));
  }

  std::vector<double> truth_losses, generator_losses;
  truth_losses.reserve(config.prompts.size());
  generator_losses.reserve(config.prompts.size());
  for (std::size_t i = 0; i < config.prompts.size(); ++i) {
    const auto& prompt = config.prompts[i];
    const auto g = config.generator->distribution(prompt.context);
    const auto h = config.target->distribution(prompt.context);
    std::optional<Distribution> believed;
    if (config.behavior == Behavior::naive_rational) believed = players.front().believed_generator->distribution(prompt.context);
    truth_losses.push_back(-std::log(h.at(prompt.true_next)));
    generator_losses.push_back(-std::log(g.at(prompt.true_next)));

    auto rng = make_rng(config.seed, 2 * i);
    const auto rounds = config.mode == EstimationMode::exhaustive ? exhaustive_rounds(prompt, i, g)
                                                                  : build_rounds(prompt, i, g, config.n, rng);
    for (std::size_t j = 0; j < players.size(); ++j) {
      auto noise = make_rng(mix_seed(config.seed, 2 * i + 1), j);
      for (const auto& round : rounds) {
        const auto resp =
            make_response(players[j], round, answer(players[j], round, h, believed ? &*believed : nullptr, &noise));
        res.samples.push_back(config.mode == EstimationMode::exhaustive ? response_to_ratio(resp, round, round.g_sampled)
                                                                        : response_to_ratio(resp, round));
      }
    }
  }

  res.estimate = estimate_from_samples(res.samples, config.target->name());
  res.truth.predictor = config.target->name();
  res.truth.per_prompt = std::move(truth_losses);
  detail::fill_from_per_prompt(res.truth);
  res.generator.predictor = config.generator->name();
  res.generator.per_prompt = std::move(generator_losses);
  detail::fill_from_per_prompt(res.generator);
  res.bias = res.estimate.loss - res.truth.loss;
  return res;
}

struct BiasPoint {
  std::size_t n = 0;  // 0 marks the exhaustive limit
  double mean_bias = 0.0;
  double spread = 0.0;  // sample sd over seeds
  double true_loss = 0.0;
  std::vector<double> biases;
};

inline constexpr std::size_t kDefaultBiasSeeds = 10;

// Estimate minus truth as a function of the per-prompt sample count n, repeated over seeds.
inline std::vector<BiasPoint> bias_curve(const ExperimentConfig& base, const std::vector<std::size_t>& n_values,
                                         std::size_t seeds = kDefaultBiasSeeds) {
  if (n_values.empty()) fail(ErrorKind::config, "bias curve needs at least one n");
  if (seeds == 0) fail(ErrorKind::config, "bias curve needs at least one seed");
  std::vector<BiasPoint> out;
  for (auto n : n_values) {
    BiasPoint pt;
    pt.n = n;
    for (std::size_t s = 0; s < seeds; ++s) {
      auto cfg = base;
      cfg.n = n;
      cfg.seed = mix_seed(base.seed, s);
      if (n == 0) cfg.mode = EstimationMode::exhaustive;
      const auto r = run_estimation_experiment(cfg);
      pt.biases.push_back(r.bias);
      pt.true_loss = r.truth.loss;
    }
    pt.mean_bias = mean_of(pt.biases);
    pt.spread = pt.biases.size() >= 2 ? sample_sd(pt.biases) : 0.0;
    out.push_back(std::move(pt));
  }
  return out;
}

struct RoundingRow {
  std::string preset;
  LossReport estimate;
  double true_loss = 0.0;
};

// One estimation per allowed-set preset (nullopt = continuous), all sharing the same
// prompts, candidates and seed.
inline std::vector<RoundingRow> rounding_sweep(PredictorPtr target, PredictorPtr generator,
                                               const std::vector<std::optional<AllowedSet>>& presets, ExperimentConfig base) {
  if (presets.empty()) fail(ErrorKind::config, "rounding sweep needs at least one preset");
  base.target = std::move(target);
  base.generator = std::move(generator);
  std::vector<RoundingRow> rows;
  for (const auto& preset : presets) {
    auto cfg = base;
    cfg.allowed = preset;
    const auto r = run_estimation_experiment(cfg);
    rows.push_back({preset ? preset->name() : "continuous", r.estimate, r.truth.loss});
  }
  return rows;
}

struct SubsetReport {
  LossReport report;
  std::size_t kept = 0;
  std::size_t total = 0;
};

// Re-estimates on prompts whose true next token is a word token. samples[*].prompt_id
// indexes prompts.
inline SubsetReport word_token_subset_report(std::span<const RatioSample> samples, std::span<const PromptInstance> prompts,
                                             const Vocab& vocab, std::string name = "estimate") {
  std::vector<bool> keep(prompts.size(), false);
  SubsetReport out;
  out.total = prompts.size();
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& p = prompts[i];
    keep[i] = p.following && is_word_token(p.true_next, *p.following, vocab);
    out.kept += keep[i];
  }
  std::vector<RatioSample> subset;
  for (const auto& s : samples) {
    if (s.prompt_id >= prompts.size()) fail(ErrorKind::data, "sample refers to an unknown prompt");
    if (keep[s.prompt_id]) subset.push_back(s);
  }
  if (subset.empty()) fail(ErrorKind::data, "no prompt has a word token as its answer");
  out.report = estimate_from_samples(subset, std::move(name));
  return out;
}

inline nlohmann::ordered_json to_json(const BiasPoint& p) {
  return {{"n", p.n}, {"mean_bias", p.mean_bias}, {"spread", p.spread}, {"true_loss", p.true_loss}, {"biases", p.biases}};
}

}  // namespace lmgame
