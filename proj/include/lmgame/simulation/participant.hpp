#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>

#include "lmgame/core/error.hpp"
#include "lmgame/core/random.hpp"
#include "lmgame/elicitation/allowed_set.hpp"
#include "lmgame/elicitation/reward.hpp"
#include "lmgame/elicitation/round.hpp"
#include "lmgame/predictors/predictor.hpp"

namespace lmgame {

enum class Behavior {
  optimal,         // h(x) / (h(x) + h(y)); what the reward pays best for
  naive_rational,  // posterior that x is real given x ~ T, y ~ G; ignores the reward
};

inline Behavior behavior_from_string(const std::string& s) {
  if (s == "optimal") return Behavior::optimal;
  if (s == "naive_rational") return Behavior::naive_rational;
  fail(ErrorKind::config, "unknown responder behavior '" + s + "'");
}

// A stand-in for a human player. belief plays the role of h (or of T for the naive
// player); believed_generator is only consulted by naive_rational.
struct SimulatedParticipant {
  std::string id = "sim";
  PredictorPtr belief;
  std::optional<AllowedSet> allowed;  // nullopt: any probability in (0, 1)
  Behavior behavior = Behavior::optimal;
  PredictorPtr believed_generator;
  double logit_noise = 0.0;  // sd of Gaussian jitter added in logit space; 0 disables
};

inline constexpr double kMinAnswer = 1e-15;

struct Answer {
  double p = 0.5;                   // probability that the first displayed candidate is real
  std::optional<double> log_odds;   // exact log(p / (1 - p)) before clamping; continuous play only
  std::optional<std::pair<double, double>> weights;  // unnormalized belief in (first, second); continuous only
};

// The participant's answer given its belief distribution at the round's context (and the
// believed generator for naive play). Works in log-odds so continuous answers keep full
// precision for extreme ratios.
inline Answer answer(const SimulatedParticipant& who, const ComparisonRound& round, const Distribution& belief,
                     const Distribution* believed_generator = nullptr, Rng* noise_rng = nullptr) {
  if (round.auto_answered) return {0.5, std::nullopt, std::nullopt};
  const TokenId first = round.first_displayed();
  const TokenId second = round.second_displayed();
  double z = std::log(belief.at(first)) - std::log(belief.at(second));
  std::pair<double, double> w{belief.at(first), belief.at(second)};
  if (who.behavior == Behavior::naive_rational) {
    if (!believed_generator) fail(ErrorKind::config, who.id + ": naive_rational play needs a believed generator");
    z = (std::log(belief.at(first)) + std::log(believed_generator->at(second))) -
        (std::log(belief.at(second)) + std::log(believed_generator->at(first)));
    w = {belief.at(first) * believed_generator->at(second), belief.at(second) * believed_generator->at(first)};
  }
  if (who.logit_noise > 0.0) {
    if (!noise_rng) fail(ErrorKind::config, who.id + ": logit noise needs a random source");
    z += std::normal_distribution<double>(0.0, who.logit_noise)(*noise_rng);
    w = {std::exp(z), 1.0};
  }
  const double p = std::clamp(1.0 / (1.0 + std::exp(-z)), kMinAnswer, 1.0 - kMinAnswer);
  if (who.allowed) return {round_probability(p, *who.allowed), std::nullopt, std::nullopt};
  return {p, z, w};
}

inline double answer_probability(const SimulatedParticipant& who, const ComparisonRound& round, const Distribution& belief,
                                 const Distribution* believed_generator = nullptr, Rng* noise_rng = nullptr) {
  return answer(who, round, belief, believed_generator, noise_rng).p;
}

inline Response make_response(const SimulatedParticipant& who, const ComparisonRound& round, const Answer& a) {
  Response r;
  r.round_id = round.round_id;
  r.p = a.p;
  r.responder_id = who.id;
  r.log_odds = a.log_odds;
  r.weights = a.weights;
  return r;
}

inline Response respond(const SimulatedParticipant& who, const ComparisonRound& round, Rng* noise_rng = nullptr) {
  if (!who.belief) fail(ErrorKind::config, who.id + ": participant has no belief model");
  const auto belief = who.belief->distribution(round.prompt.context);
  std::optional<Distribution> gen;
  if (who.behavior == Behavior::naive_rational) {
    if (!who.believed_generator) fail(ErrorKind::config, who.id + ": naive_rational play needs a believed generator");
    gen = who.believed_generator->distribution(round.prompt.context);
  }
  return make_response(who, round, answer(who, round, belief, gen ? &*gen : nullptr, noise_rng));
}

}  // namespace lmgame
