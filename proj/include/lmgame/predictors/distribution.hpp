#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lmgame/core/error.hpp"
#include "lmgame/core/random.hpp"
#include "lmgame/core/types.hpp"

namespace lmgame {

// Smallest probability any predictor may report. Keeps g(y)/g(x) and log h(y) finite.
inline constexpr double kProbabilityFloor = 1e-12;

// A strictly positive, normalized probability vector over the vocabulary.
class Distribution {
 public:
  Distribution() = default;

  // Clamps to the floor and renormalizes. Rejects NaN, negative, or all-zero input.
  static Distribution from_probs(std::vector<double> probs) {
    if (probs.empty()) fail(ErrorKind::data, "empty distribution");
    bool any_mass = false;
    for (double& p : probs) {
      if (!std::isfinite(p) || p < 0.0) fail(ErrorKind::data, "distribution entry is negative or not finite");
      any_mass = any_mass || p > 0.0;
      p = std::max(p, kProbabilityFloor);
    }
    if (!any_mass) fail(ErrorKind::data, "distribution has no mass");
    normalize(probs);
    return Distribution(std::move(probs));
  }

  // Natural-log probabilities, not necessarily normalized.
  static Distribution from_logprobs(std::span<const double> logprobs) {
    if (logprobs.empty()) fail(ErrorKind::data, "empty distribution");
    double max = -INFINITY;
    for (double lp : logprobs) {
      if (std::isnan(lp) || lp == INFINITY) fail(ErrorKind::data, "log-probability is NaN or +inf");
      max = std::max(max, lp);
    }
    if (!std::isfinite(max)) fail(ErrorKind::data, "all log-probabilities are -inf");
    std::vector<double> probs(logprobs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(logprobs[i] - max);
    normalize(probs);
    return from_probs(std::move(probs));
  }

  static Distribution uniform(std::size_t size) {
    if (size == 0) fail(ErrorKind::data, "empty distribution");
    return Distribution(std::vector<double>(size, 1.0 / static_cast<double>(size)));
  }

  // All mass on one token, up to the floor.
  static Distribution point_mass(std::size_t size, TokenId token) {
    std::vector<double> probs(size, 0.0);
    probs.at(token) = 1.0;
    return from_probs(std::move(probs));
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](TokenId id) const { return probs_[id]; }
  double at(TokenId id) const {
    if (id >= probs_.size()) fail(ErrorKind::data, "token " + std::to_string(id) + " outside distribution");
    return probs_[id];
  }
  std::span<const double> probs() const { return probs_; }

  // Highest-probability token; ties go to the lowest id.
  TokenId argmax() const {
    return static_cast<TokenId>(std::distance(probs_.begin(), std::max_element(probs_.begin(), probs_.end())));
  }

  TokenId sample(Rng& rng) const {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      acc += probs_[i];
      if (u < acc) return static_cast<TokenId>(i);
    }
    // Rounding left u above the running sum; return the last token with mass.
    return static_cast<TokenId>(probs_.size() - 1);
  }

 private:
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) {}

  static void normalize(std::vector<double>& probs) {
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    if (!(total > 0.0) || !std::isfinite(total)) fail(ErrorKind::data, "distribution has no mass");
    for (double& p : probs) p /= total;
  }

  std::vector<double> probs_;
};

}  // namespace lmgame
