#pragma once

#include <cmath>

#include "lmgame/core/error.hpp"

namespace lmgame {

// Which of the two candidates turned out to be the real next token. "x" is the candidate
// the reported probability refers to.
enum class Outcome { x_true, y_true };

enum class RewardRule {
  weighted_cross_entropy,  // g(z) log p(z)
  game_points,             // 1000 g(z) (log p(z) - log 0.5), zero for p = 0.5
};

// Weighted binary cross-entropy reward. Weighting by the generator probability of the true
// candidate cancels the information carried by how candidates were sampled, so the best
// report is h(x) / (h(x) + h(y)) whatever the player believes about the generator.
inline double reward(double p, Outcome outcome, double g_x, double g_y, RewardRule rule = RewardRule::game_points) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::validation, "reward needs p strictly between 0 and 1");
  if (!(g_x > 0.0 && g_x <= 1.0) || !(g_y > 0.0 && g_y <= 1.0))
    fail(ErrorKind::validation, "reward needs generator probabilities in (0, 1]");
  const bool x_true = outcome == Outcome::x_true;
  const double g = x_true ? g_x : g_y;
  const double q = x_true ? p : 1.0 - p;
  if (rule == RewardRule::weighted_cross_entropy) return g * std::log(q);
  return 1000.0 * g * (std::log(q) - std::log(0.5));
}

// Report that maximizes the expected reward for a player whose beliefs are h.
inline double optimal_response(double h_x, double h_y) {
  if (!(h_x > 0.0) || !(h_y > 0.0)) fail(ErrorKind::validation, "optimal_response needs positive beliefs");
  return h_x / (h_x + h_y);
}

}  // namespace lmgame
