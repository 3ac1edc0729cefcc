#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lmgame/core/error.hpp"

namespace lmgame {

// Answers a participant may give. Sorted, symmetric around 0.5, and containing 0.5.
class AllowedSet {
 public:
  explicit AllowedSet(std::vector<double> values, std::string name = "custom")
      : values_(std::move(values)), name_(std::move(name)) {
    std::sort(values_.begin(), values_.end());
    values_.erase(std::unique(values_.begin(), values_.end()), values_.end());
    if (values_.empty()) fail(ErrorKind::config, "allowed set is empty");
    for (double v : values_)
      if (!(v > 0.0 && v < 1.0)) fail(ErrorKind::config, "allowed values must lie strictly between 0 and 1");
    if (!contains(0.5)) fail(ErrorKind::config, "allowed set must contain 0.5");
    for (double v : values_)
      if (!contains(1.0 - v)) fail(ErrorKind::config, "allowed set must be symmetric (missing " + std::to_string(1.0 - v) + ")");
  }

  // 99%, 90%, ..., 10%, 1%: the checkboxes of the comparison game.
  static AllowedSet rounded() {
    return AllowedSet({0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99}, "rounded");
  }
  static AllowedSet more_round() { return AllowedSet({0.1, 0.2, 0.5, 0.8, 0.9}, "more_round"); }
  static AllowedSet even_more_round() { return AllowedSet({0.2, 0.5, 0.8}, "even_more_round"); }
  static AllowedSet half_only() { return AllowedSet({0.5}, "half_only"); }

  // Preset by name; "continuous" yields no set.
  static std::optional<AllowedSet> preset(const std::string& name) {
    if (name == "continuous") return std::nullopt;
    if (name == "rounded") return rounded();
    if (name == "more_round") return more_round();
    if (name == "even_more_round") return even_more_round();
    if (name == "half_only") return half_only();
    fail(ErrorKind::config, "unknown allowed-set preset '" + name + "'");
  }

  const std::vector<double>& values() const { return values_; }
  const std::string& name() const { return name_; }

  bool contains(double p) const {
    return std::any_of(values_.begin(), values_.end(), [&](double v) { return std::abs(v - p) <= kTolerance; });
  }

  // Tolerance used for membership and for detecting exact midpoints.
  static constexpr double kTolerance = 1e-9;

 private:
  std::vector<double> values_;
  std::string name_;
};

// Nearest allowed value. A point halfway between two values goes to the one nearer 0.5.
inline double round_probability(double p, const AllowedSet& allowed) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::validation, "probability must lie strictly between 0 and 1");
  double best = allowed.values().front();
  double best_dist = std::abs(p - best);
  for (double v : allowed.values()) {
    const double d = std::abs(p - v);
    if (d < best_dist - AllowedSet::kTolerance) {
      best = v;
      best_dist = d;
    } else if (std::abs(d - best_dist) <= AllowedSet::kTolerance && std::abs(v - 0.5) < std::abs(best - 0.5)) {
      best = v;
      best_dist = std::min(best_dist, d);
    }
  }
  return best;
}

}  // namespace lmgame
