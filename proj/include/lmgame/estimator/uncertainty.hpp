#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lmgame/core/error.hpp"

namespace lmgame {

inline double mean_of(std::span<const double> v) {
  if (v.empty()) fail(ErrorKind::data, "mean of an empty list");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1 denominator).
inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) fail(ErrorKind::data, "standard deviation needs at least two values");
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct Bounds {
  double sigma = 0.0;  // standard error of the mean loss, nats
  double lower = 0.0;  // exp(L - 2 sigma)
  double upper = 0.0;  // exp(L + 2 sigma)
};

// Perplexity interval from per-prompt losses: sigma is the standard error sd / sqrt(N).
inline Bounds uncertainty_bounds(std::span<const double> per_prompt_losses) {
  if (per_prompt_losses.size() < 2) fail(ErrorKind::data, "uncertainty bounds need at least two prompts");
  const double loss = mean_of(per_prompt_losses);
  const double sigma = sample_sd(per_prompt_losses) / std::sqrt(static_cast<double>(per_prompt_losses.size()));
  return {sigma, std::exp(loss - 2.0 * sigma), std::exp(loss + 2.0 * sigma)};
}

// Linear-interpolation quantile on a copy of the data (same rule as numpy's default).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) fail(ErrorKind::data, "quantile of an empty list");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

}  // namespace lmgame
