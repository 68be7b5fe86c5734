// SPDX-License-Identifier: Apache-2.0
#include "preflab/core.hpp"

#include <algorithm>
#include <cmath>

#include "preflab/errors.hpp"

namespace preflab {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0.0) {
    return -std::log1p(std::exp(-x));
  }
  return x - std::log1p(std::exp(x));
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidArgument("logit: p must lie in (0, 1), got " + std::to_string(p));
  }
  return std::log(p / (1.0 - p));
}

double log1mexp(double z) {
  if (z >= 0.0) {
    throw InvalidArgument("log1mexp: argument must be negative, got " + std::to_string(z));
  }
  // Branch point at log(1/2) keeps both forms well conditioned.
  if (z < -0.6931471805599453) {
    return std::log1p(-std::exp(z));
  }
  return std::log(-std::expm1(z));
}

double bt_probability(double reward_first, double reward_second) {
  if (!std::isfinite(reward_first) || !std::isfinite(reward_second)) {
    throw InvalidArgument("bt_probability: rewards must be finite");
  }
  return stable_sigmoid(reward_first - reward_second);
}

PairKind classify_pair(double preference_probability, double epsilon) {
  if (!(preference_probability > 0.0 && preference_probability < 1.0)) {
    throw InvalidArgument("classify_pair: probability must lie in (0, 1)");
  }
  if (!(epsilon >= 0.0 && epsilon < 0.5)) {
    throw InvalidArgument("classify_pair: epsilon must lie in [0, 0.5)");
  }
  return std::abs(preference_probability - 0.5) <= epsilon ? PairKind::NonDeterministic
                                                           : PairKind::Deterministic;
}

std::size_t edit_distance(std::span<const int> a, std::span<const int> b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n == 0) return m;
  if (m == 0) return n;
  // Two-row dynamic program.
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double normalized_edit_distance(const Response& a, const Response& b) {
  if (a.tokens.empty() || b.tokens.empty()) {
    throw InvalidArgument("normalized_edit_distance: responses must be non-empty");
  }
  std::size_t d = edit_distance(a.tokens, b.tokens);
  std::size_t denom = std::max(a.tokens.size(), b.tokens.size());
  return static_cast<double>(d) / static_cast<double>(denom);
}

}  // namespace preflab
