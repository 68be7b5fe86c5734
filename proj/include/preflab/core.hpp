// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace preflab {

struct Prompt {
  int id = 0;
  std::vector<int> tokens;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

struct Response {
  std::vector<int> tokens;

  friend bool operator==(const Response&, const Response&) = default;
};

struct PreferencePair {
  Prompt prompt;
  Response chosen;
  Response rejected;
  std::optional<double> confidence;        // annotator-style score in [1, 9]
  std::optional<double> true_reward_gap;   // r(chosen) - r(rejected) when known
  std::map<std::string, std::string> meta;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

struct PreferenceDataset {
  std::string name;
  std::vector<PreferencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Per-pair teacher rewards aligned with a dataset's pair order.
struct RewardSnapshot {
  std::vector<double> chosen;
  std::vector<double> rejected;

  std::size_t size() const { return chosen.size(); }
};

inline constexpr double kDefaultNdEpsilon = 0.05;
inline constexpr double kConfidenceMin = 1.0;
inline constexpr double kConfidenceMax = 9.0;

// Overflow-safe logistic sigmoid.
double stable_sigmoid(double x);

// log(sigmoid(x)) without forming the sigmoid; safe for |x| ~ 1e4.
double log_sigmoid(double x);

// Inverse sigmoid. p must lie strictly inside (0, 1).
double logit(double p);

// log(1 - e^z) for z < 0. For z near 0 the complement collapses; callers are
// expected to guard z == 0 themselves (the result would be -inf).
double log1mexp(double z);

// Probability that the first response is preferred given scalar rewards,
// under a logistic comparison model.
double bt_probability(double reward_first, double reward_second);

enum class PairKind { Deterministic, NonDeterministic };

// A pair is non-deterministic when its preference probability is within
// epsilon of a coin flip.
PairKind classify_pair(double preference_probability, double epsilon = kDefaultNdEpsilon);

// Levenshtein distance over token sequences (insert/delete/substitute, unit cost).
std::size_t edit_distance(std::span<const int> a, std::span<const int> b);

// Levenshtein distance divided by the longer length. Both inputs must be
// non-empty; the result lies in [0, 1].
double normalized_edit_distance(const Response& a, const Response& b);

}  // namespace preflab
