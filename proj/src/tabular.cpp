// SPDX-License-Identifier: Apache-2.0
#include "preflab/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "preflab/errors.hpp"
#include "preflab/rng.hpp"

namespace preflab {

namespace {

std::vector<std::size_t> build_offsets(const std::vector<std::vector<Response>>& catalogs) {
  if (catalogs.empty()) {
    throw InvalidArgument("tabular backend: need at least one prompt catalog");
  }
  std::vector<std::size_t> offsets(catalogs.size());
  std::size_t total = 0;
  for (std::size_t p = 0; p < catalogs.size(); ++p) {
    if (catalogs[p].size() < 2) {
      throw InvalidArgument("tabular backend: catalog for prompt " + std::to_string(p) +
                            " needs at least 2 responses");
    }
    offsets[p] = total;
    total += catalogs[p].size();
  }
  return offsets;
}

std::size_t find_response(const std::vector<Response>& catalog, const Response& y,
                          std::size_t prompt_id) {
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (catalog[i] == y) return i;
  }
  throw InvalidArgument("tabular backend: response not in catalog of prompt " +
                        std::to_string(prompt_id));
}

}  // namespace

double log_sum_exp(std::span<const double> v) {
  double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw InvalidArgument("softmax: temperature must be positive");
  }
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& x : scaled) x /= temperature;
  double lse = log_sum_exp(scaled);
  for (double& x : scaled) x = std::exp(x - lse);
  return scaled;
}

std::size_t sample_index(std::span<const double> logits, const SampleConfig& cfg, Rng& rng) {
  if (cfg.greedy) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    return best;
  }
  if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) {
    throw InvalidArgument("sample_index: top_p must lie in (0, 1]");
  }
  std::vector<double> probs = softmax(logits, cfg.temperature);
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::size_t keep = order.size();
  double mass = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    mass += probs[order[k]];
    if (mass >= cfg.top_p) {
      keep = k + 1;
      break;
    }
  }
  double u = rng.uniform() * mass;
  double acc = 0.0;
  for (std::size_t k = 0; k < keep; ++k) {
    acc += probs[order[k]];
    if (u < acc) return order[k];
  }
  return order[keep - 1];
}

TabularPolicy::TabularPolicy(std::vector<std::vector<Response>> catalogs)
    : catalogs_(std::move(catalogs)), offsets_(build_offsets(catalogs_)) {
  params_.assign(offsets_.back() + catalogs_.back().size(), 0.0);
}

void TabularPolicy::check_prompt(const Prompt& x) const {
  if (x.id < 0 || static_cast<std::size_t>(x.id) >= catalogs_.size()) {
    throw InvalidArgument("tabular backend: unknown prompt id " + std::to_string(x.id));
  }
}

std::size_t TabularPolicy::response_index(const Prompt& x, const Response& y) const {
  check_prompt(x);
  return find_response(catalogs_[x.id], y, static_cast<std::size_t>(x.id));
}

double TabularPolicy::logit_at(std::size_t prompt_id, std::size_t index) const {
  return params_[offsets_[prompt_id] + index];
}

void TabularPolicy::set_logit(std::size_t prompt_id, std::size_t index, double value) {
  params_[offsets_[prompt_id] + index] = value;
}

std::vector<double> TabularPolicy::probabilities(std::size_t prompt_id) const {
  std::span<const double> row(params_.data() + offsets_[prompt_id], catalogs_[prompt_id].size());
  return softmax(row);
}

std::vector<ParamBlock> TabularPolicy::param_blocks() const {
  std::vector<ParamBlock> blocks;
  blocks.reserve(catalogs_.size());
  for (std::size_t p = 0; p < catalogs_.size(); ++p) {
    blocks.push_back({"logits[" + std::to_string(p) + "]", offsets_[p], catalogs_[p].size()});
  }
  return blocks;
}

double TabularPolicy::log_prob(const Prompt& x, const Response& y) const {
  std::size_t idx = response_index(x, y);
  std::span<const double> row(params_.data() + offsets_[x.id], catalogs_[x.id].size());
  return row[idx] - log_sum_exp(row);
}

void TabularPolicy::add_log_prob_grad(const Prompt& x, const Response& y, double weight,
                                      std::span<double> grad) const {
  std::size_t idx = response_index(x, y);
  std::size_t off = offsets_[x.id];
  std::span<const double> row(params_.data() + off, catalogs_[x.id].size());
  std::vector<double> p = softmax(row);
  for (std::size_t j = 0; j < p.size(); ++j) {
    grad[off + j] += weight * ((j == idx ? 1.0 : 0.0) - p[j]);
  }
}

Response TabularPolicy::sample(const Prompt& x, const SampleConfig& cfg) const {
  check_prompt(x);
  std::span<const double> row(params_.data() + offsets_[x.id], catalogs_[x.id].size());
  Rng rng(cfg.seed);
  std::size_t idx = sample_index(row, cfg, rng);
  return catalogs_[x.id][idx];
}

std::unique_ptr<Policy> TabularPolicy::clone() const {
  return std::make_unique<TabularPolicy>(*this);
}

TabularRewardModel::TabularRewardModel(std::vector<std::vector<Response>> catalogs)
    : catalogs_(std::move(catalogs)), offsets_(build_offsets(catalogs_)) {
  params_.assign(offsets_.back() + catalogs_.back().size(), 0.0);
}

void TabularRewardModel::check_prompt(const Prompt& x) const {
  if (x.id < 0 || static_cast<std::size_t>(x.id) >= catalogs_.size()) {
    throw InvalidArgument("tabular backend: unknown prompt id " + std::to_string(x.id));
  }
}

std::size_t TabularRewardModel::response_index(const Prompt& x, const Response& y) const {
  check_prompt(x);
  return find_response(catalogs_[x.id], y, static_cast<std::size_t>(x.id));
}

std::vector<ParamBlock> TabularRewardModel::param_blocks() const {
  std::vector<ParamBlock> blocks;
  blocks.reserve(catalogs_.size());
  for (std::size_t p = 0; p < catalogs_.size(); ++p) {
    blocks.push_back({"rewards[" + std::to_string(p) + "]", offsets_[p], catalogs_[p].size()});
  }
  return blocks;
}

double TabularRewardModel::reward(const Prompt& x, const Response& y) const {
  return params_[offsets_[x.id] + response_index(x, y)];
}

double TabularRewardModel::lm_log_prob(const Prompt& x, const Response& y) const {
  std::size_t idx = response_index(x, y);
  std::span<const double> row(params_.data() + offsets_[x.id], catalogs_[x.id].size());
  return row[idx] - log_sum_exp(row);
}

void TabularRewardModel::add_reward_grad(const Prompt& x, const Response& y, double weight,
                                         std::span<double> grad) const {
  grad[offsets_[x.id] + response_index(x, y)] += weight;
}

void TabularRewardModel::add_lm_log_prob_grad(const Prompt& x, const Response& y, double weight,
                                              std::span<double> grad) const {
  std::size_t idx = response_index(x, y);
  std::size_t off = offsets_[x.id];
  std::span<const double> row(params_.data() + off, catalogs_[x.id].size());
  std::vector<double> p = softmax(row);
  for (std::size_t j = 0; j < p.size(); ++j) {
    grad[off + j] += weight * ((j == idx ? 1.0 : 0.0) - p[j]);
  }
}

std::unique_ptr<RewardModel> TabularRewardModel::clone_model() const {
  return std::make_unique<TabularRewardModel>(*this);
}

}  // namespace preflab
