// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "preflab/policy.hpp"

namespace preflab {

// Softmax policy over a fixed per-prompt response catalog. One logit per
// (prompt, catalog entry); log-probabilities and their gradients are exact,
// which makes this backend the workhorse for optimizer-behavior probes.
class TabularPolicy final : public Policy {
 public:
  // Catalogs indexed by prompt id (0..P-1). Logits start at zero (uniform).
  explicit TabularPolicy(std::vector<std::vector<Response>> catalogs);

  std::size_t num_prompts() const { return catalogs_.size(); }
  std::size_t catalog_size(std::size_t prompt_id) const { return catalogs_[prompt_id].size(); }
  const std::vector<Response>& catalog(std::size_t prompt_id) const { return catalogs_[prompt_id]; }
  const std::vector<std::vector<Response>>& catalogs() const { return catalogs_; }

  // Catalog position of y under prompt x; throws if y is not in the catalog.
  std::size_t response_index(const Prompt& x, const Response& y) const;

  double logit_at(std::size_t prompt_id, std::size_t index) const;
  void set_logit(std::size_t prompt_id, std::size_t index, double value);

  // Exact catalog distribution for one prompt.
  std::vector<double> probabilities(std::size_t prompt_id) const;

  std::string_view backend() const override { return "tabular"; }
  std::span<double> params() override { return params_; }
  std::span<const double> params() const override { return params_; }
  std::vector<ParamBlock> param_blocks() const override;
  double log_prob(const Prompt& x, const Response& y) const override;
  void add_log_prob_grad(const Prompt& x, const Response& y, double weight,
                         std::span<double> grad) const override;
  Response sample(const Prompt& x, const SampleConfig& cfg) const override;
  std::unique_ptr<Policy> clone() const override;

 private:
  std::size_t row_offset(std::size_t prompt_id) const { return offsets_[prompt_id]; }
  void check_prompt(const Prompt& x) const;

  std::vector<std::vector<Response>> catalogs_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Tabular reward model over the same catalogs: the raw table entry is the
// reward and a row-softmax over the table doubles as the language-model view.
class TabularRewardModel final : public RewardModel {
 public:
  explicit TabularRewardModel(std::vector<std::vector<Response>> catalogs);

  std::size_t num_prompts() const { return catalogs_.size(); }
  std::size_t catalog_size(std::size_t prompt_id) const { return catalogs_[prompt_id].size(); }
  const std::vector<std::vector<Response>>& catalogs() const { return catalogs_; }
  std::size_t response_index(const Prompt& x, const Response& y) const;

  std::string_view backend() const override { return "tabular"; }
  std::span<double> params() override { return params_; }
  std::span<const double> params() const override { return params_; }
  std::vector<ParamBlock> param_blocks() const override;
  double reward(const Prompt& x, const Response& y) const override;
  double lm_log_prob(const Prompt& x, const Response& y) const override;
  void add_reward_grad(const Prompt& x, const Response& y, double weight,
                       std::span<double> grad) const override;
  void add_lm_log_prob_grad(const Prompt& x, const Response& y, double weight,
                            std::span<double> grad) const override;
  std::unique_ptr<RewardModel> clone_model() const override;

 private:
  std::size_t row_offset(std::size_t prompt_id) const { return offsets_[prompt_id]; }
  void check_prompt(const Prompt& x) const;

  std::vector<std::vector<Response>> catalogs_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Shared helpers for softmax rows (exported for direct use in tests).
double log_sum_exp(std::span<const double> v);
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

// Draws an index from a categorical distribution after nucleus truncation:
// keep the smallest prefix of probability-sorted entries whose mass reaches
// top_p (ties sorted by index), renormalize, then sample. greedy picks the
// argmax with ties broken toward the lowest index.
std::size_t sample_index(std::span<const double> logits, const SampleConfig& cfg, class Rng& rng);

}  // namespace preflab
