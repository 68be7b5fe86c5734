// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "preflab/policy.hpp"

namespace preflab {

struct ArConfig {
  int vocab_size = 16;
  int embed_dim = 8;
  int hidden_dim = 16;
  int max_seq_len = 32;           // prompt + response token budget
  bool separate_reward_head = false;
  std::uint64_t init_seed = 0;
  double init_std = 0.1;
};

// Token-level recurrent policy: embedding table, one tanh hidden transform,
// linear output projection. Small enough that a recorded forward pass plus a
// reverse sweep gives exact gradients in microseconds.
//
//   h_t = tanh(Wx e(t) + Wh h_{t-1} + bh),   logits_t = Wo h_t + bo
//
// The input stream is [BOS, prompt tokens, response tokens]; the sequence
// log-probability sums log softmax(logits) at each response position. With
// separate_reward_head the student reward is a linear read-out of the final
// hidden state instead of the log-probability.
class AutoregressivePolicy final : public Policy {
 public:
  explicit AutoregressivePolicy(const ArConfig& cfg);

  const ArConfig& config() const { return cfg_; }

  std::string_view backend() const override { return "autoregressive"; }
  std::span<double> params() override { return params_; }
  std::span<const double> params() const override { return params_; }
  std::vector<ParamBlock> param_blocks() const override;
  double log_prob(const Prompt& x, const Response& y) const override;
  void add_log_prob_grad(const Prompt& x, const Response& y, double weight,
                         std::span<double> grad) const override;
  double student_reward(const Prompt& x, const Response& y) const override;
  void add_student_reward_grad(const Prompt& x, const Response& y, double weight,
                               std::span<double> grad) const override;
  Response sample(const Prompt& x, const SampleConfig& cfg) const override;
  std::unique_ptr<Policy> clone() const override;

  // Next-token log-distribution given a consumed stream; used by tests to
  // verify per-step normalization.
  std::vector<double> next_token_logits(std::span<const int> stream) const;

 private:
  struct Tape;  // forward records for the reverse sweep

  std::vector<int> input_stream(const Prompt& x, const Response& y) const;
  void forward(std::span<const int> stream, std::size_t score_from, bool want_head,
               Tape& tape) const;
  void backward(const Tape& tape, double logp_weight, double head_weight,
                std::span<double> grad) const;

  // Parameter block offsets into params_.
  std::size_t emb_off() const { return 0; }
  std::size_t wx_off() const;
  std::size_t wh_off() const;
  std::size_t bh_off() const;
  std::size_t wo_off() const;
  std::size_t bo_off() const;
  std::size_t head_w_off() const;
  std::size_t head_b_off() const;

  ArConfig cfg_;
  std::vector<double> params_;
};

// Presents an autoregressive policy with a reward head as a reward model:
// the head output is the score, the sequence likelihood is the LM view.
class ArRewardModel final : public RewardModel {
 public:
  explicit ArRewardModel(const ArConfig& cfg);

  AutoregressivePolicy& net() { return net_; }
  const AutoregressivePolicy& net() const { return net_; }

  std::string_view backend() const override { return "autoregressive"; }
  std::span<double> params() override { return net_.params(); }
  std::span<const double> params() const override { return net_.params(); }
  std::vector<ParamBlock> param_blocks() const override { return net_.param_blocks(); }
  double reward(const Prompt& x, const Response& y) const override {
    return net_.student_reward(x, y);
  }
  double lm_log_prob(const Prompt& x, const Response& y) const override {
    return net_.log_prob(x, y);
  }
  void add_reward_grad(const Prompt& x, const Response& y, double weight,
                       std::span<double> grad) const override {
    net_.add_student_reward_grad(x, y, weight, grad);
  }
  void add_lm_log_prob_grad(const Prompt& x, const Response& y, double weight,
                            std::span<double> grad) const override {
    net_.add_log_prob_grad(x, y, weight, grad);
  }
  std::unique_ptr<RewardModel> clone_model() const override {
    return std::make_unique<ArRewardModel>(*this);
  }

 private:
  AutoregressivePolicy net_;
};

}  // namespace preflab
