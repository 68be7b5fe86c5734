// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "preflab/core.hpp"

namespace preflab {

struct SampleConfig {
  double temperature = 1.0;
  double top_p = 1.0;            // nucleus mass; 1.0 disables truncation
  std::uint64_t seed = 0;
  bool greedy = false;           // argmax decoding, ties broken toward lower index
  int max_new_tokens = 8;        // autoregressive backend only
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Anything trained by the optimizer: exposes its parameters as one flat
// array plus named blocks for diagnostics.
class ParamModel {
 public:
  virtual ~ParamModel() = default;
  virtual std::span<double> params() = 0;
  virtual std::span<const double> params() const = 0;
  virtual std::vector<ParamBlock> param_blocks() const = 0;
  std::size_t num_params() const { return params().size(); }
};

class Policy : public ParamModel {
 public:
  virtual std::string_view backend() const = 0;
  virtual double log_prob(const Prompt& x, const Response& y) const = 0;
  // Accumulates weight * d log pi(y|x) / d theta into grad.
  virtual void add_log_prob_grad(const Prompt& x, const Response& y, double weight,
                                 std::span<double> grad) const = 0;
  // Student reward view. Defaults to the sequence log-probability; backends
  // with a dedicated scalar head override both members.
  virtual double student_reward(const Prompt& x, const Response& y) const {
    return log_prob(x, y);
  }
  virtual void add_student_reward_grad(const Prompt& x, const Response& y, double weight,
                                       std::span<double> grad) const {
    add_log_prob_grad(x, y, weight, grad);
  }
  virtual Response sample(const Prompt& x, const SampleConfig& cfg) const = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;
};

// Scores arbitrary (prompt, response) pairs. Implemented by trained reward
// models and by the synthetic world's ground-truth table.
class RewardSource {
 public:
  virtual ~RewardSource() = default;
  virtual double reward(const Prompt& x, const Response& y) const = 0;
};

// Trainable reward model: a scalar score plus a language-model view over the
// same parameters, so likelihood-regularized objectives can reach both.
class RewardModel : public ParamModel, public RewardSource {
 public:
  virtual std::string_view backend() const = 0;
  virtual double lm_log_prob(const Prompt& x, const Response& y) const = 0;
  virtual void add_reward_grad(const Prompt& x, const Response& y, double weight,
                               std::span<double> grad) const = 0;
  virtual void add_lm_log_prob_grad(const Prompt& x, const Response& y, double weight,
                                    std::span<double> grad) const = 0;
  virtual std::unique_ptr<RewardModel> clone_model() const = 0;
};

}  // namespace preflab
