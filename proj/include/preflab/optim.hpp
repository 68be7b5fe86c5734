// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace preflab {

// Linear warmup from zero followed by cosine decay to zero. The schedule is a
// pure function of the step index: lr(0) = 0 whenever warmup_steps > 0, and
// lr(total_steps) = 0 exactly.
struct LrSchedule {
  double base_lr = 0.0;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  double at(std::size_t step) const;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: applied to params, not to moments
};

class AdamW {
 public:
  AdamW(std::size_t num_params, const AdamWConfig& cfg);

  // theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
  void step(std::span<double> params, std::span<const double> grads, double lr);

  std::size_t steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace preflab
