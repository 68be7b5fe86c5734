// SPDX-License-Identifier: Apache-2.0
#include "preflab/optim.hpp"

#include <cmath>
#include <numbers>

#include "preflab/errors.hpp"

namespace preflab {

double LrSchedule::at(std::size_t step) const {
  if (warmup_steps > total_steps) {
    throw InvalidArgument("LrSchedule: warmup_steps exceeds total_steps");
  }
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (step >= total_steps) return 0.0;
  std::size_t span = total_steps - warmup_steps;
  double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::size_t num_params, const AdamWConfig& cfg)
    : cfg_(cfg), m_(num_params, 0.0), v_(num_params, 0.0) {
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw InvalidArgument("AdamW: betas must lie in [0, 1)");
  }
  if (!(cfg.eps > 0.0)) throw InvalidArgument("AdamW: eps must be positive");
  if (cfg.weight_decay < 0.0) throw InvalidArgument("AdamW: weight_decay must be >= 0");
}

void AdamW::step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw InvalidArgument("AdamW: parameter/gradient size mismatch");
  }
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
    double m_hat = m_[i] / bc1;
    double v_hat = v_[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * params[i]);
  }
}

}  // namespace preflab
