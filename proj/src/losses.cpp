// SPDX-License-Identifier: Apache-2.0
#include "preflab/losses.hpp"

#include <cmath>
#include <numeric>

#include "preflab/errors.hpp"

namespace preflab {

namespace {

void check_batch(const PreferenceDataset& ds, Batch batch) {
  if (batch.empty()) throw InvalidArgument("loss: batch must be non-empty");
  for (std::size_t i : batch) {
    if (i >= ds.pairs.size()) {
      throw InvalidArgument("loss: batch index " + std::to_string(i) + " out of range");
    }
  }
}

void check_snapshot(const RewardSnapshot& snap, const PreferenceDataset& ds, const char* what) {
  if (snap.chosen.size() != ds.pairs.size() || snap.rejected.size() != ds.pairs.size()) {
    throw InvalidArgument(std::string("loss: ") + what + " snapshot size " +
                          std::to_string(snap.chosen.size()) + " does not match dataset size " +
                          std::to_string(ds.pairs.size()));
  }
}

void check_finite(double v, const char* what, std::size_t pair_index) {
  if (!std::isfinite(v)) {
    throw NumericalFailure(std::string("loss: non-finite ") + what, pair_index);
  }
}

// pi_l / (1 - pi_l) evaluated from z_l = log pi_l without forming 1 - pi_l
// through subtraction.
double complement_odds(double z_l) {
  return std::exp(z_l) / (-std::expm1(z_l));
}

}  // namespace

LossType parse_loss_type(std::string_view id) {
  if (id == "sft") return LossType::Sft;
  if (id == "rm") return LossType::Rm;
  if (id == "oracle") return LossType::Oracle;
  if (id == "dpo") return LossType::Dpo;
  if (id == "edpo") return LossType::Edpo;
  if (id == "drdo") return LossType::Drdo;
  throw InvalidArgument("unknown loss identifier '" + std::string(id) +
                        "' (expected sft|rm|oracle|dpo|edpo|drdo)");
}

std::string_view to_string(LossType t) {
  switch (t) {
    case LossType::Sft: return "sft";
    case LossType::Rm: return "rm";
    case LossType::Oracle: return "oracle";
    case LossType::Dpo: return "dpo";
    case LossType::Edpo: return "edpo";
    case LossType::Drdo: return "drdo";
  }
  return "?";
}

RewardSnapshot make_reward_snapshot(const RewardSource& oracle, const PreferenceDataset& ds) {
  RewardSnapshot snap;
  snap.chosen.reserve(ds.pairs.size());
  snap.rejected.reserve(ds.pairs.size());
  for (const PreferencePair& pair : ds.pairs) {
    snap.chosen.push_back(oracle.reward(pair.prompt, pair.chosen));
    snap.rejected.push_back(oracle.reward(pair.prompt, pair.rejected));
  }
  return snap;
}

std::vector<std::size_t> all_indices(const PreferenceDataset& ds) {
  std::vector<std::size_t> idx(ds.pairs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

double focal_coefficient(double p_w, double gamma) {
  if (!(p_w >= 0.0 && p_w <= 1.0)) {
    throw InvalidArgument("focal_coefficient: p_w must lie in [0, 1]");
  }
  if (gamma < 0.0) throw InvalidArgument("focal_coefficient: gamma must be >= 0");
  return std::pow(1.0 - p_w, gamma);
}

double preference_confidence(double z_w, double z_l) { return stable_sigmoid(z_w - z_l); }

LossEvaluation sft_loss(const Policy& policy, const PreferenceDataset& ds, Batch batch) {
  check_batch(ds, batch);
  LossEvaluation out;
  out.gradient.assign(policy.num_params(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    const PreferencePair& pair = ds.pairs[i];
    double z_w = policy.log_prob(pair.prompt, pair.chosen);
    check_finite(z_w, "chosen log-probability", i);
    out.value -= inv_n * z_w;
    policy.add_log_prob_grad(pair.prompt, pair.chosen, -inv_n, out.gradient);
  }
  return out;
}

LossEvaluation rm_loss(const RewardModel& model, const PreferenceDataset& ds, Batch batch) {
  check_batch(ds, batch);
  LossEvaluation out;
  out.gradient.assign(model.num_params(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    const PreferencePair& pair = ds.pairs[i];
    double r_w = model.reward(pair.prompt, pair.chosen);
    double r_l = model.reward(pair.prompt, pair.rejected);
    check_finite(r_w - r_l, "reward gap", i);
    out.value -= inv_n * log_sigmoid(r_w - r_l);
    double w = -stable_sigmoid(r_l - r_w) * inv_n;  // d(-log sigma)/dr_w
    model.add_reward_grad(pair.prompt, pair.chosen, w, out.gradient);
    model.add_reward_grad(pair.prompt, pair.rejected, -w, out.gradient);
  }
  return out;
}

LossEvaluation oracle_loss(const RewardModel& model, const PreferenceDataset& ds, Batch batch,
                           const OracleConfig& cfg) {
  check_batch(ds, batch);
  if (!(cfg.alpha_sft >= 0.0 && cfg.alpha_sft <= 1.0)) {
    throw InvalidArgument("oracle_loss: alpha_sft must lie in [0, 1]");
  }
  LossEvaluation out;
  out.gradient.assign(model.num_params(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double a = cfg.alpha_sft;
  for (std::size_t i : batch) {
    const PreferencePair& pair = ds.pairs[i];
    double r_w = model.reward(pair.prompt, pair.chosen);
    double r_l = model.reward(pair.prompt, pair.rejected);
    double lm_w = model.lm_log_prob(pair.prompt, pair.chosen);
    check_finite(r_w - r_l, "reward gap", i);
    check_finite(lm_w, "chosen LM log-probability", i);
    out.value -= inv_n * ((1.0 - a) * log_sigmoid(r_w - r_l) + a * lm_w);
    double w = -(1.0 - a) * stable_sigmoid(r_l - r_w) * inv_n;
    model.add_reward_grad(pair.prompt, pair.chosen, w, out.gradient);
    model.add_reward_grad(pair.prompt, pair.rejected, -w, out.gradient);
    model.add_lm_log_prob_grad(pair.prompt, pair.chosen, -a * inv_n, out.gradient);
  }
  return out;
}

LossEvaluation dpo_loss(const Policy& policy, const Policy& reference, const PreferenceDataset& ds,
                        Batch batch, const DpoConfig& cfg) {
  check_batch(ds, batch);
  if (!(cfg.beta > 0.0)) throw InvalidArgument("dpo_loss: beta must be positive");
  LossEvaluation out;
  out.gradient.assign(policy.num_params(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    const PreferencePair& pair = ds.pairs[i];
    double z_w = policy.log_prob(pair.prompt, pair.chosen);
    double z_l = policy.log_prob(pair.prompt, pair.rejected);
    double zr_w = reference.log_prob(pair.prompt, pair.chosen);
    double zr_l = reference.log_prob(pair.prompt, pair.rejected);
    double u = cfg.beta * ((z_w - zr_w) - (z_l - zr_l));
    check_finite(u, "implicit reward gap", i);
    out.value -= inv_n * log_sigmoid(u);
    double w = -stable_sigmoid(-u) * cfg.beta * inv_n;  // dL/dz_w
    policy.add_log_prob_grad(pair.prompt, pair.chosen, w, out.gradient);
    policy.add_log_prob_grad(pair.prompt, pair.rejected, -w, out.gradient);
  }
  return out;
}

LossEvaluation edpo_loss(const Policy& policy, const Policy& reference, const PreferenceDataset& ds,
                         Batch batch, std::span<const RewardSnapshot> ensemble, double beta) {
  check_batch(ds, batch);
  if (!(beta > 0.0)) throw InvalidArgument("edpo_loss: beta must be positive");
  if (ensemble.empty()) throw InvalidArgument("edpo_loss: ensemble must be non-empty");
  for (const RewardSnapshot& snap : ensemble) check_snapshot(snap, ds, "ensemble");
  LossEvaluation out;
  out.gradient.assign(policy.num_params(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double inv_k = 1.0 / static_cast<double>(ensemble.size());
  for (std::size_t i : batch) {
    const PreferencePair& pair = ds.pairs[i];
    double z_w = policy.log_prob(pair.prompt, pair.chosen);
    double z_l = policy.log_prob(pair.prompt, pair.rejected);
    double zr_w = reference.log_prob(pair.prompt, pair.chosen);
    double zr_l = reference.log_prob(pair.prompt, pair.rejected);
    double u = beta * ((z_w - zr_w) - (z_l - zr_l));
    check_finite(u, "implicit reward gap", i);
    double du_acc = 0.0;
    for (const RewardSnapshot& snap : ensemble) {
      double residual = (snap.chosen[i] - snap.rejected[i]) - u;
      check_finite(residual, "ensemble residual", i);
      out.value += inv_n * inv_k * residual * residual;
      du_acc += inv_n * inv_k * 2.0 * residual * (-1.0);
    }
    double w = du_acc * beta;  // dL/dz_w
    policy.add_log_prob_grad(pair.prompt, pair.chosen, w, out.gradient);
    policy.add_log_prob_grad(pair.prompt, pair.rejected, -w, out.gradient);
  }
  return out;
}

namespace {

// Shared by drdo_loss and drdo_preference_term: accumulates the focal
// contrastive term  -alpha (1-p_w)^gamma log(pi_w / (1 - pi_l))  for one pair.
void add_drdo_preference(const Policy& policy, const PreferencePair& pair, std::size_t pair_index,
                         double inv_n, const DrdoConfig& cfg, LossEvaluation& out) {
  double z_w = policy.log_prob(pair.prompt, pair.chosen);
  double z_l = policy.log_prob(pair.prompt, pair.rejected);
  check_finite(z_w, "chosen log-probability", pair_index);
  check_finite(z_l, "rejected log-probability", pair_index);
  if (z_l >= 0.0) {
    throw NumericalFailure("drdo: rejected response has probability 1, log complement undefined",
                           pair_index);
  }
  double p_w = preference_confidence(z_w, z_l);
  double focal = focal_coefficient(p_w, cfg.gamma);
  double log_odds = z_w - log1mexp(z_l);
  check_finite(log_odds, "contrastive log-odds", pair_index);
  out.value -= inv_n * cfg.alpha * focal * log_odds;
  // d focal / d z_w = -gamma p_w focal (and +gamma p_w focal for z_l).
  double dfocal = cfg.gamma * p_w * focal;
  double w_zw = -cfg.alpha * inv_n * (-dfocal * log_odds + focal);
  double w_zl = -cfg.alpha * inv_n * (dfocal * log_odds + focal * complement_odds(z_l));
  policy.add_log_prob_grad(pair.prompt, pair.chosen, w_zw, out.gradient);
  policy.add_log_prob_grad(pair.prompt, pair.rejected, w_zl, out.gradient);
}

}  // namespace

LossEvaluation drdo_loss(const Policy& policy, const PreferenceDataset& ds, Batch batch,
                         const RewardSnapshot& oracle, const DrdoConfig& cfg) {
  check_batch(ds, batch);
  check_snapshot(oracle, ds, "oracle");
  if (cfg.alpha < 0.0) throw InvalidArgument("drdo_loss: alpha must be >= 0");
  if (cfg.gamma < 0.0) throw InvalidArgument("drdo_loss: gamma must be >= 0");
  LossEvaluation out;
  out.gradient.assign(policy.num_params(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    const PreferencePair& pair = ds.pairs[i];
    double rhat_w = policy.student_reward(pair.prompt, pair.chosen);
    double rhat_l = policy.student_reward(pair.prompt, pair.rejected);
    double gap = oracle.chosen[i] - oracle.rejected[i];
    double residual = gap - (rhat_w - rhat_l);
    check_finite(residual, "distillation residual", i);
    out.value += inv_n * residual * residual;
    double w = inv_n * 2.0 * residual * (-1.0);  // d residual^2 / d rhat_w
    policy.add_student_reward_grad(pair.prompt, pair.chosen, w, out.gradient);
    policy.add_student_reward_grad(pair.prompt, pair.rejected, -w, out.gradient);
    if (cfg.alpha != 0.0) {
      add_drdo_preference(policy, pair, i, inv_n, cfg, out);
    }
  }
  return out;
}

LossEvaluation drdo_preference_term(const Policy& policy, const PreferenceDataset& ds, Batch batch,
                                    const DrdoConfig& cfg) {
  check_batch(ds, batch);
  if (cfg.alpha < 0.0) throw InvalidArgument("drdo_preference_term: alpha must be >= 0");
  if (cfg.gamma < 0.0) throw InvalidArgument("drdo_preference_term: gamma must be >= 0");
  LossEvaluation out;
  out.gradient.assign(policy.num_params(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    add_drdo_preference(policy, ds.pairs[i], i, inv_n, cfg, out);
  }
  return out;
}

}  // namespace preflab
