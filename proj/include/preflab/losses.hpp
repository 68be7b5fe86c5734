// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "preflab/core.hpp"
#include "preflab/policy.hpp"

namespace preflab {

// Mean per-pair loss over a batch plus its gradient with respect to the
// trained model's flat parameter vector.
struct LossEvaluation {
  double value = 0.0;
  std::vector<double> gradient;
};

enum class LossType { Sft, Rm, Oracle, Dpo, Edpo, Drdo };

LossType parse_loss_type(std::string_view id);
std::string_view to_string(LossType t);

struct DpoConfig {
  double beta = 0.1;
};

struct DrdoConfig {
  double alpha = 0.1;  // weight of the contrastive term
  double gamma = 2.0;  // focal exponent
};

struct OracleConfig {
  double alpha_sft = 0.01;  // weight of the likelihood regularizer
};

RewardSnapshot make_reward_snapshot(const RewardSource& oracle, const PreferenceDataset& ds);

// Batches are index lists into a dataset (and into any aligned snapshot).
using Batch = std::span<const std::size_t>;

std::vector<std::size_t> all_indices(const PreferenceDataset& ds);

// (1 - p)^gamma; the soft down-weighting of confident pairs. (p=1, gamma=0)
// follows the pow convention and yields 1.
double focal_coefficient(double p_w, double gamma);

// sigma(z_w - z_l): the policy's own belief that the chosen response wins.
double preference_confidence(double z_w, double z_l);

// Negative mean log-likelihood of the chosen responses.
LossEvaluation sft_loss(const Policy& policy, const PreferenceDataset& ds, Batch batch);

// Pairwise logistic ranking loss on model rewards.
LossEvaluation rm_loss(const RewardModel& model, const PreferenceDataset& ds, Batch batch);

// Ranking loss blended with a chosen-sequence likelihood term:
//   -mean[(1 - a) log sigma(r_w - r_l) + a log p_lm(y_w | x)]
LossEvaluation oracle_loss(const RewardModel& model, const PreferenceDataset& ds, Batch batch,
                           const OracleConfig& cfg);

// Contrastive policy objective against a frozen reference:
//   -mean log sigma(beta [(z_w - zref_w) - (z_l - zref_l)])
LossEvaluation dpo_loss(const Policy& policy, const Policy& reference, const PreferenceDataset& ds,
                        Batch batch, const DpoConfig& cfg);

// Distillation through the reference-scaled log-ratio: mean over pairs and
// ensemble members of (gap_k - beta * implicit_gap)^2.
LossEvaluation edpo_loss(const Policy& policy, const Policy& reference, const PreferenceDataset& ds,
                         Batch batch, std::span<const RewardSnapshot> ensemble, double beta);

// Reward-difference regression plus a focal-weighted contrastive term:
//   mean[(gap - (rhat_w - rhat_l))^2
//        - alpha (1 - p_w)^gamma log(pi(y_w|x) / (1 - pi(y_l|x)))]
LossEvaluation drdo_loss(const Policy& policy, const PreferenceDataset& ds, Batch batch,
                         const RewardSnapshot& oracle, const DrdoConfig& cfg);

// The contrastive component of drdo_loss alone; used by diagnostics that
// compare its gradient signal across pair classes.
LossEvaluation drdo_preference_term(const Policy& policy, const PreferenceDataset& ds, Batch batch,
                                    const DrdoConfig& cfg);

}  // namespace preflab
