// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "preflab/core.hpp"
#include "preflab/losses.hpp"
#include "preflab/policy.hpp"

namespace preflab {

struct MetricRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double bt_accuracy = 0.0;
  double reward_advantage = 0.0;
  double logp_chosen = 0.0;
  double logp_rejected = 0.0;
  double lr = 0.0;
};

// Header: step,loss,bt_accuracy,reward_advantage,logp_chosen,logp_rejected,lr
void write_metrics_csv(std::span<const MetricRecord> metrics, const std::filesystem::path& path);
std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path);

struct TrainConfig {
  LossType loss = LossType::Sft;
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  std::optional<double> learning_rate;  // per-backend default when unset
  std::size_t warmup_steps = 0;
  double weight_decay = 0.05;
  std::size_t eval_every = 50;
  std::uint64_t seed = 0;
  double beta = 0.1;       // dpo / edpo
  DrdoConfig drdo{};       // alpha, gamma
  OracleConfig oracle{};   // alpha_sft
  std::size_t ensemble_size = 3;

  void validate() const;
  double resolved_lr(std::string_view backend) const;  // 0.05 tabular, 1e-3 autoregressive
};

// Everything a loss evaluation needs besides the batch. Snapshots must be
// aligned with the dataset they accompany.
struct ObjectiveData {
  const PreferenceDataset* ds = nullptr;
  const RewardSnapshot* oracle = nullptr;         // drdo
  std::span<const RewardSnapshot> ensemble = {};  // edpo
};

// Binds a loss type to its models and hyperparameters and dispatches both the
// loss evaluation and the ranking score used for accuracy metrics.
class Objective {
 public:
  LossType type = LossType::Sft;
  Policy* policy = nullptr;             // trained model for policy losses
  const Policy* reference = nullptr;    // dpo / edpo
  RewardModel* reward_model = nullptr;  // trained model for rm / oracle
  double beta = 0.1;
  DrdoConfig drdo{};
  OracleConfig oracle_cfg{};

  ParamModel& model() const;
  void validate(const ObjectiveData& data) const;
  LossEvaluation evaluate(const ObjectiveData& data, Batch batch) const;

  // Scalar ranking score per response; the sign of the chosen-minus-rejected
  // difference defines preference accuracy for this objective.
  double ranking_score(const Prompt& x, const Response& y) const;
  // Log-probability view for the metric stream (LM view for reward models).
  double metric_log_prob(const Prompt& x, const Response& y) const;
};

struct EvalContext {
  const PreferenceDataset* eval_ds = nullptr;     // defaults to the training set
  const RewardSnapshot* eval_oracle = nullptr;    // alignment for a custom eval set
  std::span<const RewardSnapshot> eval_ensemble = {};
  const RewardSource* judge = nullptr;  // enables the reward_advantage column
  double eval_temperature = 0.7;
  double eval_top_p = 0.8;
  // Fires after each metric row lands, before the next update.
  std::function<void(std::size_t step, const MetricRecord&)> on_eval;
};

struct RunArtifacts {
  std::vector<MetricRecord> metrics;
  std::string config_echo;  // filled by callers that own the raw config text
  bool aborted = false;     // loss went non-finite; params restored to last good
  std::size_t completed_steps = 0;
  double wall_seconds = 0.0;
};

// Shared loop: derived-seed shuffled batches, AdamW with warmup+cosine decay,
// metric rows every eval_every steps plus a final row, divergence abort that
// restores the last finite-loss parameters.
RunArtifacts run_training(const Objective& objective, const ObjectiveData& train_data,
                          const TrainConfig& cfg, const EvalContext& ctx = {});

RunArtifacts train_sft(Policy& policy, const PreferenceDataset& ds, const TrainConfig& cfg,
                       const EvalContext& ctx = {});
RunArtifacts train_rm(RewardModel& model, const PreferenceDataset& ds, const TrainConfig& cfg,
                      const EvalContext& ctx = {});
RunArtifacts train_oracle(RewardModel& model, const PreferenceDataset& ds, const TrainConfig& cfg,
                          const EvalContext& ctx = {});
RunArtifacts train_dpo(Policy& policy, const Policy& reference, const PreferenceDataset& ds,
                       const TrainConfig& cfg, const EvalContext& ctx = {});
RunArtifacts train_edpo(Policy& policy, const Policy& reference, const PreferenceDataset& ds,
                        std::span<const RewardSnapshot> ensemble, const TrainConfig& cfg,
                        const EvalContext& ctx = {});
RunArtifacts train_drdo(Policy& policy, const PreferenceDataset& ds, const RewardSnapshot& oracle,
                        const TrainConfig& cfg, const EvalContext& ctx = {});

struct EnsembleMember {
  std::unique_ptr<RewardModel> model;
  RunArtifacts artifacts;
};

// Trains k reward models that differ only in their derived seed
// (initialization and batch order). cfg.loss must be rm or oracle.
std::vector<EnsembleMember> train_reward_ensemble(
    const std::function<std::unique_ptr<RewardModel>(std::uint64_t member_seed)>& make_model,
    const PreferenceDataset& ds, const TrainConfig& cfg, std::size_t k);

// Canonical hyperparameter grids for head-to-head comparisons.
std::vector<double> dpo_beta_grid();                             // 0.1, 0.5, 1, 10
std::vector<std::pair<double, double>> drdo_alpha_gamma_grid();  // {0.1,1} x {0,1,2,5}

struct SweepCell {
  std::string label;
  TrainConfig config;
};

std::vector<SweepCell> make_beta_sweep(const TrainConfig& base);
std::vector<SweepCell> make_drdo_sweep(const TrainConfig& base);

}  // namespace preflab
