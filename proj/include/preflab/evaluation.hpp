// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "preflab/core.hpp"
#include "preflab/losses.hpp"
#include "preflab/policy.hpp"
#include "preflab/synthworld.hpp"

namespace preflab {

struct WinRateResult {
  double win_rate = 0.0;  // fraction of prompts the first policy wins; ties count half
  double wins = 0.0;
  double ties = 0.0;
  double losses = 0.0;
  struct Row {
    int prompt_id;
    double reward_a;
    double reward_b;
  };
  std::vector<Row> rows;
};

// One sampled response per policy per prompt, judged by the reward source.
// Both policies draw with the same per-prompt derived seed, so a policy
// compared against itself ties on every prompt.
WinRateResult win_rate(const Policy& a, const Policy& b, const RewardSource& judge,
                       const std::vector<Prompt>& prompts, double temperature, double top_p,
                       std::uint64_t seed);

struct AdvantageResult {
  double mean_advantage = 0.0;  // in standardized reward units
  struct Row {
    int prompt_id;
    double reward_policy;
    double reward_baseline;
    double advantage;
  };
  std::vector<Row> rows;
};

// Rewards of both response sets are pooled and standardized to zero mean and
// unit variance before differencing; a zero-variance pool yields advantage 0.
AdvantageResult reward_advantage_fixed(const std::vector<Response>& responses,
                                       const std::vector<Response>& baseline,
                                       const RewardSource& judge,
                                       const std::vector<Prompt>& prompts);

// Sampling wrapper: draws one response per prompt from the policy (per-prompt
// derived seeds), then scores against the fixed baseline.
AdvantageResult reward_advantage(const Policy& policy, const std::vector<Response>& baseline,
                                 const RewardSource& judge, const std::vector<Prompt>& prompts,
                                 const SampleConfig& sample_cfg);

// Fraction of pairs whose implicit reward gap beta (log-ratio difference to
// the reference) is positive; exact ties count half. Invariant under beta.
double implicit_reward_accuracy(const Policy& policy, const Policy& reference,
                                const PreferenceDataset& ds, double beta);

struct DpoPairStats {
  double implicit_gap = 0.0;     // beta-scaled log-ratio difference
  double sigmoid_weight = 0.0;   // sigma(-implicit_gap): per-pair gradient scale
};

DpoPairStats dpo_pair_stats(const Policy& policy, const Policy& reference,
                            const PreferencePair& pair, double beta);

// Per-pair loss evaluation restricted to one dataset index; lets the probe
// measure gradient signal pair by pair for whichever objective is active.
using PairLossFn = std::function<LossEvaluation(std::size_t pair_index)>;

struct DegeneracyReport {
  struct PromptRow {
    int prompt_id;
    double dispreferred_mass;  // total policy mass on responses seen as rejected
    double complement_mass;    // mass on the rest of the catalog
  };
  std::vector<PromptRow> prompts;
  double max_implicit_gap = 0.0;
  double grad_norm_nd = 0.0;   // mean per-pair gradient norm over near-tie pairs
  double grad_norm_det = 0.0;  // same over decided pairs
  std::size_t nd_count = 0;
  std::size_t det_count = 0;
};

// Exact catalog-mass accounting; tabular policies only. With a reference the
// implicit gap is the beta-scaled log-ratio difference, otherwise the
// student-reward gap. Pairs are classed near-tie vs decided from their
// recorded true reward gap.
DegeneracyReport degeneracy_probe(const Policy& policy, const Policy* reference,
                                  const PreferenceDataset& ds, const World& world, double beta,
                                  const PairLossFn& per_pair_loss = {},
                                  double nd_epsilon = kDefaultNdEpsilon);

struct NamedWinRate {
  std::string policy_a;
  std::string policy_b;
  WinRateResult result;
};

// Header: policy_a,policy_b,win_rate,wins,ties,losses,n_prompts
void write_win_rate_csv(const std::vector<NamedWinRate>& rows, const std::filesystem::path& path);
// Header: prompt_id,reward_policy,reward_baseline,advantage
void write_advantage_csv(const AdvantageResult& result, const std::filesystem::path& path);
// Header: prompt_id,dispreferred_mass,complement_mass
void write_degeneracy_csv(const DegeneracyReport& report, const std::filesystem::path& path);

}  // namespace preflab
