// SPDX-License-Identifier: Apache-2.0
#include "preflab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "preflab/dataio.hpp"
#include "preflab/errors.hpp"
#include "preflab/rng.hpp"
#include "preflab/tabular.hpp"

namespace preflab {

WinRateResult win_rate(const Policy& a, const Policy& b, const RewardSource& judge,
                       const std::vector<Prompt>& prompts, double temperature, double top_p,
                       std::uint64_t seed) {
  if (prompts.empty()) throw InvalidArgument("win_rate: need at least one prompt");
  WinRateResult result;
  result.rows.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    SampleConfig sc;
    sc.temperature = temperature;
    sc.top_p = top_p;
    // Shared per-prompt stream: identical policies generate identical samples.
    sc.seed = derive_seed(seed, "winrate.sample", i);
    double r_a = judge.reward(prompts[i], a.sample(prompts[i], sc));
    double r_b = judge.reward(prompts[i], b.sample(prompts[i], sc));
    result.rows.push_back({prompts[i].id, r_a, r_b});
    if (r_a > r_b) {
      result.wins += 1.0;
    } else if (r_a < r_b) {
      result.losses += 1.0;
    } else {
      result.ties += 1.0;
    }
  }
  result.win_rate = (result.wins + 0.5 * result.ties) / static_cast<double>(prompts.size());
  return result;
}

AdvantageResult reward_advantage_fixed(const std::vector<Response>& responses,
                                       const std::vector<Response>& baseline,
                                       const RewardSource& judge,
                                       const std::vector<Prompt>& prompts) {
  if (prompts.empty()) throw InvalidArgument("reward_advantage: need at least one prompt");
  if (responses.size() != prompts.size() || baseline.size() != prompts.size()) {
    throw InvalidArgument("reward_advantage: response lists must match the prompt list");
  }
  std::vector<double> r_policy(prompts.size()), r_base(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    r_policy[i] = judge.reward(prompts[i], responses[i]);
    r_base[i] = judge.reward(prompts[i], baseline[i]);
  }
  double mean = 0.0;
  for (double r : r_policy) mean += r;
  for (double r : r_base) mean += r;
  mean /= static_cast<double>(2 * prompts.size());
  double var = 0.0;
  for (double r : r_policy) var += (r - mean) * (r - mean);
  for (double r : r_base) var += (r - mean) * (r - mean);
  var /= static_cast<double>(2 * prompts.size());
  double sd = std::sqrt(var);

  AdvantageResult result;
  result.rows.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    double adv = sd > 0.0 ? (r_policy[i] - r_base[i]) / sd : 0.0;
    result.rows.push_back({prompts[i].id, r_policy[i], r_base[i], adv});
    result.mean_advantage += adv;
  }
  result.mean_advantage /= static_cast<double>(prompts.size());
  return result;
}

AdvantageResult reward_advantage(const Policy& policy, const std::vector<Response>& baseline,
                                 const RewardSource& judge, const std::vector<Prompt>& prompts,
                                 const SampleConfig& sample_cfg) {
  std::vector<Response> responses;
  responses.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    SampleConfig sc = sample_cfg;
    sc.seed = derive_seed(sample_cfg.seed, "advantage.sample", i);
    responses.push_back(policy.sample(prompts[i], sc));
  }
  return reward_advantage_fixed(responses, baseline, judge, prompts);
}

double implicit_reward_accuracy(const Policy& policy, const Policy& reference,
                                const PreferenceDataset& ds, double beta) {
  if (!(beta > 0.0)) throw InvalidArgument("implicit_reward_accuracy: beta must be positive");
  if (ds.pairs.empty()) throw InvalidArgument("implicit_reward_accuracy: dataset is empty");
  double score = 0.0;
  for (const PreferencePair& pair : ds.pairs) {
    DpoPairStats stats = dpo_pair_stats(policy, reference, pair, beta);
    score += stats.implicit_gap > 0.0 ? 1.0 : (stats.implicit_gap == 0.0 ? 0.5 : 0.0);
  }
  return score / static_cast<double>(ds.pairs.size());
}

DpoPairStats dpo_pair_stats(const Policy& policy, const Policy& reference,
                            const PreferencePair& pair, double beta) {
  double z_w = policy.log_prob(pair.prompt, pair.chosen);
  double z_l = policy.log_prob(pair.prompt, pair.rejected);
  double zr_w = reference.log_prob(pair.prompt, pair.chosen);
  double zr_l = reference.log_prob(pair.prompt, pair.rejected);
  DpoPairStats stats;
  stats.implicit_gap = beta * ((z_w - zr_w) - (z_l - zr_l));
  stats.sigmoid_weight = stable_sigmoid(-stats.implicit_gap);
  return stats;
}

DegeneracyReport degeneracy_probe(const Policy& policy, const Policy* reference,
                                  const PreferenceDataset& ds, const World& world, double beta,
                                  const PairLossFn& per_pair_loss, double nd_epsilon) {
  if (policy.backend() != "tabular") {
    throw UnsupportedBackend(
        "degeneracy_probe: exact mass accounting needs the tabular backend, got '" +
        std::string(policy.backend()) + "'");
  }
  const auto& tab = dynamic_cast<const TabularPolicy&>(policy);

  DegeneracyReport report;
  std::vector<std::set<std::size_t>> dispreferred(world.catalogs.size());
  for (const PreferencePair& pair : ds.pairs) {
    dispreferred[pair.prompt.id].insert(world.catalog_index(pair.prompt.id, pair.rejected));
  }
  for (std::size_t p = 0; p < world.catalogs.size(); ++p) {
    std::vector<double> probs = tab.probabilities(p);
    double mass = 0.0, rest = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      (dispreferred[p].count(k) ? mass : rest) += probs[k];
    }
    report.prompts.push_back({static_cast<int>(p), mass, rest});
  }

  bool first = true;
  double grad_nd = 0.0, grad_det = 0.0;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const PreferencePair& pair = ds.pairs[i];
    double gap;
    if (reference != nullptr) {
      gap = dpo_pair_stats(policy, *reference, pair, beta).implicit_gap;
    } else {
      gap = policy.student_reward(pair.prompt, pair.chosen) -
            policy.student_reward(pair.prompt, pair.rejected);
    }
    if (first || gap > report.max_implicit_gap) report.max_implicit_gap = gap;
    first = false;

    bool near_tie = false;
    if (pair.true_reward_gap) {
      double p_pref = std::clamp(stable_sigmoid(*pair.true_reward_gap), 1e-12, 1.0 - 1e-12);
      near_tie = classify_pair(p_pref, nd_epsilon) == PairKind::NonDeterministic;
    }
    if (per_pair_loss) {
      LossEvaluation ev = per_pair_loss(i);
      double norm = 0.0;
      for (double g : ev.gradient) norm += g * g;
      norm = std::sqrt(norm);
      (near_tie ? grad_nd : grad_det) += norm;
    }
    (near_tie ? report.nd_count : report.det_count) += 1;
  }
  if (per_pair_loss) {
    if (report.nd_count > 0) report.grad_norm_nd = grad_nd / report.nd_count;
    if (report.det_count > 0) report.grad_norm_det = grad_det / report.det_count;
  }
  return report;
}

void write_win_rate_csv(const std::vector<NamedWinRate>& rows,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open win-rate file for writing: " + path.string());
  out << "policy_a,policy_b,win_rate,wins,ties,losses,n_prompts\n";
  for (const NamedWinRate& row : rows) {
    out << row.policy_a << ',' << row.policy_b << ',' << format_double(row.result.win_rate) << ','
        << format_double(row.result.wins) << ',' << format_double(row.result.ties) << ','
        << format_double(row.result.losses) << ',' << row.result.rows.size() << '\n';
  }
  if (!out) throw IoError("failed writing win-rate file: " + path.string());
}

void write_advantage_csv(const AdvantageResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open advantage file for writing: " + path.string());
  out << "prompt_id,reward_policy,reward_baseline,advantage\n";
  for (const AdvantageResult::Row& row : result.rows) {
    out << row.prompt_id << ',' << format_double(row.reward_policy) << ','
        << format_double(row.reward_baseline) << ',' << format_double(row.advantage) << '\n';
  }
  if (!out) throw IoError("failed writing advantage file: " + path.string());
}

void write_degeneracy_csv(const DegeneracyReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open degeneracy file for writing: " + path.string());
  out << "prompt_id,dispreferred_mass,complement_mass\n";
  for (const DegeneracyReport::PromptRow& row : report.prompts) {
    out << row.prompt_id << ',' << format_double(row.dispreferred_mass) << ','
        << format_double(row.complement_mass) << '\n';
  }
  if (!out) throw IoError("failed writing degeneracy file: " + path.string());
}

}  // namespace preflab
