// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "preflab/core.hpp"
#include "preflab/policy.hpp"
#include "preflab/rng.hpp"
#include "preflab/tabular.hpp"

namespace preflab {

struct WorldSpec {
  int num_prompts = 8;
  int catalog_size = 8;
  int vocab_size = 16;
  int response_min_len = 3;
  int response_max_len = 6;
  double reward_mean = 0.0;
  double reward_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// A fully known preference environment: fixed prompts, a response catalog per
// prompt, and a ground-truth reward for every catalog entry. Everything
// downstream (labels, confidence scores, win judgments) derives from it.
struct World {
  WorldSpec spec;
  std::vector<Prompt> prompts;
  std::vector<std::vector<Response>> catalogs;
  std::vector<std::vector<double>> true_rewards;

  std::size_t catalog_index(int prompt_id, const Response& y) const;
  double true_reward(int prompt_id, const Response& y) const;
};

// RewardSource view over the ground-truth table.
class TrueRewards final : public RewardSource {
 public:
  explicit TrueRewards(const World& world) : world_(&world) {}
  double reward(const Prompt& x, const Response& y) const override {
    return world_->true_reward(x.id, y);
  }

 private:
  const World* world_;
};

World build_world(const WorldSpec& spec);

void save_world(const World& world, const std::filesystem::path& path);
World load_world(const std::filesystem::path& path);

enum class LabelNoise { BtSampling, HardLabels };

struct GenerationPlan {
  int num_pairs = 256;
  double nd_fraction = 0.0;   // share of pairs drawn from the near-tie pool
  double nd_epsilon = kDefaultNdEpsilon;
  LabelNoise label_noise = LabelNoise::BtSampling;
  bool confidence_noise = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Maps a preference probability to a 1..9 annotator-style confidence score;
// a coin flip lands at 1, certainty at either extreme lands at 9.
double simulate_confidence(double p);
// Same map with additive Normal(0, 0.5^2) noise, clamped to [1, 9].
double simulate_confidence(double p, Rng& noise_rng);

// Draws pairs from the world's candidate pool. The near-tie quota
// round(nd_fraction * num_pairs) is filled by selection from the pool of
// candidates whose preference probability is within nd_epsilon of 0.5, so the
// realized fraction is exact rather than expected. Candidates are drawn with
// replacement; each pair uses its own derived RNG stream.
PreferenceDataset sample_preference_dataset(const World& world, const GenerationPlan& plan);

// Fresh models shaped to the world's catalogs.
TabularPolicy tabular_policy_for(const World& world);
TabularRewardModel tabular_reward_model_for(const World& world, std::uint64_t init_seed = 0,
                                            double init_std = 0.0);

}  // namespace preflab
