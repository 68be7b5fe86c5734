// SPDX-License-Identifier: Apache-2.0
#include "preflab/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "preflab/errors.hpp"

namespace preflab {

namespace {

using nlohmann::json;

// Number of distinct token sequences with lengths in [min_len, max_len],
// saturating well above any sensible catalog size.
double sequence_space(int vocab, int min_len, int max_len) {
  double total = 0.0;
  for (int len = min_len; len <= max_len; ++len) {
    total += std::pow(static_cast<double>(vocab), len);
    if (total > 1e18) return 1e18;
  }
  return total;
}

Response random_response(Rng& rng, int vocab, int min_len, int max_len) {
  int len = min_len + static_cast<int>(rng.uniform_below(max_len - min_len + 1));
  Response r;
  r.tokens.reserve(len);
  for (int i = 0; i < len; ++i) {
    r.tokens.push_back(static_cast<int>(rng.uniform_below(vocab)));
  }
  return r;
}

}  // namespace

void WorldSpec::validate() const {
  if (num_prompts < 1) throw InvalidArgument("WorldSpec: num_prompts must be >= 1");
  if (catalog_size < 2) throw InvalidArgument("WorldSpec: catalog_size must be >= 2");
  if (vocab_size < 2) throw InvalidArgument("WorldSpec: vocab_size must be >= 2");
  if (response_min_len < 1 || response_max_len < response_min_len) {
    throw InvalidArgument("WorldSpec: need 1 <= response_min_len <= response_max_len");
  }
  if (!(reward_std > 0.0)) throw InvalidArgument("WorldSpec: reward_std must be positive");
  if (sequence_space(vocab_size, response_min_len, response_max_len) < catalog_size) {
    throw InvalidArgument("WorldSpec: token space too small for a distinct catalog");
  }
}

std::size_t World::catalog_index(int prompt_id, const Response& y) const {
  if (prompt_id < 0 || static_cast<std::size_t>(prompt_id) >= catalogs.size()) {
    throw InvalidArgument("World: unknown prompt id " + std::to_string(prompt_id));
  }
  const std::vector<Response>& catalog = catalogs[prompt_id];
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (catalog[i] == y) return i;
  }
  throw InvalidArgument("World: response not in catalog of prompt " + std::to_string(prompt_id));
}

double World::true_reward(int prompt_id, const Response& y) const {
  return true_rewards[prompt_id][catalog_index(prompt_id, y)];
}

World build_world(const WorldSpec& spec) {
  spec.validate();
  World world;
  world.spec = spec;
  world.prompts.resize(spec.num_prompts);
  world.catalogs.resize(spec.num_prompts);
  world.true_rewards.resize(spec.num_prompts);
  for (int p = 0; p < spec.num_prompts; ++p) {
    world.prompts[p].id = p;
    Rng prompt_rng(derive_seed(spec.seed, "world.prompt", p));
    world.prompts[p].tokens =
        random_response(prompt_rng, spec.vocab_size, spec.response_min_len, spec.response_max_len)
            .tokens;

    Rng catalog_rng(derive_seed(spec.seed, "world.catalog", p));
    std::vector<Response>& catalog = world.catalogs[p];
    while (catalog.size() < static_cast<std::size_t>(spec.catalog_size)) {
      Response candidate =
          random_response(catalog_rng, spec.vocab_size, spec.response_min_len, spec.response_max_len);
      if (std::find(catalog.begin(), catalog.end(), candidate) == catalog.end()) {
        catalog.push_back(std::move(candidate));
      }
    }

    Rng reward_rng(derive_seed(spec.seed, "world.rewards", p));
    std::vector<double>& rewards = world.true_rewards[p];
    rewards.reserve(spec.catalog_size);
    for (int k = 0; k < spec.catalog_size; ++k) {
      rewards.push_back(reward_rng.normal(spec.reward_mean, spec.reward_std));
    }
  }
  return world;
}

void save_world(const World& world, const std::filesystem::path& path) {
  json spec = {
      {"num_prompts", world.spec.num_prompts},
      {"catalog_size", world.spec.catalog_size},
      {"vocab_size", world.spec.vocab_size},
      {"response_min_len", world.spec.response_min_len},
      {"response_max_len", world.spec.response_max_len},
      {"reward_mean", world.spec.reward_mean},
      {"reward_std", world.spec.reward_std},
      {"seed", world.spec.seed},
  };
  json prompts = json::array();
  for (const Prompt& p : world.prompts) {
    prompts.push_back({{"id", p.id}, {"tokens", p.tokens}});
  }
  json catalogs = json::array();
  for (const std::vector<Response>& catalog : world.catalogs) {
    json row = json::array();
    for (const Response& r : catalog) row.push_back(r.tokens);
    catalogs.push_back(std::move(row));
  }
  json doc = {{"spec", spec},
              {"prompts", prompts},
              {"catalogs", catalogs},
              {"rewards", world.true_rewards}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open world file for writing: " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("failed writing world file: " + path.string());
}

World load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open world file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("world file is not valid JSON: " + std::string(e.what()), 1);
  }
  World world;
  try {
    const json& spec = doc.at("spec");
    world.spec.num_prompts = spec.at("num_prompts").get<int>();
    world.spec.catalog_size = spec.at("catalog_size").get<int>();
    world.spec.vocab_size = spec.at("vocab_size").get<int>();
    world.spec.response_min_len = spec.at("response_min_len").get<int>();
    world.spec.response_max_len = spec.at("response_max_len").get<int>();
    world.spec.reward_mean = spec.at("reward_mean").get<double>();
    world.spec.reward_std = spec.at("reward_std").get<double>();
    world.spec.seed = spec.at("seed").get<std::uint64_t>();
    for (const json& p : doc.at("prompts")) {
      Prompt prompt;
      prompt.id = p.at("id").get<int>();
      prompt.tokens = p.at("tokens").get<std::vector<int>>();
      world.prompts.push_back(std::move(prompt));
    }
    for (const json& row : doc.at("catalogs")) {
      std::vector<Response> catalog;
      for (const json& tokens : row) catalog.push_back({tokens.get<std::vector<int>>()});
      world.catalogs.push_back(std::move(catalog));
    }
    world.true_rewards = doc.at("rewards").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ParseError("world file missing or mistyped field: " + std::string(e.what()), 1);
  }
  if (world.prompts.size() != static_cast<std::size_t>(world.spec.num_prompts) ||
      world.catalogs.size() != world.prompts.size() ||
      world.true_rewards.size() != world.prompts.size()) {
    throw ParseError("world file is internally inconsistent", 1);
  }
  return world;
}

void GenerationPlan::validate() const {
  if (num_pairs < 1) throw InvalidArgument("GenerationPlan: num_pairs must be >= 1");
  if (!(nd_fraction >= 0.0 && nd_fraction <= 1.0)) {
    throw InvalidArgument("GenerationPlan: nd_fraction must lie in [0, 1]");
  }
  if (!(nd_epsilon >= 0.0 && nd_epsilon < 0.5)) {
    throw InvalidArgument("GenerationPlan: nd_epsilon must lie in [0, 0.5)");
  }
}

double simulate_confidence(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidArgument("simulate_confidence: p must lie in (0, 1)");
  }
  return 1.0 + 8.0 * std::abs(2.0 * p - 1.0);
}

double simulate_confidence(double p, Rng& noise_rng) {
  double c = simulate_confidence(p) + noise_rng.normal(0.0, 0.5);
  return std::clamp(c, kConfidenceMin, kConfidenceMax);
}

PreferenceDataset sample_preference_dataset(const World& world, const GenerationPlan& plan) {
  plan.validate();
  struct Candidate {
    int prompt;
    int first;
    int second;
  };
  std::vector<Candidate> nd_pool, det_pool;
  for (std::size_t p = 0; p < world.catalogs.size(); ++p) {
    const std::vector<double>& rewards = world.true_rewards[p];
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      for (std::size_t j = i + 1; j < rewards.size(); ++j) {
        Candidate c{static_cast<int>(p), static_cast<int>(i), static_cast<int>(j)};
        double prob = bt_probability(rewards[i], rewards[j]);
        // Huge reward gaps saturate to exactly 0 or 1, outside the open
        // interval the classifier accepts; such a pair is plainly decided.
        prob = std::clamp(prob, 1e-12, 1.0 - 1e-12);
        if (classify_pair(prob, plan.nd_epsilon) == PairKind::NonDeterministic) {
          nd_pool.push_back(c);
        } else {
          det_pool.push_back(c);
        }
      }
    }
  }

  const int n_nd = static_cast<int>(std::llround(plan.nd_fraction * plan.num_pairs));
  const int n_det = plan.num_pairs - n_nd;
  if (n_nd > 0 && nd_pool.empty()) {
    throw InfeasiblePlan(
        "plan requests near-tie pairs but the world has none; achievable nd_fraction is 0", 0.0);
  }
  if (n_det > 0 && det_pool.empty()) {
    throw InfeasiblePlan(
        "plan requests decided pairs but the world has none; achievable nd_fraction is 1", 1.0);
  }

  // Exact quota: n_nd slots come from the near-tie pool. Slot kinds are
  // shuffled once so dataset order carries no class pattern.
  std::vector<char> slot_is_nd(plan.num_pairs, 0);
  std::fill(slot_is_nd.begin(), slot_is_nd.begin() + n_nd, 1);
  Rng slot_rng(derive_seed(plan.seed, "slots"));
  for (std::size_t k = slot_is_nd.size(); k > 1; --k) {
    std::size_t j = slot_rng.uniform_below(k);
    std::swap(slot_is_nd[k - 1], slot_is_nd[j]);
  }

  PreferenceDataset ds;
  ds.name = "synthetic";
  ds.pairs.reserve(plan.num_pairs);
  for (int k = 0; k < plan.num_pairs; ++k) {
    Rng rng(derive_seed(plan.seed, "pair", k));
    const std::vector<Candidate>& pool = slot_is_nd[k] ? nd_pool : det_pool;
    const Candidate& c = pool[rng.uniform_below(pool.size())];
    double r_first = world.true_rewards[c.prompt][c.first];
    double r_second = world.true_rewards[c.prompt][c.second];

    bool first_wins;
    if (plan.label_noise == LabelNoise::BtSampling) {
      first_wins = rng.uniform() < bt_probability(r_first, r_second);
    } else {
      first_wins = r_first >= r_second;  // ties go to the lower catalog index
    }
    int win = first_wins ? c.first : c.second;
    int lose = first_wins ? c.second : c.first;

    PreferencePair pair;
    pair.prompt = world.prompts[c.prompt];
    pair.chosen = world.catalogs[c.prompt][win];
    pair.rejected = world.catalogs[c.prompt][lose];
    double gap = world.true_rewards[c.prompt][win] - world.true_rewards[c.prompt][lose];
    pair.true_reward_gap = gap;
    double p_win = bt_probability(world.true_rewards[c.prompt][win],
                                  world.true_rewards[c.prompt][lose]);
    // Extreme reward scales can saturate the sigmoid to exactly 0 or 1;
    // nudge inside the open interval the confidence map expects.
    p_win = std::clamp(p_win, 1e-12, 1.0 - 1e-12);
    pair.confidence =
        plan.confidence_noise ? simulate_confidence(p_win, rng) : simulate_confidence(p_win);
    ds.pairs.push_back(std::move(pair));
  }
  return ds;
}

TabularPolicy tabular_policy_for(const World& world) { return TabularPolicy(world.catalogs); }

TabularRewardModel tabular_reward_model_for(const World& world, std::uint64_t init_seed,
                                            double init_std) {
  TabularRewardModel model(world.catalogs);
  if (init_std > 0.0) {
    Rng rng(derive_seed(init_seed, "rm.init"));
    for (double& p : model.params()) p = rng.normal(0.0, init_std);
  }
  return model;
}

}  // namespace preflab
