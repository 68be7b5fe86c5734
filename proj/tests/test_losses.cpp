// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <doctest.h>

#include "preflab/autoregressive.hpp"
#include "preflab/errors.hpp"
#include "preflab/gradcheck.hpp"
#include "preflab/losses.hpp"
#include "preflab/rng.hpp"
#include "preflab/synthworld.hpp"
#include "preflab/tabular.hpp"

using namespace preflab;

namespace {

std::vector<std::vector<Response>> single_catalog(std::size_t n) {
  std::vector<Response> cat;
  for (std::size_t i = 0; i < n; ++i) cat.push_back(Response{{static_cast<int>(i)}});
  return {cat};
}

PreferencePair pair_over(const TabularPolicy& pi, std::size_t chosen, std::size_t rejected) {
  PreferencePair pair;
  pair.prompt = Prompt{0, {}};
  pair.chosen = pi.catalog(0)[chosen];
  pair.rejected = pi.catalog(0)[rejected];
  return pair;
}

PreferenceDataset one_pair_dataset(const PreferencePair& pair) {
  PreferenceDataset ds;
  ds.pairs.push_back(pair);
  return ds;
}

// Every unordered catalog pair, chosen by true reward. With full coverage
// every logit has a nonzero analytic gradient, so finite differences never
// sit on an exact cancellation (where the 1e-8 relative-error floor would
// amplify one-ulp rounding noise into a spurious failure).
PreferenceDataset coverage_dataset(const World& world) {
  PreferenceDataset ds;
  ds.name = "coverage";
  for (std::size_t p = 0; p < world.catalogs.size(); ++p) {
    for (std::size_t i = 0; i < world.catalogs[p].size(); ++i) {
      for (std::size_t j = i + 1; j < world.catalogs[p].size(); ++j) {
        double ri = world.true_rewards[p][i];
        double rj = world.true_rewards[p][j];
        std::size_t w = ri >= rj ? i : j;
        std::size_t l = ri >= rj ? j : i;
        PreferencePair pair;
        pair.prompt = world.prompts[p];
        pair.chosen = world.catalogs[p][w];
        pair.rejected = world.catalogs[p][l];
        pair.true_reward_gap = std::abs(ri - rj);
        ds.pairs.push_back(std::move(pair));
      }
    }
  }
  return ds;
}

World small_world(std::uint64_t seed) {
  WorldSpec spec;
  spec.num_prompts = 3;
  spec.catalog_size = 3;
  spec.vocab_size = 10;
  spec.seed = seed;
  return build_world(spec);
}

void randomize(std::span<double> params, std::uint64_t seed, double std_dev) {
  Rng rng(seed);
  for (double& p : params) p = rng.normal(0.0, std_dev);
}

// Realizes the documented single-pair instance where the likelihood view and
// the student-reward view disagree: pi(chosen) = 0.6, pi(rejected) = 0.2,
// both student rewards zero.
class PinnedPolicy final : public Policy {
 public:
  PinnedPolicy(Response chosen, Response rejected)
      : chosen_(std::move(chosen)), rejected_(std::move(rejected)) {}

  std::string_view backend() const override { return "pinned"; }
  std::span<double> params() override { return {}; }
  std::span<const double> params() const override { return {}; }
  std::vector<ParamBlock> param_blocks() const override { return {}; }
  double log_prob(const Prompt&, const Response& y) const override {
    return y == chosen_ ? std::log(0.6) : std::log(0.2);
  }
  void add_log_prob_grad(const Prompt&, const Response&, double,
                         std::span<double>) const override {}
  double student_reward(const Prompt&, const Response&) const override { return 0.0; }
  void add_student_reward_grad(const Prompt&, const Response&, double,
                               std::span<double>) const override {}
  Response sample(const Prompt&, const SampleConfig&) const override { return chosen_; }
  std::unique_ptr<Policy> clone() const override {
    return std::make_unique<PinnedPolicy>(*this);
  }

 private:
  Response chosen_;
  Response rejected_;
};

}  // namespace

TEST_CASE("loss identifiers round-trip") {
  for (LossType t : {LossType::Sft, LossType::Rm, LossType::Oracle, LossType::Dpo, LossType::Edpo,
                     LossType::Drdo}) {
    CHECK(parse_loss_type(to_string(t)) == t);
  }
  CHECK(parse_loss_type("drdo") == LossType::Drdo);
  CHECK_THROWS_AS(parse_loss_type("ipo"), InvalidArgument);
  CHECK_THROWS_AS(parse_loss_type(""), InvalidArgument);
}

TEST_CASE("focal coefficient values and monotonicity") {
  CHECK(focal_coefficient(0.5, 2.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(focal_coefficient(0.9, 2.0) == doctest::Approx(0.01).epsilon(1e-13));
  CHECK(focal_coefficient(0.0, 0.0) == 1.0);
  CHECK(focal_coefficient(0.3, 0.0) == 1.0);
  CHECK(focal_coefficient(1.0, 0.0) == 1.0);
  CHECK(focal_coefficient(1.0, 2.0) == 0.0);

  double prev = focal_coefficient(0.0, 2.0);
  for (double p = 0.1; p <= 1.0; p += 0.1) {
    double cur = focal_coefficient(p, 2.0);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK_THROWS_AS(focal_coefficient(-0.1, 2.0), InvalidArgument);
  CHECK_THROWS_AS(focal_coefficient(1.1, 2.0), InvalidArgument);
  CHECK_THROWS_AS(focal_coefficient(0.5, -1.0), InvalidArgument);
}

TEST_CASE("preference confidence is a sigmoid of the log-prob gap") {
  CHECK(preference_confidence(1.3, 1.3) == 0.5);
  CHECK(preference_confidence(2.0, 0.0) == doctest::Approx(0.8807970779778824).epsilon(1e-14));
  CHECK(preference_confidence(-1e4, 0.0) < 1e-12);
}

TEST_CASE("sft loss on tabular catalogs") {
  TabularPolicy uniform4(single_catalog(4));
  PreferenceDataset ds = one_pair_dataset(pair_over(uniform4, 0, 1));
  std::vector<std::size_t> batch = all_indices(ds);
  CHECK(sft_loss(uniform4, ds, batch).value == 1.3862943611198906);

  TabularPolicy saturated(single_catalog(4));
  saturated.set_logit(0, 0, 1000.0);
  CHECK(sft_loss(saturated, ds, batch).value < 1e-12);
  CHECK(sft_loss(saturated, ds, batch).value >= 0.0);

  CHECK_THROWS_AS(sft_loss(uniform4, ds, Batch{}), InvalidArgument);
}

TEST_CASE("sft loss averages chosen-response surprisal across pairs") {
  // Two prompts with catalog sizes 4 and 2; a uniform policy puts the chosen
  // responses at probabilities 1/4 and 1/2.
  std::vector<std::vector<Response>> catalogs = single_catalog(4);
  catalogs.push_back({Response{{10}}, Response{{11}}});
  TabularPolicy pi(catalogs);
  PreferenceDataset ds;
  PreferencePair a;
  a.prompt = Prompt{0, {}};
  a.chosen = catalogs[0][0];
  a.rejected = catalogs[0][1];
  PreferencePair b;
  b.prompt = Prompt{1, {}};
  b.chosen = catalogs[1][1];
  b.rejected = catalogs[1][0];
  ds.pairs = {a, b};
  std::vector<std::size_t> batch = all_indices(ds);
  CHECK(sft_loss(pi, ds, batch).value == doctest::Approx(1.0397207708399180).epsilon(1e-14));
}

TEST_CASE("rm loss is the logistic ranking loss on model rewards") {
  TabularRewardModel rm(single_catalog(2));
  PreferenceDataset ds;
  PreferencePair pair;
  pair.prompt = Prompt{0, {}};
  pair.chosen = rm.catalogs()[0][0];
  pair.rejected = rm.catalogs()[0][1];
  ds.pairs.push_back(pair);
  std::vector<std::size_t> batch = all_indices(ds);

  CHECK(rm_loss(rm, ds, batch).value == 0.6931471805599453);  // equal rewards

  rm.params()[0] = 2.0;
  CHECK(rm_loss(rm, ds, batch).value == doctest::Approx(0.1269280110429725).epsilon(1e-14));

  rm.params()[0] = 1000.0;
  CHECK(rm_loss(rm, ds, batch).value < 1e-12);
  CHECK(rm_loss(rm, ds, batch).value >= 0.0);

  rm.params()[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(rm_loss(rm, ds, batch), NumericalFailure);
}

TEST_CASE("oracle loss blends ranking with chosen-sequence likelihood") {
  TabularRewardModel rm(single_catalog(3));
  randomize(rm.params(), 17, 1.0);
  PreferenceDataset ds;
  PreferencePair pair;
  pair.prompt = Prompt{0, {}};
  pair.chosen = rm.catalogs()[0][0];
  pair.rejected = rm.catalogs()[0][2];
  ds.pairs.push_back(pair);
  std::vector<std::size_t> batch = all_indices(ds);

  OracleConfig off;
  off.alpha_sft = 0.0;
  CHECK(oracle_loss(rm, ds, batch, off).value ==
        doctest::Approx(rm_loss(rm, ds, batch).value).epsilon(1e-15));

  OracleConfig pure;
  pure.alpha_sft = 1.0;
  TabularRewardModel uniform(single_catalog(3));
  CHECK(oracle_loss(uniform, ds, batch, pure).value ==
        doctest::Approx(std::log(3.0)).epsilon(1e-14));

  OracleConfig bad;
  bad.alpha_sft = 1.5;
  CHECK_THROWS_AS(oracle_loss(rm, ds, batch, bad), InvalidArgument);
}

TEST_CASE("oracle loss hand-computed instance") {
  // Row (0, 0, c) with e^c = e^2 - 2 puts the chosen entry at lm
  // log-probability exactly -2 while keeping the reward gap at zero.
  TabularRewardModel rm(single_catalog(3));
  rm.params()[2] = std::log(std::exp(2.0) - 2.0);
  PreferenceDataset ds;
  PreferencePair pair;
  pair.prompt = Prompt{0, {}};
  pair.chosen = rm.catalogs()[0][0];
  pair.rejected = rm.catalogs()[0][1];
  ds.pairs.push_back(pair);
  std::vector<std::size_t> batch = all_indices(ds);

  OracleConfig cfg;  // alpha_sft = 0.01
  CHECK(oracle_loss(rm, ds, batch, cfg).value ==
        doctest::Approx(0.7062157087543459).epsilon(1e-13));
}

TEST_CASE("dpo loss at the reference fixed point is log 2 for every beta") {
  TabularPolicy pi(single_catalog(3));
  randomize(pi.params(), 23, 1.5);
  std::unique_ptr<Policy> ref = pi.clone();
  PreferenceDataset ds = one_pair_dataset(pair_over(pi, 1, 2));
  std::vector<std::size_t> batch = all_indices(ds);

  for (double beta : {0.1, 0.5, 1.0, 10.0}) {
    CHECK(dpo_loss(pi, *ref, ds, batch, DpoConfig{beta}).value == 0.6931471805599453);
  }
}

TEST_CASE("dpo loss frozen value at a scaled gap of one") {
  TabularPolicy pi(single_catalog(2));
  pi.set_logit(0, 0, 10.0);
  TabularPolicy ref(single_catalog(2));
  PreferenceDataset ds = one_pair_dataset(pair_over(pi, 0, 1));
  std::vector<std::size_t> batch = all_indices(ds);

  CHECK(dpo_loss(pi, ref, ds, batch, DpoConfig{0.1}).value ==
        doctest::Approx(0.3132616875182228).epsilon(1e-14));
  CHECK_THROWS_AS(dpo_loss(pi, ref, ds, batch, DpoConfig{0.0}), InvalidArgument);
  CHECK_THROWS_AS(dpo_loss(pi, ref, ds, batch, DpoConfig{-1.0}), InvalidArgument);
}

TEST_CASE("edpo loss averages squared residuals over ensemble members") {
  TabularPolicy pi(single_catalog(2));
  pi.set_logit(0, 0, 2.0);  // implicit log-ratio gap of exactly 2 against a flat reference
  TabularPolicy ref(single_catalog(2));
  PreferenceDataset ds = one_pair_dataset(pair_over(pi, 0, 1));
  std::vector<std::size_t> batch = all_indices(ds);

  RewardSnapshot low{{1.0}, {0.0}};
  RewardSnapshot high{{3.0}, {0.0}};
  std::vector<RewardSnapshot> ensemble = {low, high};
  CHECK(edpo_loss(pi, ref, ds, batch, ensemble, 1.0).value == 1.0);

  std::vector<RewardSnapshot> matched = {low};
  CHECK(edpo_loss(pi, ref, ds, batch, matched, 0.5).value == 0.0);

  CHECK_THROWS_AS(edpo_loss(pi, ref, ds, batch, {}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(edpo_loss(pi, ref, ds, batch, ensemble, 0.0), InvalidArgument);
  RewardSnapshot short_snap{{1.0, 2.0}, {0.0, 0.0}};
  std::vector<RewardSnapshot> mismatched = {short_snap};
  CHECK_THROWS_AS(edpo_loss(pi, ref, ds, batch, mismatched, 1.0), InvalidArgument);
}

TEST_CASE("edpo loss at the reference fixed point squares the member gaps") {
  TabularPolicy pi(single_catalog(3));
  randomize(pi.params(), 5, 1.0);
  std::unique_ptr<Policy> ref = pi.clone();
  PreferenceDataset ds = one_pair_dataset(pair_over(pi, 0, 2));
  std::vector<std::size_t> batch = all_indices(ds);
  RewardSnapshot snap{{1.5}, {0.0}};
  std::vector<RewardSnapshot> ensemble = {snap};
  CHECK(edpo_loss(pi, *ref, ds, batch, ensemble, 0.7).value == 2.25);
}

TEST_CASE("edpo single member matches a direct transcription") {
  World world = small_world(42);
  PreferenceDataset ds = coverage_dataset(world);
  std::vector<std::size_t> batch = all_indices(ds);
  TabularPolicy pi = tabular_policy_for(world);
  randomize(pi.params(), 301, 0.8);
  TabularPolicy ref = tabular_policy_for(world);
  randomize(ref.params(), 302, 0.8);
  RewardSnapshot snap = make_reward_snapshot(TrueRewards(world), ds);
  const double beta = 0.4;

  double manual = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const PreferencePair& pair = ds.pairs[i];
    double gap = snap.chosen[i] - snap.rejected[i];
    double implicit = (pi.log_prob(pair.prompt, pair.chosen) -
                       ref.log_prob(pair.prompt, pair.chosen)) -
                      (pi.log_prob(pair.prompt, pair.rejected) -
                       ref.log_prob(pair.prompt, pair.rejected));
    double residual = gap - beta * implicit;
    manual += residual * residual;
  }
  manual /= static_cast<double>(ds.size());

  std::vector<RewardSnapshot> ensemble = {snap};
  CHECK(edpo_loss(pi, ref, ds, batch, ensemble, beta).value ==
        doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("drdo loss hand-computed instance") {
  Response chosen{{1}};
  Response rejected{{2}};
  PinnedPolicy pi(chosen, rejected);
  PreferenceDataset ds;
  PreferencePair pair;
  pair.prompt = Prompt{0, {}};
  pair.chosen = chosen;
  pair.rejected = rejected;
  ds.pairs.push_back(pair);
  std::vector<std::size_t> batch = all_indices(ds);
  RewardSnapshot oracle{{1.0}, {0.0}};

  DrdoConfig cfg;  // alpha 0.1, gamma 2
  CHECK(drdo_loss(pi, ds, batch, oracle, cfg).value ==
        doctest::Approx(1.0017980129528236).epsilon(1e-13));
  CHECK(drdo_preference_term(pi, ds, batch, cfg).value ==
        doctest::Approx(0.0017980129528236303).epsilon(1e-12));
}

TEST_CASE("drdo loss vanishes when alpha is zero and the gaps match") {
  World world = small_world(9);
  PreferenceDataset ds = coverage_dataset(world);
  std::vector<std::size_t> batch = all_indices(ds);
  TabularPolicy pi = tabular_policy_for(world);
  randomize(pi.params(), 88, 1.0);

  RewardSnapshot matched;
  for (const PreferencePair& pair : ds.pairs) {
    matched.chosen.push_back(pi.student_reward(pair.prompt, pair.chosen));
    matched.rejected.push_back(pi.student_reward(pair.prompt, pair.rejected));
  }
  DrdoConfig cfg;
  cfg.alpha = 0.0;
  CHECK(drdo_loss(pi, ds, batch, matched, cfg).value == 0.0);
}

TEST_CASE("drdo preference term with gamma 0 and alpha 1 is plain log-odds unlikelihood") {
  World world = small_world(12);
  PreferenceDataset ds = coverage_dataset(world);
  std::vector<std::size_t> batch = all_indices(ds);
  TabularPolicy pi = tabular_policy_for(world);
  randomize(pi.params(), 19, 0.7);

  DrdoConfig cfg;
  cfg.alpha = 1.0;
  cfg.gamma = 0.0;
  double manual = 0.0;
  for (const PreferencePair& pair : ds.pairs) {
    double z_w = pi.log_prob(pair.prompt, pair.chosen);
    double z_l = pi.log_prob(pair.prompt, pair.rejected);
    manual -= z_w - log1mexp(z_l);
  }
  manual /= static_cast<double>(ds.size());
  CHECK(drdo_preference_term(pi, ds, batch, cfg).value ==
        doctest::Approx(manual).epsilon(1e-13));
}

TEST_CASE("drdo rejects a rejected response with the whole probability mass") {
  TabularPolicy pi(single_catalog(2));
  pi.set_logit(0, 1, 2000.0);  // softmax drives the rejected entry to 1.0 in doubles
  PreferenceDataset ds = one_pair_dataset(pair_over(pi, 0, 1));
  std::vector<std::size_t> batch = all_indices(ds);
  RewardSnapshot oracle{{1.0}, {0.0}};
  bool threw = false;
  try {
    drdo_loss(pi, ds, batch, oracle, DrdoConfig{});
  } catch (const NumericalFailure& e) {
    threw = true;
    CHECK(std::string(e.what()).find("pair 0") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("drdo stays responsive on exactly ambiguous pairs") {
  // Tied logits for the labeled pair alongside a third catalog entry; the
  // pair is a coin flip for the policy but its parameter gradient must not
  // vanish, while the same pair hands a zero gap to the sigmoid objective.
  TabularPolicy pi(single_catalog(3));
  pi.set_logit(0, 0, 0.3);
  pi.set_logit(0, 1, 0.3);
  pi.set_logit(0, 2, -0.4);
  PreferenceDataset ds = one_pair_dataset(pair_over(pi, 0, 1));
  std::vector<std::size_t> batch = all_indices(ds);

  double z_w = pi.log_prob(ds.pairs[0].prompt, ds.pairs[0].chosen);
  double z_l = pi.log_prob(ds.pairs[0].prompt, ds.pairs[0].rejected);
  CHECK(z_w == z_l);
  CHECK(preference_confidence(z_w, z_l) == 0.5);
  CHECK(focal_coefficient(0.5, 2.0) == doctest::Approx(0.25).epsilon(1e-15));

  DrdoConfig cfg;  // alpha 0.1, gamma 2
  LossEvaluation term = drdo_preference_term(pi, ds, batch, cfg);
  double norm = 0.0;
  for (double g : term.gradient) norm += g * g;
  CHECK(std::sqrt(norm) > 1e-3);

  TabularPolicy ref(single_catalog(3));
  for (double beta : {0.1, 2.0}) {
    CHECK(dpo_loss(pi, ref, ds, batch, DpoConfig{beta}).value == 0.6931471805599453);
  }
}

TEST_CASE("reward snapshots align with dataset order") {
  World world = small_world(77);
  PreferenceDataset ds = coverage_dataset(world);
  TrueRewards oracle(world);
  RewardSnapshot snap = make_reward_snapshot(oracle, ds);
  REQUIRE(snap.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(snap.chosen[i] == oracle.reward(ds.pairs[i].prompt, ds.pairs[i].chosen));
    CHECK(snap.rejected[i] == oracle.reward(ds.pairs[i].prompt, ds.pairs[i].rejected));
    CHECK(snap.chosen[i] >= snap.rejected[i]);  // coverage orients by true reward
  }
}

TEST_CASE("analytic gradients of every objective pass finite differences (tabular)") {
  World world = small_world(1234);
  PreferenceDataset ds = coverage_dataset(world);
  std::vector<std::size_t> batch = all_indices(ds);

  TabularPolicy pi = tabular_policy_for(world);
  randomize(pi.params(), 51, 0.7);
  TabularPolicy ref = tabular_policy_for(world);
  randomize(ref.params(), 52, 0.7);
  TabularRewardModel rm = tabular_reward_model_for(world, 53, 0.5);
  RewardSnapshot truth = make_reward_snapshot(TrueRewards(world), ds);
  RewardSnapshot shifted = truth;
  for (double& r : shifted.chosen) r += 0.25;
  std::vector<RewardSnapshot> ensemble = {truth, shifted};

  SUBCASE("sft") {
    auto report = check_gradients(pi, [&] { return sft_loss(pi, ds, batch); });
    CHECK(report.pass);
  }
  SUBCASE("rm") {
    auto report = check_gradients(rm, [&] { return rm_loss(rm, ds, batch); });
    CHECK(report.pass);
  }
  SUBCASE("oracle") {
    OracleConfig cfg;
    cfg.alpha_sft = 0.25;
    auto report = check_gradients(rm, [&] { return oracle_loss(rm, ds, batch, cfg); });
    CHECK(report.pass);
  }
  SUBCASE("dpo") {
    auto report =
        check_gradients(pi, [&] { return dpo_loss(pi, ref, ds, batch, DpoConfig{0.3}); });
    CHECK(report.pass);
  }
  SUBCASE("edpo") {
    auto report =
        check_gradients(pi, [&] { return edpo_loss(pi, ref, ds, batch, ensemble, 0.3); });
    CHECK(report.pass);
  }
  SUBCASE("drdo") {
    DrdoConfig cfg;
    cfg.alpha = 0.5;
    auto report = check_gradients(pi, [&] { return drdo_loss(pi, ds, batch, truth, cfg); });
    CHECK(report.pass);
  }
  SUBCASE("drdo preference term") {
    DrdoConfig cfg;
    cfg.alpha = 1.0;
    auto report =
        check_gradients(pi, [&] { return drdo_preference_term(pi, ds, batch, cfg); });
    CHECK(report.pass);
  }
}

TEST_CASE("analytic gradients pass finite differences (autoregressive)") {
  ArConfig cfg;
  cfg.vocab_size = 12;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 6;
  cfg.init_seed = 99;
  cfg.init_std = 0.3;

  PreferenceDataset ds;
  PreferencePair a;
  a.prompt = Prompt{0, {1, 2}};
  a.chosen = Response{{3, 0}};
  a.rejected = Response{{7}};
  PreferencePair b;
  b.prompt = Prompt{1, {5}};
  b.chosen = Response{{2, 2, 4}};
  b.rejected = Response{{1, 8}};
  ds.pairs = {a, b};
  std::vector<std::size_t> batch = all_indices(ds);

  SUBCASE("sft") {
    AutoregressivePolicy pi(cfg);
    auto report = check_gradients(pi, [&] { return sft_loss(pi, ds, batch); }, 1e-5, 1e-4);
    CHECK(report.pass);
  }
  SUBCASE("dpo") {
    AutoregressivePolicy pi(cfg);
    ArConfig ref_cfg = cfg;
    ref_cfg.init_seed = 100;
    AutoregressivePolicy ref(ref_cfg);
    auto report = check_gradients(
        pi, [&] { return dpo_loss(pi, ref, ds, batch, DpoConfig{0.3}); }, 1e-5, 1e-4);
    CHECK(report.pass);
  }
  SUBCASE("drdo with a separate reward head") {
    ArConfig head_cfg = cfg;
    head_cfg.separate_reward_head = true;
    AutoregressivePolicy pi(head_cfg);
    RewardSnapshot oracle{{0.5, -0.2}, {-0.1, 0.3}};
    DrdoConfig dcfg;
    dcfg.alpha = 0.5;
    auto report = check_gradients(
        pi, [&] { return drdo_loss(pi, ds, batch, oracle, dcfg); }, 1e-5, 1e-4);
    CHECK(report.pass);
  }
  SUBCASE("oracle on the reward-model wrapper") {
    ArConfig head_cfg = cfg;
    head_cfg.separate_reward_head = true;
    ArRewardModel rm(head_cfg);
    OracleConfig ocfg;
    ocfg.alpha_sft = 0.25;
    auto report = check_gradients(
        rm, [&] { return oracle_loss(rm, ds, batch, ocfg); }, 1e-5, 1e-4);
    CHECK(report.pass);
  }
}
