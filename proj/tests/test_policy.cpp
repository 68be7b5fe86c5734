// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include <doctest.h>

#include "preflab/autoregressive.hpp"
#include "preflab/checkpoint.hpp"
#include "preflab/errors.hpp"
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

std::filesystem::path temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "preflab_policy_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("uniform tabular policy assigns -log(catalog size)") {
  TabularPolicy pi(single_catalog(4));
  Prompt x{0, {}};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pi.log_prob(x, pi.catalog(0)[i]) ==
          doctest::Approx(-1.3862943611198906).epsilon(1e-14));
  }
}

TEST_CASE("two-entry softmax with a unit logit gap") {
  TabularPolicy pi(single_catalog(2));
  pi.set_logit(0, 0, 1.0);
  Prompt x{0, {}};
  CHECK(pi.log_prob(x, pi.catalog(0)[0]) ==
        doctest::Approx(-0.3132616875182228).epsilon(1e-14));
  CHECK(pi.log_prob(x, pi.catalog(0)[1]) ==
        doctest::Approx(-1.3132616875182228).epsilon(1e-14));
}

TEST_CASE("log-probabilities are invariant to a per-row logit shift") {
  TabularPolicy pi(single_catalog(5));
  Rng rng(7);
  for (std::size_t i = 0; i < 5; ++i) pi.set_logit(0, i, rng.normal(0.0, 2.0));
  Prompt x{0, {}};
  std::vector<double> before;
  for (const Response& y : pi.catalog(0)) before.push_back(pi.log_prob(x, y));
  for (std::size_t i = 0; i < 5; ++i) pi.set_logit(0, i, pi.logit_at(0, i) + 7.25);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(pi.log_prob(x, pi.catalog(0)[i]) == doctest::Approx(before[i]).epsilon(1e-10));
  }
}

TEST_CASE("catalog distribution normalizes") {
  TabularPolicy pi(single_catalog(6));
  Rng rng(11);
  for (std::size_t i = 0; i < 6; ++i) pi.set_logit(0, i, rng.normal(0.0, 3.0));
  Prompt x{0, {}};
  double total = 0.0;
  for (const Response& y : pi.catalog(0)) total += std::exp(pi.log_prob(x, y));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  double psum = 0.0;
  for (double p : pi.probabilities(0)) psum += p;
  CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("student reward differences equal logit differences exactly") {
  TabularPolicy pi(single_catalog(2));
  pi.set_logit(0, 0, 3.0);
  pi.set_logit(0, 1, 1.0);
  Prompt x{0, {}};
  double diff = pi.student_reward(x, pi.catalog(0)[0]) - pi.student_reward(x, pi.catalog(0)[1]);
  CHECK(diff == 2.0);

  TabularPolicy uniform(single_catalog(4));
  for (std::size_t i = 0; i + 1 < 4; ++i) {
    CHECK(uniform.student_reward(x, uniform.catalog(0)[i]) ==
          uniform.student_reward(x, uniform.catalog(0)[i + 1]));
  }
}

TEST_CASE("log-prob gradient matches the softmax identity") {
  TabularPolicy pi(single_catalog(4));
  Rng rng(3);
  for (std::size_t i = 0; i < 4; ++i) pi.set_logit(0, i, rng.normal(0.0, 1.0));
  Prompt x{0, {}};
  std::vector<double> p = pi.probabilities(0);
  std::vector<double> grad(pi.num_params(), 0.0);
  pi.add_log_prob_grad(x, pi.catalog(0)[2], 1.5, grad);
  for (std::size_t j = 0; j < 4; ++j) {
    double expected = 1.5 * ((j == 2 ? 1.0 : 0.0) - p[j]);
    CHECK(grad[j] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("greedy decoding takes the argmax and breaks ties downward") {
  TabularPolicy pi(single_catalog(3));
  pi.set_logit(0, 1, 2.0);
  Prompt x{0, {}};
  SampleConfig cfg;
  cfg.greedy = true;
  CHECK(pi.sample(x, cfg) == pi.catalog(0)[1]);

  TabularPolicy flat(single_catalog(3));
  CHECK(flat.sample(x, cfg) == flat.catalog(0)[0]);

  TabularPolicy pair_tie(single_catalog(3));
  pair_tie.set_logit(0, 1, 5.0);
  pair_tie.set_logit(0, 2, 5.0);
  CHECK(pair_tie.sample(x, cfg) == pair_tie.catalog(0)[1]);
}

TEST_CASE("nucleus truncation drops the tail outside the mass budget") {
  TabularPolicy pi(single_catalog(3));
  pi.set_logit(0, 0, std::log(0.7));
  pi.set_logit(0, 1, std::log(0.2));
  pi.set_logit(0, 2, std::log(0.1));
  Prompt x{0, {}};
  SampleConfig cfg;
  cfg.top_p = 0.8;
  std::map<int, int> counts;
  for (int i = 0; i < 10000; ++i) {
    cfg.seed = static_cast<std::uint64_t>(i);
    ++counts[pi.sample(x, cfg).tokens[0]];
  }
  CHECK(counts[2] == 0);
  CHECK(counts[0] > 0);
  CHECK(counts[1] > 0);
  CHECK(counts[0] + counts[1] == 10000);
}

TEST_CASE("untruncated sampling frequencies track the softmax") {
  TabularPolicy pi(single_catalog(3));
  const double probs[] = {0.5, 0.3, 0.2};
  for (std::size_t i = 0; i < 3; ++i) pi.set_logit(0, i, std::log(probs[i]));
  Prompt x{0, {}};
  SampleConfig cfg;
  const int n = 100000;
  std::map<int, int> counts;
  for (int i = 0; i < n; ++i) {
    cfg.seed = derive_seed(99, "freq", static_cast<std::uint64_t>(i));
    ++counts[pi.sample(x, cfg).tokens[0]];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    double freq = static_cast<double>(counts[static_cast<int>(i)]) / n;
    double se = std::sqrt(probs[i] * (1.0 - probs[i]) / n);
    CHECK(std::abs(freq - probs[i]) <= 3.0 * se);
  }
}

TEST_CASE("sampling is a pure function of the seed") {
  TabularPolicy pi(single_catalog(4));
  Rng rng(5);
  for (std::size_t i = 0; i < 4; ++i) pi.set_logit(0, i, rng.normal(0.0, 1.0));
  Prompt x{0, {}};
  SampleConfig cfg;
  cfg.seed = 1234;
  Response first = pi.sample(x, cfg);
  CHECK(pi.sample(x, cfg) == first);

  bool any_different = false;
  for (std::uint64_t s = 0; s < 32 && !any_different; ++s) {
    cfg.seed = s;
    any_different = !(pi.sample(x, cfg) == first);
  }
  CHECK(any_different);
}

TEST_CASE("sample validation") {
  TabularPolicy pi(single_catalog(3));
  Prompt x{0, {}};
  SampleConfig cfg;
  cfg.top_p = 0.0;
  CHECK_THROWS_AS(pi.sample(x, cfg), InvalidArgument);
  cfg.top_p = 1.5;
  CHECK_THROWS_AS(pi.sample(x, cfg), InvalidArgument);
  cfg.top_p = 1.0;
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(pi.sample(x, cfg), InvalidArgument);
  cfg.temperature = 1.0;
  CHECK_THROWS_AS(pi.sample(Prompt{9, {}}, cfg), InvalidArgument);
  CHECK_THROWS_AS(pi.log_prob(x, Response{{42}}), InvalidArgument);
}

TEST_CASE("autoregressive per-step distributions normalize") {
  ArConfig cfg;
  cfg.vocab_size = 10;
  cfg.init_seed = 21;
  AutoregressivePolicy pi(cfg);
  std::vector<int> stream = {cfg.vocab_size, 3, 1, 4};  // BOS row is index vocab_size
  std::vector<double> logits = pi.next_token_logits(stream);
  REQUIRE(logits.size() == 10);
  double total = 0.0;
  for (double p : softmax(logits)) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("autoregressive sequence log-probability sums per-token terms") {
  ArConfig cfg;
  cfg.vocab_size = 12;
  cfg.init_seed = 8;
  AutoregressivePolicy pi(cfg);
  Prompt x{0, {2, 7}};
  Response y{{5, 0, 9}};

  std::vector<int> stream = {cfg.vocab_size};
  stream.insert(stream.end(), x.tokens.begin(), x.tokens.end());
  double manual = 0.0;
  for (int tok : y.tokens) {
    std::vector<double> logits = pi.next_token_logits(stream);
    manual += logits[static_cast<std::size_t>(tok)] - log_sum_exp(logits);
    stream.push_back(tok);
  }
  CHECK(pi.log_prob(x, y) == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("autoregressive parameter count matches its layer shapes") {
  ArConfig cfg;
  cfg.vocab_size = 9;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 7;
  AutoregressivePolicy pi(cfg);
  // (V+1) embedding rows for the BOS entry, recurrent core, output projection.
  std::size_t expected = static_cast<std::size_t>((9 + 1) * 5 + 7 * 5 + 7 * 7 + 7 + 9 * 7 + 9);
  CHECK(pi.num_params() == expected);

  cfg.separate_reward_head = true;
  AutoregressivePolicy with_head(cfg);
  CHECK(with_head.num_params() == expected + 7 + 1);

  std::size_t block_total = 0;
  for (const ParamBlock& b : with_head.param_blocks()) block_total += b.size;
  CHECK(block_total == with_head.num_params());
}

TEST_CASE("autoregressive sampling respects the token budget and determinism") {
  ArConfig cfg;
  cfg.vocab_size = 8;
  cfg.max_seq_len = 12;
  cfg.init_seed = 4;
  AutoregressivePolicy pi(cfg);
  Prompt x{0, {1, 2, 3}};
  SampleConfig sc;
  sc.seed = 77;
  sc.max_new_tokens = 5;
  Response a = pi.sample(x, sc);
  Response b = pi.sample(x, sc);
  CHECK(a == b);
  CHECK(a.tokens.size() <= 5);
  CHECK(!a.tokens.empty());
  for (int t : a.tokens) {
    CHECK(t >= 0);
    CHECK(t < cfg.vocab_size);
  }

  Prompt too_long{0, std::vector<int>(12, 1)};
  CHECK_THROWS_AS(pi.sample(too_long, sc), InvalidArgument);
}

TEST_CASE("tabular checkpoints round-trip through a world") {
  WorldSpec spec;
  spec.num_prompts = 3;
  spec.catalog_size = 4;
  spec.seed = 31;
  World world = build_world(spec);
  TabularPolicy pi = tabular_policy_for(world);
  Rng rng(101);
  for (double& p : pi.params()) p = rng.normal(0.0, 1.0);

  auto path = temp_file("tab_policy.txt");
  save_checkpoint(pi, path);
  auto loaded = load_policy_checkpoint(path, &world);
  REQUIRE(loaded->num_params() == pi.num_params());
  for (std::size_t i = 0; i < pi.num_params(); ++i) {
    CHECK(loaded->params()[i] == pi.params()[i]);
  }
  CHECK(loaded->backend() == "tabular");

  CHECK_THROWS_AS(load_policy_checkpoint(path, nullptr), ConfigError);
  CHECK_THROWS_AS(load_reward_model_checkpoint(path, &world), ConfigError);
}

TEST_CASE("autoregressive checkpoints round-trip standalone") {
  ArConfig cfg;
  cfg.vocab_size = 6;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 5;
  cfg.init_seed = 13;
  AutoregressivePolicy pi(cfg);

  auto path = temp_file("ar_policy.txt");
  save_checkpoint(pi, path);
  auto loaded = load_policy_checkpoint(path, nullptr);
  REQUIRE(loaded->num_params() == pi.num_params());
  for (std::size_t i = 0; i < pi.num_params(); ++i) {
    CHECK(loaded->params()[i] == pi.params()[i]);
  }
  Prompt x{0, {1, 2}};
  Response y{{3, 0}};
  CHECK(loaded->log_prob(x, y) == pi.log_prob(x, y));
}

TEST_CASE("reward model checkpoints keep kind and shape") {
  WorldSpec spec;
  spec.num_prompts = 2;
  spec.catalog_size = 3;
  spec.seed = 77;
  World world = build_world(spec);
  TabularRewardModel rm = tabular_reward_model_for(world, 5, 0.3);
  auto path = temp_file("tab_rm.txt");
  save_checkpoint(rm, path);
  auto loaded = load_reward_model_checkpoint(path, &world);
  Prompt x{1, world.prompts[1].tokens};
  CHECK(loaded->reward(x, world.catalogs[1][2]) == rm.reward(x, world.catalogs[1][2]));
  CHECK_THROWS_AS(load_policy_checkpoint(path, &world), ConfigError);

  WorldSpec other = spec;
  other.catalog_size = 5;
  other.seed = 78;
  World mismatched = build_world(other);
  CHECK_THROWS_AS(load_reward_model_checkpoint(path, &mismatched), ConfigError);
}

TEST_CASE("corrupt checkpoints fail loudly") {
  auto bad = temp_file("bad_ckpt.txt");
  {
    std::ofstream out(bad);
    out << "not a checkpoint\n";
  }
  CHECK_THROWS_AS(load_policy_checkpoint(bad, nullptr), VersionError);
  CHECK_THROWS_AS(load_policy_checkpoint(temp_file("missing_ckpt.txt"), nullptr), IoError);
}
