// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include <doctest.h>

#include "preflab/errors.hpp"
#include "preflab/gradcheck.hpp"
#include "preflab/optim.hpp"
#include "preflab/tabular.hpp"

using namespace preflab;

namespace {

TabularPolicy three_param_model() {
  std::vector<Response> cat = {Response{{0}}, Response{{1}}, Response{{2}}};
  return TabularPolicy({cat});
}

}  // namespace

TEST_CASE("AdamW first step from the origin") {
  std::vector<double> theta = {0.0};
  std::vector<double> grad = {1.0};
  AdamW opt(1, AdamWConfig{});
  opt.step(theta, grad, 0.1);
  // Bias correction makes the first step lr * g / (|g| + eps) regardless of betas.
  CHECK(theta[0] == -(0.1 * (1.0 / (1.0 + 1e-8))));
  CHECK(theta[0] == doctest::Approx(-0.09999999900000001).epsilon(1e-15));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("zero gradients leave only decoupled decay") {
  std::vector<double> theta = {2.0, -3.0};
  std::vector<double> grad = {0.0, 0.0};
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  AdamW opt(2, cfg);
  opt.step(theta, grad, 0.1);
  CHECK(theta[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-15));
  CHECK(theta[1] == doctest::Approx(-3.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-15));

  opt.step(theta, grad, 0.1);
  CHECK(theta[0] == doctest::Approx(2.0 * std::pow(1.0 - 0.001, 2.0)).epsilon(1e-14));
}

TEST_CASE("weight decay is decoupled from the moment estimates") {
  std::vector<double> plain = {1.5};
  std::vector<double> decayed = {1.5};
  AdamWConfig with_decay;
  with_decay.weight_decay = 0.2;
  AdamW opt_plain(1, AdamWConfig{});
  AdamW opt_decay(1, with_decay);

  std::vector<double> grad = {0.7};
  opt_plain.step(plain, grad, 0.05);
  opt_decay.step(decayed, grad, 0.05);
  // Identical gradient history means identical moments; the runs differ by
  // exactly the decay term applied to the pre-step parameter.
  CHECK(decayed[0] == doctest::Approx(plain[0] - 0.05 * 0.2 * 1.5).epsilon(1e-15));
}

TEST_CASE("AdamW configuration validation") {
  CHECK_THROWS_AS(AdamW(1, AdamWConfig{1.0, 0.999, 1e-8, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(AdamW(1, AdamWConfig{0.9, -0.1, 1e-8, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(AdamW(1, AdamWConfig{0.9, 0.999, 0.0, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(AdamW(1, AdamWConfig{0.9, 0.999, 1e-8, -0.5}), InvalidArgument);

  AdamW opt(2, AdamWConfig{});
  std::vector<double> theta = {0.0};
  std::vector<double> grad = {0.0};
  CHECK_THROWS_AS(opt.step(theta, grad, 0.1), InvalidArgument);
}

TEST_CASE("learning-rate schedule: linear warmup then cosine decay to zero") {
  LrSchedule sched{0.1, 4, 20};
  CHECK(sched.at(0) == 0.0);
  CHECK(sched.at(1) == doctest::Approx(0.025).epsilon(1e-15));
  CHECK(sched.at(2) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(sched.at(4) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(sched.at(12) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(sched.at(20) == 0.0);
  CHECK(sched.at(25) == 0.0);

  double prev = sched.at(4);
  for (std::size_t s = 5; s <= 20; ++s) {
    double cur = sched.at(s);
    CHECK(cur <= prev);
    prev = cur;
  }

  LrSchedule no_warmup{0.05, 0, 10};
  CHECK(no_warmup.at(0) == doctest::Approx(0.05).epsilon(1e-15));

  LrSchedule bad{0.1, 30, 20};
  CHECK_THROWS_AS(bad.at(0), InvalidArgument);
}

TEST_CASE("gradient check accepts an exact analytic gradient") {
  TabularPolicy model = three_param_model();
  const std::vector<double> c = {0.3, -1.1, 0.7};
  auto objective = [&]() {
    LossEvaluation ev;
    ev.gradient.assign(model.num_params(), 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      ev.value += c[i] * model.params()[i];
      ev.gradient[i] = c[i];
    }
    return ev;
  };
  GradCheckReport report = check_gradients(model, objective);
  CHECK(report.pass);
  CHECK(report.max_rel_error < 1e-7);
  CHECK(report.h == 1e-5);
  CHECK(report.tolerance == 1e-5);
  REQUIRE(!report.blocks.empty());
  CHECK(report.blocks[0].name == "logits[0]");
}

TEST_CASE("gradient check flags a corrupted coordinate") {
  TabularPolicy model = three_param_model();
  auto objective = [&]() {
    LossEvaluation ev;
    ev.gradient.assign(model.num_params(), 0.0);
    for (std::size_t i = 0; i < model.num_params(); ++i) {
      ev.value += 0.5 * model.params()[i] * model.params()[i];
      ev.gradient[i] = model.params()[i];
    }
    ev.gradient[1] += 0.01;
    return ev;
  };
  for (std::size_t i = 0; i < model.num_params(); ++i) model.set_logit(0, i, 0.4 + 0.3 * i);
  GradCheckReport report = check_gradients(model, objective);
  CHECK(!report.pass);
  CHECK(report.max_rel_error > 1e-3);
  CHECK(report.blocks[0].worst_param == 1);
}

TEST_CASE("gradient check restores parameters after probing") {
  TabularPolicy model = three_param_model();
  model.set_logit(0, 0, 1.25);
  model.set_logit(0, 1, -0.5);
  auto objective = [&]() {
    LossEvaluation ev;
    ev.gradient.assign(model.num_params(), 0.0);
    for (std::size_t i = 0; i < model.num_params(); ++i) {
      ev.value += model.params()[i];
      ev.gradient[i] = 1.0;
    }
    return ev;
  };
  check_gradients(model, objective);
  CHECK(model.logit_at(0, 0) == 1.25);
  CHECK(model.logit_at(0, 1) == -0.5);
  CHECK(model.logit_at(0, 2) == 0.0);
}
