// SPDX-License-Identifier: Apache-2.0
#include "preflab/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "preflab/dataio.hpp"
#include "preflab/errors.hpp"
#include "preflab/optim.hpp"
#include "preflab/rng.hpp"

namespace preflab {

namespace {

constexpr double kTabularDefaultLr = 0.05;
constexpr double kArDefaultLr = 1e-3;

// Deterministic epoch-shuffled batch cursor. Every epoch gets its own derived
// permutation; batches wrap across epoch boundaries so they are always full.
class Batcher {
 public:
  Batcher(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
      : n_(dataset_size), batch_size_(batch_size), seed_(seed) {
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> batch;
    batch.reserve(batch_size_);
    while (batch.size() < batch_size_) {
      if (pos_ == n_) {
        ++epoch_;
        reshuffle();
      }
      batch.push_back(order_[pos_++]);
    }
    return batch;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, "shuffle", epoch_));
    for (std::size_t k = n_; k > 1; --k) {
      std::size_t j = rng.uniform_below(k);
      std::swap(order_[k - 1], order_[j]);
    }
    pos_ = 0;
  }

  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
};

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void write_metrics_csv(std::span<const MetricRecord> metrics, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open metrics file for writing: " + path.string());
  out << "step,loss,bt_accuracy,reward_advantage,logp_chosen,logp_rejected,lr\n";
  for (const MetricRecord& m : metrics) {
    out << m.step << ',' << format_double(m.loss) << ',' << format_double(m.bt_accuracy) << ','
        << format_double(m.reward_advantage) << ',' << format_double(m.logp_chosen) << ','
        << format_double(m.logp_rejected) << ',' << format_double(m.lr) << '\n';
  }
  if (!out) throw IoError("failed writing metrics file: " + path.string());
}

std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("metrics file is empty", 1);
  if (line != "step,loss,bt_accuracy,reward_advantage,logp_chosen,logp_rejected,lr") {
    throw ParseError("unexpected metrics header '" + line + "'", 1);
  }
  std::vector<MetricRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    MetricRecord m;
    auto next_field = [&]() {
      if (!std::getline(ss, field, ',')) throw ParseError("truncated metrics row", line_no);
      return field;
    };
    m.step = std::stoul(next_field());
    m.loss = std::stod(next_field());
    m.bt_accuracy = std::stod(next_field());
    m.reward_advantage = std::stod(next_field());
    m.logp_chosen = std::stod(next_field());
    m.logp_rejected = std::stod(next_field());
    m.lr = std::stod(next_field());
    out.push_back(m);
  }
  return out;
}

void TrainConfig::validate() const {
  if (steps < 1) throw InvalidArgument("TrainConfig: steps must be >= 1");
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (eval_every < 1) throw InvalidArgument("TrainConfig: eval_every must be >= 1");
  if (warmup_steps > steps) throw InvalidArgument("TrainConfig: warmup_steps exceeds steps");
  if (learning_rate && !(*learning_rate > 0.0)) {
    throw InvalidArgument("TrainConfig: learning_rate must be positive");
  }
  if (weight_decay < 0.0) throw InvalidArgument("TrainConfig: weight_decay must be >= 0");
  if (!(beta > 0.0)) throw InvalidArgument("TrainConfig: beta must be positive");
  if (drdo.alpha < 0.0) throw InvalidArgument("TrainConfig: alpha must be >= 0");
  if (drdo.gamma < 0.0) throw InvalidArgument("TrainConfig: gamma must be >= 0");
  if (!(oracle.alpha_sft >= 0.0 && oracle.alpha_sft <= 1.0)) {
    throw InvalidArgument("TrainConfig: alpha_sft must lie in [0, 1]");
  }
  if (ensemble_size < 1) throw InvalidArgument("TrainConfig: ensemble_size must be >= 1");
}

double TrainConfig::resolved_lr(std::string_view backend) const {
  if (learning_rate) return *learning_rate;
  return backend == "tabular" ? kTabularDefaultLr : kArDefaultLr;
}

ParamModel& Objective::model() const {
  switch (type) {
    case LossType::Sft:
    case LossType::Dpo:
    case LossType::Edpo:
    case LossType::Drdo:
      if (policy == nullptr) throw InvalidArgument("objective: policy is required");
      return *policy;
    case LossType::Rm:
    case LossType::Oracle:
      if (reward_model == nullptr) throw InvalidArgument("objective: reward model is required");
      return *reward_model;
  }
  throw InvalidArgument("objective: unknown loss type");
}

void Objective::validate(const ObjectiveData& data) const {
  if (data.ds == nullptr) throw InvalidArgument("objective: dataset is required");
  model();  // checks the trained model is present
  if ((type == LossType::Dpo || type == LossType::Edpo) && reference == nullptr) {
    throw ConfigError("objective: dpo/edpo need a reference policy");
  }
  if (type == LossType::Drdo && data.oracle == nullptr) {
    throw ConfigError("objective: drdo needs teacher rewards");
  }
  if (type == LossType::Edpo && data.ensemble.empty()) {
    throw ConfigError("objective: edpo needs at least one reward snapshot");
  }
}

LossEvaluation Objective::evaluate(const ObjectiveData& data, Batch batch) const {
  validate(data);
  switch (type) {
    case LossType::Sft:
      return sft_loss(*policy, *data.ds, batch);
    case LossType::Rm:
      return rm_loss(*reward_model, *data.ds, batch);
    case LossType::Oracle:
      return oracle_loss(*reward_model, *data.ds, batch, oracle_cfg);
    case LossType::Dpo:
      return dpo_loss(*policy, *reference, *data.ds, batch, DpoConfig{beta});
    case LossType::Edpo:
      return edpo_loss(*policy, *reference, *data.ds, batch, data.ensemble, beta);
    case LossType::Drdo:
      return drdo_loss(*policy, *data.ds, batch, *data.oracle, drdo);
  }
  throw InvalidArgument("objective: unknown loss type");
}

double Objective::ranking_score(const Prompt& x, const Response& y) const {
  switch (type) {
    case LossType::Sft:
    case LossType::Drdo:
      return policy->student_reward(x, y);
    case LossType::Dpo:
    case LossType::Edpo:
      return beta * (policy->log_prob(x, y) - reference->log_prob(x, y));
    case LossType::Rm:
    case LossType::Oracle:
      return reward_model->reward(x, y);
  }
  throw InvalidArgument("objective: unknown loss type");
}

double Objective::metric_log_prob(const Prompt& x, const Response& y) const {
  if (type == LossType::Rm || type == LossType::Oracle) {
    return reward_model->lm_log_prob(x, y);
  }
  return policy->log_prob(x, y);
}

namespace {

MetricRecord metric_row(const Objective& obj, const ObjectiveData& eval_data,
                        const EvalContext& ctx, const TrainConfig& cfg, std::size_t step,
                        double lr) {
  const PreferenceDataset& ds = *eval_data.ds;
  MetricRecord m;
  m.step = step;
  m.lr = lr;
  std::vector<std::size_t> idx = all_indices(ds);
  m.loss = obj.evaluate(eval_data, idx).value;

  double acc = 0.0, lp_w = 0.0, lp_l = 0.0;
  for (const PreferencePair& pair : ds.pairs) {
    double s_w = obj.ranking_score(pair.prompt, pair.chosen);
    double s_l = obj.ranking_score(pair.prompt, pair.rejected);
    acc += s_w > s_l ? 1.0 : (s_w == s_l ? 0.5 : 0.0);
    lp_w += obj.metric_log_prob(pair.prompt, pair.chosen);
    lp_l += obj.metric_log_prob(pair.prompt, pair.rejected);
  }
  double n = static_cast<double>(ds.pairs.size());
  m.bt_accuracy = acc / n;
  m.logp_chosen = lp_w / n;
  m.logp_rejected = lp_l / n;

  if (ctx.judge != nullptr && obj.policy != nullptr && obj.type != LossType::Rm &&
      obj.type != LossType::Oracle) {
    // Standardized reward edge of fresh samples over the chosen responses.
    std::vector<double> sampled, baseline;
    sampled.reserve(ds.pairs.size());
    baseline.reserve(ds.pairs.size());
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
      const PreferencePair& pair = ds.pairs[i];
      SampleConfig sc;
      sc.temperature = ctx.eval_temperature;
      sc.top_p = ctx.eval_top_p;
      sc.seed = derive_seed(cfg.seed, "eval.sample", step * 1000003ULL + i);
      Response y = obj.policy->sample(pair.prompt, sc);
      sampled.push_back(ctx.judge->reward(pair.prompt, y));
      baseline.push_back(ctx.judge->reward(pair.prompt, pair.chosen));
    }
    double mean = 0.0;
    for (double r : sampled) mean += r;
    for (double r : baseline) mean += r;
    mean /= static_cast<double>(sampled.size() + baseline.size());
    double var = 0.0;
    for (double r : sampled) var += (r - mean) * (r - mean);
    for (double r : baseline) var += (r - mean) * (r - mean);
    var /= static_cast<double>(sampled.size() + baseline.size());
    double sd = std::sqrt(var);
    if (sd > 0.0) {
      double edge = 0.0;
      for (std::size_t i = 0; i < sampled.size(); ++i) edge += (sampled[i] - baseline[i]) / sd;
      m.reward_advantage = edge / static_cast<double>(sampled.size());
    }
  }
  return m;
}

}  // namespace

RunArtifacts run_training(const Objective& objective, const ObjectiveData& train_data,
                          const TrainConfig& cfg, const EvalContext& ctx) {
  auto start = std::chrono::steady_clock::now();
  cfg.validate();
  objective.validate(train_data);
  if (train_data.ds->pairs.empty()) {
    throw InvalidArgument("training: dataset is empty (usable for statistics only)");
  }

  ObjectiveData eval_data = train_data;
  if (ctx.eval_ds != nullptr) {
    eval_data.ds = ctx.eval_ds;
    eval_data.oracle = ctx.eval_oracle;
    eval_data.ensemble = ctx.eval_ensemble;
  }

  ParamModel& model = objective.model();
  std::string_view backend =
      objective.policy != nullptr ? objective.policy->backend() : objective.reward_model->backend();
  LrSchedule schedule{cfg.resolved_lr(backend), cfg.warmup_steps, cfg.steps};
  AdamW optimizer(model.num_params(), AdamWConfig{.weight_decay = cfg.weight_decay});
  Batcher batcher(train_data.ds->pairs.size(), cfg.batch_size, cfg.seed);

  RunArtifacts artifacts;
  std::vector<double> last_good(model.params().begin(), model.params().end());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (step % cfg.eval_every == 0) {
      artifacts.metrics.push_back(
          metric_row(objective, eval_data, ctx, cfg, step, schedule.at(step)));
      if (ctx.on_eval) ctx.on_eval(step, artifacts.metrics.back());
    }
    std::vector<std::size_t> batch = batcher.next();
    LossEvaluation ev;
    bool diverged = false;
    try {
      ev = objective.evaluate(train_data, batch);
    } catch (const NumericalFailure&) {
      diverged = true;
    }
    if (!diverged && (!std::isfinite(ev.value) || !all_finite(ev.gradient))) {
      diverged = true;
    }
    if (diverged) {
      std::copy(last_good.begin(), last_good.end(), model.params().begin());
      artifacts.aborted = true;
      artifacts.completed_steps = step;
      break;
    }
    last_good.assign(model.params().begin(), model.params().end());
    optimizer.step(model.params(), ev.gradient, schedule.at(step));
    artifacts.completed_steps = step + 1;
  }
  artifacts.metrics.push_back(metric_row(objective, eval_data, ctx, cfg, artifacts.completed_steps,
                                         schedule.at(artifacts.completed_steps)));
  if (ctx.on_eval) ctx.on_eval(artifacts.completed_steps, artifacts.metrics.back());
  artifacts.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return artifacts;
}

namespace {

TrainConfig with_loss(TrainConfig cfg, LossType t) {
  cfg.loss = t;
  return cfg;
}

}  // namespace

RunArtifacts train_sft(Policy& policy, const PreferenceDataset& ds, const TrainConfig& cfg,
                       const EvalContext& ctx) {
  Objective obj;
  obj.type = LossType::Sft;
  obj.policy = &policy;
  return run_training(obj, {.ds = &ds}, with_loss(cfg, LossType::Sft), ctx);
}

RunArtifacts train_rm(RewardModel& model, const PreferenceDataset& ds, const TrainConfig& cfg,
                      const EvalContext& ctx) {
  Objective obj;
  obj.type = LossType::Rm;
  obj.reward_model = &model;
  return run_training(obj, {.ds = &ds}, with_loss(cfg, LossType::Rm), ctx);
}

RunArtifacts train_oracle(RewardModel& model, const PreferenceDataset& ds, const TrainConfig& cfg,
                          const EvalContext& ctx) {
  Objective obj;
  obj.type = LossType::Oracle;
  obj.reward_model = &model;
  obj.oracle_cfg = cfg.oracle;
  return run_training(obj, {.ds = &ds}, with_loss(cfg, LossType::Oracle), ctx);
}

RunArtifacts train_dpo(Policy& policy, const Policy& reference, const PreferenceDataset& ds,
                       const TrainConfig& cfg, const EvalContext& ctx) {
  Objective obj;
  obj.type = LossType::Dpo;
  obj.policy = &policy;
  obj.reference = &reference;
  obj.beta = cfg.beta;
  return run_training(obj, {.ds = &ds}, with_loss(cfg, LossType::Dpo), ctx);
}

RunArtifacts train_edpo(Policy& policy, const Policy& reference, const PreferenceDataset& ds,
                        std::span<const RewardSnapshot> ensemble, const TrainConfig& cfg,
                        const EvalContext& ctx) {
  Objective obj;
  obj.type = LossType::Edpo;
  obj.policy = &policy;
  obj.reference = &reference;
  obj.beta = cfg.beta;
  return run_training(obj, {.ds = &ds, .ensemble = ensemble}, with_loss(cfg, LossType::Edpo), ctx);
}

RunArtifacts train_drdo(Policy& policy, const PreferenceDataset& ds, const RewardSnapshot& oracle,
                        const TrainConfig& cfg, const EvalContext& ctx) {
  Objective obj;
  obj.type = LossType::Drdo;
  obj.policy = &policy;
  obj.drdo = cfg.drdo;
  return run_training(obj, {.ds = &ds, .oracle = &oracle}, with_loss(cfg, LossType::Drdo), ctx);
}

std::vector<EnsembleMember> train_reward_ensemble(
    const std::function<std::unique_ptr<RewardModel>(std::uint64_t member_seed)>& make_model,
    const PreferenceDataset& ds, const TrainConfig& cfg, std::size_t k) {
  if (k < 1) throw InvalidArgument("train_reward_ensemble: k must be >= 1");
  if (cfg.loss != LossType::Rm && cfg.loss != LossType::Oracle) {
    throw InvalidArgument("train_reward_ensemble: members train with rm or oracle loss");
  }
  std::vector<EnsembleMember> members;
  members.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::uint64_t member_seed = derive_seed(cfg.seed, "ensemble", i);
    TrainConfig member_cfg = cfg;
    member_cfg.seed = member_seed;
    EnsembleMember member;
    member.model = make_model(member_seed);
    member.artifacts = cfg.loss == LossType::Rm
                           ? train_rm(*member.model, ds, member_cfg)
                           : train_oracle(*member.model, ds, member_cfg);
    members.push_back(std::move(member));
  }
  return members;
}

std::vector<double> dpo_beta_grid() { return {0.1, 0.5, 1.0, 10.0}; }

std::vector<std::pair<double, double>> drdo_alpha_gamma_grid() {
  std::vector<std::pair<double, double>> grid;
  for (double alpha : {0.1, 1.0}) {
    for (double gamma : {0.0, 1.0, 2.0, 5.0}) grid.emplace_back(alpha, gamma);
  }
  return grid;
}

std::vector<SweepCell> make_beta_sweep(const TrainConfig& base) {
  std::vector<SweepCell> cells;
  for (double beta : dpo_beta_grid()) {
    TrainConfig cfg = base;
    cfg.beta = beta;
    cells.push_back({"beta=" + format_double(beta), cfg});
  }
  return cells;
}

std::vector<SweepCell> make_drdo_sweep(const TrainConfig& base) {
  std::vector<SweepCell> cells;
  for (auto [alpha, gamma] : drdo_alpha_gamma_grid()) {
    TrainConfig cfg = base;
    cfg.loss = LossType::Drdo;
    cfg.drdo.alpha = alpha;
    cfg.drdo.gamma = gamma;
    cells.push_back({"alpha=" + format_double(alpha) + ",gamma=" + format_double(gamma), cfg});
  }
  return cells;
}

}  // namespace preflab
