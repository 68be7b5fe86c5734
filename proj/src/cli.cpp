// SPDX-License-Identifier: Apache-2.0
#include "preflab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "preflab/autoregressive.hpp"
#include "preflab/checkpoint.hpp"
#include "preflab/dataio.hpp"
#include "preflab/errors.hpp"
#include "preflab/evaluation.hpp"
#include "preflab/gradcheck.hpp"
#include "preflab/losses.hpp"
#include "preflab/rng.hpp"
#include "preflab/synthworld.hpp"
#include "preflab/tabular.hpp"
#include "preflab/training.hpp"

namespace preflab {

namespace fs = std::filesystem;

const std::map<std::string, std::string>& known_config_keys() {
  static const std::map<std::string, std::string> keys = {
      {"num_prompts", "prompts in a generated world"},
      {"catalog_size", "responses per prompt"},
      {"vocab_size", "token alphabet size"},
      {"response_min_len", "shortest generated response"},
      {"response_max_len", "longest generated response"},
      {"reward_mean", "mean of the true catalog rewards"},
      {"reward_std", "spread of the true catalog rewards"},

      {"num_pairs", "preference pairs to draw"},
      {"nd_fraction", "share of near-tie pairs"},
      {"nd_epsilon", "near-tie band around p = 0.5"},
      {"label_noise", "bt_sampling or hard_labels"},
      {"confidence_noise", "jitter the simulated confidence scores"},

      {"loss_type", "sft, rm, oracle, dpo, edpo or drdo"},
      {"learning_rate", "base step size; backend default when unset"},
      {"lr_scheduler_type", "decay shape; cosine is the only one"},
      {"weight_decay", "AdamW decoupled decay"},
      {"per_device_train_batch_size", "pairs per update"},
      {"max_steps", "optimizer updates"},
      {"eval_steps", "metric row cadence"},
      {"warmup_steps", "linear warmup length"},
      {"alpha", "weight of the drdo contrastive term"},
      {"gamma", "drdo focal exponent"},
      {"beta", "dpo/edpo log-ratio scale"},
      {"alpha_sft", "likelihood-regularizer weight for reward training"},
      {"ensemble_size", "reward models in an ensemble"},

      {"backend", "tabular or autoregressive"},
      {"embed_dim", "autoregressive embedding width"},
      {"hidden_dim", "autoregressive recurrent width"},
      {"max_seq_len", "autoregressive sequence budget"},
      {"max_new_tokens", "sampling budget per response"},
      {"init_std", "parameter init spread for reward models"},

      {"world", "world JSON to load"},
      {"dataset", "training pairs JSONL"},
      {"eval_dataset", "held-out pairs JSONL"},
      {"rewards_file", "teacher rewards JSONL; comma list for edpo"},
      {"eval_rewards_file", "teacher rewards aligned with eval_dataset"},
      {"init_checkpoint", "starting parameters"},
      {"reference_checkpoint", "frozen reference policy"},
      {"oracle_checkpoint", "trained reward model used as judge or teacher"},
      {"policy_a", "first policy checkpoint to compare"},
      {"policy_b", "second policy checkpoint to compare"},
      {"output_prefix", "basename for split outputs"},

      {"temperature", "sampling temperature"},
      {"top_p", "nucleus mass"},
      {"probe", "emit degeneracy.csv during eval"},
      {"eval_advantage", "emit advantage.csv / metric column"},

      {"seed", "root seed; every stream derives from it"},
      {"sft_steps", "lemma-probe warm-start length"},
      {"rm_steps", "lemma-probe teacher training length"},
  };
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void check_known(const std::string& key) {
  if (known_config_keys().count(key) == 0) {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace

KvConfig KvConfig::parse_text(std::string_view text) {
  KvConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError("expected 'key = value', got '" + t + "'", line_no);
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (value.empty()) throw ParseError("empty value for key '" + key + "'", line_no);
    check_known(key);
    if (cfg.entries_.count(key) != 0) throw ConfigError("duplicate config key '" + key + "'");
    cfg.entries_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::parse_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

bool KvConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

void KvConfig::set(const std::string& key, const std::string& value) {
  check_known(key);
  entries_[key] = value;
}

std::string KvConfig::lookup(const std::string& key, const std::string& fallback,
                             bool required) const {
  check_known(key);
  auto it = entries_.find(key);
  if (it != entries_.end()) {
    resolved_[key] = it->second;
    return it->second;
  }
  if (required) throw ConfigError("missing required config key '" + key + "'");
  resolved_[key] = fallback;
  return fallback;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  return lookup(key, fallback, false);
}

std::string KvConfig::require_string(const std::string& key) const { return lookup(key, "", true); }

double KvConfig::get_double(const std::string& key, double fallback) const {
  std::string raw = lookup(key, format_double(fallback), false);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc{} || ptr != raw.data() + raw.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + raw + "'");
  }
  return value;
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  std::string raw = lookup(key, std::to_string(fallback), false);
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc{} || ptr != raw.data() + raw.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + raw +
                      "'");
  }
  return value;
}

int KvConfig::get_int(const std::string& key, int fallback) const {
  std::string raw = lookup(key, std::to_string(fallback), false);
  int value = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc{} || ptr != raw.data() + raw.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + raw + "'");
  }
  return value;
}

std::size_t KvConfig::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  std::string raw = lookup(key, fallback ? "true" : "false", false);
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + raw + "'");
}

std::string KvConfig::resolved_text() const {
  std::map<std::string, std::string> merged = resolved_;
  for (const auto& [k, v] : entries_) merged[k] = v;
  std::string out;
  for (const auto& [k, v] : merged) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

namespace {

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
};

KvConfig load_config(const GlobalArgs& g) {
  KvConfig cfg = g.config_path.empty() ? KvConfig{} : KvConfig::parse_file(g.config_path);
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  return cfg;
}

fs::path require_out_dir(const GlobalArgs& g) {
  if (g.out_dir.empty()) throw ConfigError("this command needs --out <dir>");
  fs::path dir(g.out_dir);
  if (!fs::is_directory(dir)) {
    throw IoError("output directory does not exist: " + dir.string());
  }
  return dir;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw IoError("failed writing: " + path.string());
}

void write_resolved_config(const KvConfig& cfg, const fs::path& dir, const std::string& command) {
  write_text_file(dir / (command + ".resolved.cfg"), cfg.resolved_text());
}

void say(const GlobalArgs& g, const std::string& msg) {
  if (!g.quiet) std::cout << msg << '\n';
}

WorldSpec world_spec_from(const KvConfig& cfg) {
  WorldSpec spec;
  spec.num_prompts = cfg.get_int("num_prompts", spec.num_prompts);
  spec.catalog_size = cfg.get_int("catalog_size", spec.catalog_size);
  spec.vocab_size = cfg.get_int("vocab_size", spec.vocab_size);
  spec.response_min_len = cfg.get_int("response_min_len", spec.response_min_len);
  spec.response_max_len = cfg.get_int("response_max_len", spec.response_max_len);
  spec.reward_mean = cfg.get_double("reward_mean", spec.reward_mean);
  spec.reward_std = cfg.get_double("reward_std", spec.reward_std);
  spec.seed = cfg.get_u64("seed", 0);
  spec.validate();
  return spec;
}

GenerationPlan plan_from(const KvConfig& cfg) {
  GenerationPlan plan;
  plan.num_pairs = cfg.get_int("num_pairs", plan.num_pairs);
  plan.nd_fraction = cfg.get_double("nd_fraction", plan.nd_fraction);
  plan.nd_epsilon = cfg.get_double("nd_epsilon", plan.nd_epsilon);
  std::string noise = cfg.get_string("label_noise", "bt_sampling");
  if (noise == "bt_sampling") {
    plan.label_noise = LabelNoise::BtSampling;
  } else if (noise == "hard_labels") {
    plan.label_noise = LabelNoise::HardLabels;
  } else {
    throw ConfigError("label_noise must be bt_sampling or hard_labels, got '" + noise + "'");
  }
  plan.confidence_noise = cfg.get_bool("confidence_noise", false);
  plan.seed = cfg.get_u64("seed", 0);
  plan.validate();
  return plan;
}

// Loads the world named by the config, or builds one from the world keys.
World obtain_world(const KvConfig& cfg, bool* loaded_from_file = nullptr) {
  if (cfg.has("world")) {
    if (loaded_from_file != nullptr) *loaded_from_file = true;
    return load_world(cfg.require_string("world"));
  }
  if (loaded_from_file != nullptr) *loaded_from_file = false;
  return build_world(world_spec_from(cfg));
}

TrainConfig train_config_from(const KvConfig& cfg) {
  TrainConfig t;
  t.loss = parse_loss_type(cfg.require_string("loss_type"));
  std::string sched = cfg.get_string("lr_scheduler_type", "cosine");
  if (sched != "cosine") {
    throw ConfigError("lr_scheduler_type '" + sched + "' (cosine is the only one implemented)");
  }
  if (cfg.has("learning_rate")) t.learning_rate = cfg.get_double("learning_rate", 0.0);
  t.weight_decay = cfg.get_double("weight_decay", t.weight_decay);
  t.batch_size = cfg.get_size("per_device_train_batch_size", t.batch_size);
  t.steps = cfg.get_size("max_steps", t.steps);
  t.eval_every = cfg.get_size("eval_steps", t.eval_every);
  t.warmup_steps = cfg.get_size("warmup_steps", t.warmup_steps);
  t.beta = cfg.get_double("beta", t.beta);
  t.drdo.alpha = cfg.get_double("alpha", t.drdo.alpha);
  t.drdo.gamma = cfg.get_double("gamma", t.drdo.gamma);
  t.oracle.alpha_sft = cfg.get_double("alpha_sft", t.oracle.alpha_sft);
  t.ensemble_size = cfg.get_size("ensemble_size", t.ensemble_size);
  t.seed = cfg.get_u64("seed", 0);
  t.validate();
  return t;
}

ArConfig ar_config_from(const KvConfig& cfg, std::uint64_t init_seed) {
  ArConfig a;
  a.vocab_size = cfg.get_int("vocab_size", a.vocab_size);
  a.embed_dim = cfg.get_int("embed_dim", a.embed_dim);
  a.hidden_dim = cfg.get_int("hidden_dim", a.hidden_dim);
  a.max_seq_len = cfg.get_int("max_seq_len", a.max_seq_len);
  a.init_std = cfg.get_double("init_std", a.init_std);
  a.init_seed = init_seed;
  return a;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, ',')) {
    std::string t = trim(part);
    if (!t.empty()) parts.push_back(t);
  }
  return parts;
}

std::vector<RewardSnapshot> load_snapshot_list(const std::string& paths_csv,
                                               std::size_t expected_pairs) {
  std::vector<RewardSnapshot> snapshots;
  for (const std::string& p : split_commas(paths_csv)) {
    snapshots.push_back(load_reward_snapshot(p, expected_pairs));
  }
  if (snapshots.empty()) throw ConfigError("rewards_file lists no paths");
  return snapshots;
}

std::string metric_line(const MetricRecord& m) {
  std::ostringstream out;
  out << "step=" << m.step << " loss=" << format_double(m.loss)
      << " bt_accuracy=" << format_double(m.bt_accuracy)
      << " reward_advantage=" << format_double(m.reward_advantage)
      << " logp_chosen=" << format_double(m.logp_chosen)
      << " logp_rejected=" << format_double(m.logp_rejected) << " lr=" << format_double(m.lr);
  return out.str();
}

// ---------------------------------------------------------------- commands

int cmd_gen_world(const GlobalArgs& g) {
  KvConfig cfg = load_config(g);
  fs::path out = require_out_dir(g);
  World world = build_world(world_spec_from(cfg));
  save_world(world, out / "world.json");
  write_resolved_config(cfg, out, "gen-world");
  say(g, "wrote " + (out / "world.json").string());
  return 0;
}

int cmd_gen_data(const GlobalArgs& g) {
  KvConfig cfg = load_config(g);
  fs::path out = require_out_dir(g);
  GenerationPlan plan = plan_from(cfg);
  bool loaded = false;
  World world = obtain_world(cfg, &loaded);
  PreferenceDataset ds = sample_preference_dataset(world, plan);
  if (!loaded) save_world(world, out / "world.json");
  save_dataset(ds, out / "dataset.jsonl");
  write_resolved_config(cfg, out, "gen-data");
  say(g, "wrote " + (out / "dataset.jsonl").string() + " (" + std::to_string(ds.pairs.size()) +
             " pairs)");
  return 0;
}

int cmd_split(const GlobalArgs& g) {
  KvConfig cfg = load_config(g);
  fs::path out = require_out_dir(g);
  std::string input = cfg.require_string("dataset");
  PreferenceDataset ds = load_dataset(input);
  std::string prefix = cfg.get_string("output_prefix", fs::path(input).stem().string());
  SplitResult split = split_by_confidence_and_edit_distance(ds);
  save_dataset(split.high_conf_high_edit, out / (prefix + "_hc_he.jsonl"));
  save_dataset(split.low_conf_low_edit, out / (prefix + "_lc_le.jsonl"));
  write_split_report_csv(split.report, out / (prefix + "_report.csv"));
  write_resolved_config(cfg, out, "split");
  say(g, "split " + std::to_string(ds.pairs.size()) + " pairs into " +
             std::to_string(split.high_conf_high_edit.pairs.size()) + " hc_he and " +
             std::to_string(split.low_conf_low_edit.pairs.size()) + " lc_le");
  return 0;
}

int cmd_precompute_rewards(const GlobalArgs& g) {
  KvConfig cfg = load_config(g);
  fs::path out = require_out_dir(g);
  PreferenceDataset ds = load_dataset(cfg.require_string("dataset"));

  std::optional<World> world;
  if (cfg.has("world")) world = load_world(cfg.require_string("world"));
  std::unique_ptr<RewardModel> oracle_model;
  std::optional<TrueRewards> truth;
  const RewardSource* teacher = nullptr;
  if (cfg.has("oracle_checkpoint")) {
    oracle_model = load_reward_model_checkpoint(cfg.require_string("oracle_checkpoint"),
                                                world ? &*world : nullptr);
    teacher = oracle_model.get();
  } else if (world) {
    truth.emplace(*world);
    teacher = &*truth;
  } else {
    throw ConfigError("precompute-rewards needs oracle_checkpoint or world");
  }

  RewardSnapshot snap;
  snap.chosen.reserve(ds.pairs.size());
  snap.rejected.reserve(ds.pairs.size());
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const PreferencePair& pair = ds.pairs[i];
    try {
      snap.chosen.push_back(teacher->reward(pair.prompt, pair.chosen));
      snap.rejected.push_back(teacher->reward(pair.prompt, pair.rejected));
    } catch (const Error& e) {
      throw InvalidArgument("pair " + std::to_string(i) + ": " + e.what());
    }
  }
  save_reward_snapshot(snap, out / "rewards.jsonl");
  write_resolved_config(cfg, out, "precompute-rewards");
  say(g, "wrote " + (out / "rewards.jsonl").string() + " (" + std::to_string(snap.size()) +
             " pairs)");
  return 0;
}

bool is_policy_loss(LossType t) {
  return t == LossType::Sft || t == LossType::Dpo || t == LossType::Edpo || t == LossType::Drdo;
}

int cmd_train(const GlobalArgs& g) {
  KvConfig cfg = load_config(g);
  fs::path out = require_out_dir(g);
  TrainConfig tc = train_config_from(cfg);

  PreferenceDataset ds = load_dataset(cfg.require_string("dataset"));
  if (ds.pairs.empty()) throw InvalidArgument("train: dataset is empty");

  std::string backend = cfg.get_string("backend", "tabular");
  if (backend != "tabular" && backend != "autoregressive") {
    throw ConfigError("backend must be tabular or autoregressive, got '" + backend + "'");
  }
  std::optional<World> world;
  if (cfg.has("world")) world = load_world(cfg.require_string("world"));
  if (backend == "tabular" && !world && !cfg.has("init_checkpoint")) {
    throw ConfigError("tabular training needs a world file (key 'world')");
  }

  std::unique_ptr<Policy> policy;
  std::unique_ptr<RewardModel> reward_model;
  if (is_policy_loss(tc.loss)) {
    if (cfg.has("init_checkpoint")) {
      policy = load_policy_checkpoint(cfg.require_string("init_checkpoint"),
                                      world ? &*world : nullptr);
    } else if (backend == "tabular") {
      policy = std::make_unique<TabularPolicy>(tabular_policy_for(*world));
    } else {
      policy = std::make_unique<AutoregressivePolicy>(
          ar_config_from(cfg, derive_seed(tc.seed, "policy.init")));
    }
  } else {
    if (cfg.has("init_checkpoint")) {
      reward_model = load_reward_model_checkpoint(cfg.require_string("init_checkpoint"),
                                                  world ? &*world : nullptr);
    } else if (backend == "tabular") {
      reward_model = std::make_unique<TabularRewardModel>(tabular_reward_model_for(
          *world, derive_seed(tc.seed, "rm.init"), cfg.get_double("init_std", 0.1)));
    } else {
      reward_model = std::make_unique<ArRewardModel>(
          ar_config_from(cfg, derive_seed(tc.seed, "rm.init")));
    }
  }

  std::unique_ptr<Policy> reference;
  if (tc.loss == LossType::Dpo || tc.loss == LossType::Edpo) {
    if (!cfg.has("reference_checkpoint")) {
      throw ConfigError("dpo/edpo need reference_checkpoint");
    }
    reference = load_policy_checkpoint(cfg.require_string("reference_checkpoint"),
                                       world ? &*world : nullptr);
  }

  RewardSnapshot teacher;
  std::vector<RewardSnapshot> ensemble;
  if (tc.loss == LossType::Drdo) {
    if (!cfg.has("rewards_file")) {
      throw ConfigError("drdo needs rewards_file (run precompute-rewards first)");
    }
    teacher = load_reward_snapshot(cfg.require_string("rewards_file"), ds.pairs.size());
  }
  if (tc.loss == LossType::Edpo) {
    if (!cfg.has("rewards_file")) {
      throw ConfigError("edpo needs rewards_file (comma-separated snapshot list)");
    }
    ensemble = load_snapshot_list(cfg.require_string("rewards_file"), ds.pairs.size());
  }

  EvalContext ctx;
  std::optional<PreferenceDataset> eval_ds;
  RewardSnapshot eval_teacher;
  std::vector<RewardSnapshot> eval_ensemble;
  if (cfg.has("eval_dataset")) {
    eval_ds = load_dataset(cfg.require_string("eval_dataset"));
    if (eval_ds->pairs.empty()) throw InvalidArgument("train: eval_dataset is empty");
    ctx.eval_ds = &*eval_ds;
    if (tc.loss == LossType::Drdo) {
      if (!cfg.has("eval_rewards_file")) {
        throw ConfigError("drdo with eval_dataset needs eval_rewards_file");
      }
      eval_teacher =
          load_reward_snapshot(cfg.require_string("eval_rewards_file"), eval_ds->pairs.size());
      ctx.eval_oracle = &eval_teacher;
    }
    if (tc.loss == LossType::Edpo) {
      if (!cfg.has("eval_rewards_file")) {
        throw ConfigError("edpo with eval_dataset needs eval_rewards_file");
      }
      eval_ensemble =
          load_snapshot_list(cfg.require_string("eval_rewards_file"), eval_ds->pairs.size());
      ctx.eval_ensemble = eval_ensemble;
    }
  }
  std::optional<TrueRewards> judge;
  if (cfg.get_bool("eval_advantage", false)) {
    if (!world) throw ConfigError("eval_advantage needs a world (true-reward judge)");
    judge.emplace(*world);
    ctx.judge = &*judge;
    ctx.eval_temperature = cfg.get_double("temperature", ctx.eval_temperature);
    ctx.eval_top_p = cfg.get_double("top_p", ctx.eval_top_p);
  }

  Objective obj;
  obj.type = tc.loss;
  obj.policy = policy.get();
  obj.reference = reference.get();
  obj.reward_model = reward_model.get();
  obj.beta = tc.beta;
  obj.drdo = tc.drdo;
  obj.oracle_cfg = tc.oracle;

  ObjectiveData data;
  data.ds = &ds;
  if (tc.loss == LossType::Drdo) data.oracle = &teacher;
  if (tc.loss == LossType::Edpo) data.ensemble = ensemble;

  RunArtifacts run = run_training(obj, data, tc, ctx);

  write_metrics_csv(run.metrics, out / "metrics.csv");
  if (policy) {
    save_checkpoint(*policy, out / "policy_final.txt");
  } else {
    save_checkpoint(*reward_model, out / "reward_model_final.txt");
  }
  write_resolved_config(cfg, out, "train");

  if (run.aborted) {
    std::cerr << "warning: loss went non-finite at step " << run.completed_steps
              << "; parameters restored to the last finite step\n";
  }
  if (!g.quiet) std::cout << "final " << metric_line(run.metrics.back()) << '\n';
  return 0;
}

int cmd_eval(const GlobalArgs& g) {
  KvConfig cfg = load_config(g);
  fs::path out = require_out_dir(g);
  World world = load_world(cfg.require_string("world"));

  std::string path_a = cfg.require_string("policy_a");
  std::string path_b = cfg.require_string("policy_b");
  std::unique_ptr<Policy> policy_a = load_policy_checkpoint(path_a, &world);
  std::unique_ptr<Policy> policy_b = load_policy_checkpoint(path_b, &world);

  std::unique_ptr<RewardModel> oracle_model;
  std::optional<TrueRewards> truth;
  const RewardSource* judge = nullptr;
  if (cfg.has("oracle_checkpoint")) {
    oracle_model = load_reward_model_checkpoint(cfg.require_string("oracle_checkpoint"), &world);
    judge = oracle_model.get();
  } else {
    truth.emplace(world);
    judge = &*truth;
  }

  double temperature = cfg.get_double("temperature", 0.7);
  double top_p = cfg.get_double("top_p", 0.8);
  std::uint64_t seed = cfg.get_u64("seed", 0);

  WinRateResult wr =
      win_rate(*policy_a, *policy_b, *judge, world.prompts, temperature, top_p, seed);
  std::string name_a = fs::path(path_a).stem().string();
  std::string name_b = fs::path(path_b).stem().string();
  write_win_rate_csv({{name_a, name_b, wr}}, out / "win_rate.csv");

  if (cfg.get_bool("eval_advantage", false)) {
    std::vector<Response> baseline;
    baseline.reserve(world.prompts.size());
    for (std::size_t i = 0; i < world.prompts.size(); ++i) {
      SampleConfig sc;
      sc.temperature = temperature;
      sc.top_p = top_p;
      sc.seed = derive_seed(seed, "advantage.baseline", i);
      baseline.push_back(policy_b->sample(world.prompts[i], sc));
    }
    SampleConfig sc;
    sc.temperature = temperature;
    sc.top_p = top_p;
    sc.seed = seed;
    AdvantageResult adv = reward_advantage(*policy_a, baseline, *judge, world.prompts, sc);
    write_advantage_csv(adv, out / "advantage.csv");
    say(g, "mean reward advantage of " + name_a + " over " + name_b + ": " +
               format_double(adv.mean_advantage));
  }

  if (cfg.get_bool("probe", false)) {
    PreferenceDataset ds = load_dataset(cfg.require_string("dataset"));
    std::unique_ptr<Policy> reference;
    if (cfg.has("reference_checkpoint")) {
      reference = load_policy_checkpoint(cfg.require_string("reference_checkpoint"), &world);
    }
    DegeneracyReport rep =
        degeneracy_probe(*policy_a, reference.get(), ds, world, cfg.get_double("beta", 0.1), {},
                         cfg.get_double("nd_epsilon", kDefaultNdEpsilon));
    write_degeneracy_csv(rep, out / "degeneracy.csv");
    double max_mass = 0.0;
    for (const auto& row : rep.prompts) max_mass = std::max(max_mass, row.dispreferred_mass);
    say(g, "degeneracy probe: max dispreferred mass " + format_double(max_mass) +
               ", max implicit gap " + format_double(rep.max_implicit_gap));
  }

  write_resolved_config(cfg, out, "eval");
  say(g, name_a + " vs " + name_b + ": win rate " + format_double(wr.win_rate) + " (" +
             format_double(wr.wins) + " wins, " + format_double(wr.ties) + " ties, " +
             format_double(wr.losses) + " losses)");
  return 0;
}

// Every catalog pair of every prompt, labelled by the true rewards. Full
// coverage matters for the log-ratio losses: a logit that sits in no pair has
// an exactly-zero gradient there, and central differences of an exact zero
// measure nothing but rounding noise.
PreferenceDataset coverage_dataset(const World& world) {
  PreferenceDataset ds;
  ds.name = "gradcheck";
  for (std::size_t p = 0; p < world.prompts.size(); ++p) {
    const auto& catalog = world.catalogs[p];
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      for (std::size_t j = i + 1; j < catalog.size(); ++j) {
        PreferencePair pair;
        pair.prompt = world.prompts[p];
        bool first_wins = world.true_rewards[p][i] >= world.true_rewards[p][j];
        pair.chosen = catalog[first_wins ? i : j];
        pair.rejected = catalog[first_wins ? j : i];
        pair.true_reward_gap =
            std::abs(world.true_rewards[p][i] - world.true_rewards[p][j]);
        ds.pairs.push_back(std::move(pair));
      }
    }
  }
  return ds;
}

GradCheckReport gradcheck_draw(LossType t, std::uint64_t seed, bool corrupt, double tolerance) {
  WorldSpec spec;
  spec.num_prompts = 3;
  spec.catalog_size = 4;
  spec.vocab_size = 12;
  spec.response_min_len = 2;
  spec.response_max_len = 4;
  spec.seed = seed;
  World world = build_world(spec);
  PreferenceDataset ds = coverage_dataset(world);

  TabularPolicy policy = tabular_policy_for(world);
  Rng prng(derive_seed(seed, "params"));
  for (double& p : policy.params()) p = prng.normal(0.0, 0.7);
  std::unique_ptr<Policy> reference = policy.clone();
  Rng rrng(derive_seed(seed, "ref.params"));
  for (double& p : reference->params()) p = rrng.normal(0.0, 0.7);
  TabularRewardModel rm = tabular_reward_model_for(world, derive_seed(seed, "rm.init"), 0.5);

  TrueRewards truth(world);
  RewardSnapshot teacher = make_reward_snapshot(truth, ds);
  std::vector<RewardSnapshot> ensemble;
  ensemble.push_back(teacher);
  ensemble.push_back(make_reward_snapshot(rm, ds));

  std::vector<std::size_t> idx = all_indices(ds);
  const DpoConfig dpo_cfg{0.3};
  const DrdoConfig drdo_cfg{0.5, 2.0};
  const OracleConfig oracle_cfg{0.25};

  ParamModel* model = nullptr;
  std::function<LossEvaluation()> objective;
  switch (t) {
    case LossType::Sft:
      model = &policy;
      objective = [&] { return sft_loss(policy, ds, idx); };
      break;
    case LossType::Rm:
      model = &rm;
      objective = [&] { return rm_loss(rm, ds, idx); };
      break;
    case LossType::Oracle:
      model = &rm;
      objective = [&] { return oracle_loss(rm, ds, idx, oracle_cfg); };
      break;
    case LossType::Dpo:
      model = &policy;
      objective = [&] { return dpo_loss(policy, *reference, ds, idx, dpo_cfg); };
      break;
    case LossType::Edpo:
      model = &policy;
      objective = [&] { return edpo_loss(policy, *reference, ds, idx, ensemble, 0.3); };
      break;
    case LossType::Drdo:
      model = &policy;
      objective = [&] { return drdo_loss(policy, ds, idx, teacher, drdo_cfg); };
      break;
  }
  if (corrupt) {
    auto inner = objective;
    objective = [inner] {
      LossEvaluation ev = inner();
      if (!ev.gradient.empty()) ev.gradient[0] += 0.01;
      return ev;
    };
  }
  return check_gradients(*model, objective, 1e-5, tolerance);
}

int cmd_gradcheck(const GlobalArgs& g, const std::string& target, bool corrupt) {
  KvConfig cfg = load_config(g);
  std::uint64_t seed = cfg.get_u64("seed", 0);
  constexpr int kDraws = 20;
  constexpr double kTolerance = 1e-5;

  std::vector<LossType> targets;
  if (target == "all") {
    targets = {LossType::Sft, LossType::Rm,   LossType::Oracle,
               LossType::Dpo, LossType::Edpo, LossType::Drdo};
  } else {
    targets = {parse_loss_type(target)};
  }

  std::ostringstream report;
  bool all_pass = true;
  for (LossType t : targets) {
    double worst = 0.0;
    for (int k = 0; k < kDraws; ++k) {
      std::uint64_t draw_seed =
          derive_seed(seed, "gradcheck." + std::string(to_string(t)), static_cast<std::uint64_t>(k));
      GradCheckReport r = gradcheck_draw(t, draw_seed, corrupt, kTolerance);
      worst = std::max(worst, r.max_rel_error);
    }
    bool pass = worst < kTolerance;
    all_pass = all_pass && pass;
    report << "gradcheck " << to_string(t) << ": max relative error " << format_double(worst)
           << " over " << kDraws << " draws: " << (pass ? "PASS" : "FAIL") << '\n';
  }

  if (!g.quiet) std::cout << report.str();
  if (!g.out_dir.empty()) {
    fs::path out = require_out_dir(g);
    write_text_file(out / "gradcheck.txt", report.str());
    write_resolved_config(cfg, out, "gradcheck");
  }
  if (!all_pass) throw NumericalFailure("gradient check failed; see report above");
  return 0;
}

int cmd_lemma_probe(const GlobalArgs& g) {
  KvConfig cfg = load_config(g);
  fs::path out = require_out_dir(g);
  std::string backend = cfg.get_string("backend", "tabular");
  if (backend != "tabular") {
    throw UnsupportedBackend("lemma-probe enumerates catalogs exactly; backend must be tabular");
  }

  std::uint64_t seed = cfg.get_u64("seed", 0);
  World world = obtain_world(cfg);
  GenerationPlan plan = plan_from(cfg);
  PreferenceDataset ds = sample_preference_dataset(world, plan);

  TrainConfig base;
  base.steps = cfg.get_size("max_steps", 600);
  base.batch_size = cfg.get_size("per_device_train_batch_size", 32);
  base.eval_every = cfg.get_size("eval_steps", 100);
  base.warmup_steps = cfg.get_size("warmup_steps", 0);
  if (cfg.has("learning_rate")) base.learning_rate = cfg.get_double("learning_rate", 0.0);
  base.weight_decay = cfg.get_double("weight_decay", base.weight_decay);
  base.beta = cfg.get_double("beta", base.beta);
  base.drdo.alpha = cfg.get_double("alpha", base.drdo.alpha);
  base.drdo.gamma = cfg.get_double("gamma", base.drdo.gamma);
  base.oracle.alpha_sft = cfg.get_double("alpha_sft", base.oracle.alpha_sft);
  base.ensemble_size = cfg.get_size("ensemble_size", base.ensemble_size);
  std::size_t sft_steps = cfg.get_size("sft_steps", 200);
  std::size_t rm_steps = cfg.get_size("rm_steps", 200);
  double init_std = cfg.get_double("init_std", 0.1);
  double temperature = cfg.get_double("temperature", 0.7);
  double top_p = cfg.get_double("top_p", 0.8);

  // Warm start shared by every method; its clone is the frozen reference.
  TabularPolicy init = tabular_policy_for(world);
  if (sft_steps > 0) {
    TrainConfig sft_cfg = base;
    sft_cfg.loss = LossType::Sft;
    sft_cfg.steps = sft_steps;
    sft_cfg.eval_every = sft_steps;
    sft_cfg.seed = derive_seed(seed, "probe.sft");
    train_sft(init, ds, sft_cfg);
  }
  std::unique_ptr<Policy> reference = init.clone();

  // Teacher: a trained reward model, or the world truth when rm_steps = 0.
  std::unique_ptr<RewardModel> oracle_model;
  std::optional<TrueRewards> truth;
  const RewardSource* teacher = nullptr;
  if (rm_steps > 0) {
    auto rm = std::make_unique<TabularRewardModel>(
        tabular_reward_model_for(world, derive_seed(seed, "probe.oracle.init"), init_std));
    TrainConfig rm_cfg = base;
    rm_cfg.loss = LossType::Oracle;
    rm_cfg.steps = rm_steps;
    rm_cfg.eval_every = rm_steps;
    rm_cfg.seed = derive_seed(seed, "probe.oracle");
    train_oracle(*rm, ds, rm_cfg);
    oracle_model = std::move(rm);
    teacher = oracle_model.get();
  } else {
    truth.emplace(world);
    teacher = &*truth;
  }
  RewardSnapshot teacher_snap = make_reward_snapshot(*teacher, ds);

  std::vector<RewardSnapshot> ensemble_snaps;
  if (rm_steps > 0) {
    TrainConfig ens_cfg = base;
    ens_cfg.loss = LossType::Rm;
    ens_cfg.steps = rm_steps;
    ens_cfg.eval_every = rm_steps;
    ens_cfg.seed = derive_seed(seed, "probe.ensemble");
    auto members = train_reward_ensemble(
        [&](std::uint64_t member_seed) {
          return std::make_unique<TabularRewardModel>(
              tabular_reward_model_for(world, derive_seed(member_seed, "init"), init_std));
        },
        ds, ens_cfg, base.ensemble_size);
    for (const EnsembleMember& m : members) {
      ensemble_snaps.push_back(make_reward_snapshot(*m.model, ds));
    }
  } else {
    ensemble_snaps.push_back(teacher_snap);
  }

  std::ostringstream series_csv, summary_csv;
  series_csv << "method,step,prompt_id,dispreferred_mass,complement_mass\n";
  summary_csv << "method,step,max_implicit_gap,grad_norm_nd,grad_norm_det,nd_count,det_count\n";

  struct MethodRun {
    std::string name;
    std::unique_ptr<Policy> policy;
    DegeneracyReport final_report;
  };
  std::vector<MethodRun> methods;

  for (LossType t : {LossType::Dpo, LossType::Edpo, LossType::Drdo}) {
    std::string name(to_string(t));
    std::unique_ptr<Policy> policy = init.clone();

    Objective obj;
    obj.type = t;
    obj.policy = policy.get();
    obj.reference = reference.get();
    obj.beta = base.beta;
    obj.drdo = base.drdo;
    ObjectiveData data;
    data.ds = &ds;
    if (t == LossType::Drdo) data.oracle = &teacher_snap;
    if (t == LossType::Edpo) data.ensemble = ensemble_snaps;

    TrainConfig method_cfg = base;
    method_cfg.loss = t;
    method_cfg.seed = derive_seed(seed, "probe." + name);

    const Policy* probe_ref = (t == LossType::Dpo || t == LossType::Edpo) ? reference.get()
                                                                          : nullptr;
    PairLossFn per_pair = [&obj, &data](std::size_t i) {
      const std::size_t one[1] = {i};
      return obj.evaluate(data, Batch(one, 1));
    };

    DegeneracyReport last_report;
    EvalContext ctx;
    ctx.on_eval = [&](std::size_t step, const MetricRecord&) {
      DegeneracyReport rep = degeneracy_probe(*policy, probe_ref, ds, world, base.beta, per_pair,
                                              plan.nd_epsilon);
      for (const auto& row : rep.prompts) {
        series_csv << name << ',' << step << ',' << row.prompt_id << ','
                   << format_double(row.dispreferred_mass) << ','
                   << format_double(row.complement_mass) << '\n';
      }
      summary_csv << name << ',' << step << ',' << format_double(rep.max_implicit_gap) << ','
                  << format_double(rep.grad_norm_nd) << ',' << format_double(rep.grad_norm_det)
                  << ',' << rep.nd_count << ',' << rep.det_count << '\n';
      last_report = std::move(rep);
    };
    run_training(obj, data, method_cfg, ctx);
    methods.push_back({name, std::move(policy), std::move(last_report)});
    say(g, "trained " + name);
  }

  std::vector<NamedWinRate> matrix;
  std::uint64_t matrix_seed = derive_seed(seed, "probe.matrix");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = 0; j < methods.size(); ++j) {
      if (i == j) continue;
      WinRateResult w = win_rate(*methods[i].policy, *methods[j].policy, *teacher, world.prompts,
                                 temperature, top_p, matrix_seed);
      matrix.push_back({methods[i].name, methods[j].name, w});
    }
  }

  std::ostringstream summary;
  summary << "lemma probe: " << world.prompts.size() << " prompts x " << world.spec.catalog_size
          << " responses, " << ds.pairs.size() << " pairs, nd_fraction "
          << format_double(plan.nd_fraction) << ", teacher "
          << (rm_steps > 0 ? "trained oracle" : "true rewards") << '\n';
  for (const MethodRun& m : methods) {
    double max_mass = 0.0;
    double min_complement = 1.0;
    for (const auto& row : m.final_report.prompts) {
      max_mass = std::max(max_mass, row.dispreferred_mass);
      min_complement = std::min(min_complement, row.complement_mass);
    }
    summary << m.name << ": final max dispreferred mass " << format_double(max_mass)
            << ", min complement mass " << format_double(min_complement) << ", max implicit gap "
            << format_double(m.final_report.max_implicit_gap) << ", grad norm nd/det "
            << format_double(m.final_report.grad_norm_nd) << "/"
            << format_double(m.final_report.grad_norm_det) << '\n';
  }
  for (const NamedWinRate& cell : matrix) {
    std::string winner = cell.result.win_rate > 0.5
                             ? cell.policy_a
                             : (cell.result.win_rate < 0.5 ? cell.policy_b : "tie");
    summary << cell.policy_a << " vs " << cell.policy_b << ": " << winner << " ("
            << format_double(cell.result.win_rate) << ")\n";
  }

  write_text_file(out / "degeneracy_series.csv", series_csv.str());
  write_text_file(out / "degeneracy_summary.csv", summary_csv.str());
  write_win_rate_csv(matrix, out / "win_rate.csv");
  write_text_file(out / "summary.txt", summary.str());
  write_resolved_config(cfg, out, "lemma-probe");
  say(g, summary.str());
  return 0;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    rows.push_back(std::move(fields));
  }
  return rows;
}

int cmd_report(const GlobalArgs& g) {
  fs::path dir = g.out_dir.empty() ? fs::path(".") : fs::path(g.out_dir);
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  bool found = false;

  if (fs::exists(dir / "win_rate.csv")) {
    found = true;
    std::cout << "win rates (" << (dir / "win_rate.csv").string() << "):\n";
    auto rows = read_csv(dir / "win_rate.csv");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() < 7) continue;
      std::cout << "  " << r[0] << " vs " << r[1] << ": " << r[2] << " (wins " << r[3] << ", ties "
                << r[4] << ", losses " << r[5] << " of " << r[6] << ")\n";
    }
  }
  if (fs::exists(dir / "advantage.csv")) {
    found = true;
    auto rows = read_csv(dir / "advantage.csv");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() < 4) continue;
      sum += std::stod(rows[i][3]);
      ++n;
    }
    std::cout << "reward advantage over " << n
              << " prompts: mean " << (n > 0 ? format_double(sum / static_cast<double>(n)) : "n/a")
              << '\n';
  }
  if (fs::exists(dir / "degeneracy.csv")) {
    found = true;
    auto rows = read_csv(dir / "degeneracy.csv");
    double max_mass = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() < 3) continue;
      max_mass = std::max(max_mass, std::stod(rows[i][1]));
    }
    std::cout << "degeneracy probe: max dispreferred mass " << format_double(max_mass) << '\n';
  }
  if (fs::exists(dir / "degeneracy_summary.csv")) {
    found = true;
    std::cout << "degeneracy time series (final row per method):\n";
    auto rows = read_csv(dir / "degeneracy_summary.csv");
    std::map<std::string, std::vector<std::string>> final_rows;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() >= 7) final_rows[rows[i][0]] = rows[i];
    }
    for (const auto& [method, r] : final_rows) {
      std::cout << "  " << method << " step " << r[1] << ": max implicit gap " << r[2]
                << ", grad norm nd/det " << r[3] << "/" << r[4] << '\n';
    }
  }
  if (fs::exists(dir / "metrics.csv")) {
    found = true;
    std::vector<MetricRecord> metrics = read_metrics_csv(dir / "metrics.csv");
    if (!metrics.empty()) {
      std::cout << "metrics: first " << metric_line(metrics.front()) << '\n';
      std::cout << "metrics: last  " << metric_line(metrics.back()) << '\n';
    }
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string fname = entry.path().filename().string();
    if (fname.size() > 11 && fname.ends_with("_report.csv")) {
      found = true;
      std::cout << "split report (" << entry.path().string() << "):\n";
      for (const auto& r : read_csv(entry.path())) {
        std::cout << "  ";
        for (std::size_t i = 0; i < r.size(); ++i) std::cout << (i > 0 ? "," : "") << r[i];
        std::cout << '\n';
      }
    }
  }
  if (!found) throw InvalidArgument("nothing to report in " + dir.string());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  GlobalArgs g;
  std::uint64_t seed_value = 0;

  CLI::App app{"preference alignment workbench on fully observable synthetic worlds"};
  app.require_subcommand(1);
  auto* seed_opt = app.add_option("--seed", seed_value, "override the config seed");
  app.add_option("--config", g.config_path, "experiment config file (key = value lines)");
  app.add_option("--out", g.out_dir, "output directory (must already exist)");
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  std::string gradcheck_target = "all";
  bool corrupt_gradient = false;

  auto* gen_world = app.add_subcommand("gen-world", "generate a synthetic world file");
  auto* gen_data = app.add_subcommand("gen-data", "draw a preference dataset from a world");
  auto* split = app.add_subcommand("split", "split a dataset by confidence and edit distance");
  auto* precompute =
      app.add_subcommand("precompute-rewards", "score a dataset's pairs with a teacher");
  auto* train = app.add_subcommand("train", "fit a policy or reward model");
  auto* eval = app.add_subcommand("eval", "head-to-head policy comparison");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("loss", gradcheck_target, "loss id or 'all'");
  gradcheck->add_flag("--corrupt-gradient", corrupt_gradient, "test hook")->group("");
  auto* lemma = app.add_subcommand("lemma-probe", "degeneracy study: dpo vs edpo vs drdo");
  auto* report = app.add_subcommand("report", "summarize the CSVs in an output directory");

  for (CLI::App* sub : {gen_world, gen_data, split, precompute, train, eval, gradcheck, lemma,
                        report}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (gen_world->parsed()) return cmd_gen_world(g);
    if (gen_data->parsed()) return cmd_gen_data(g);
    if (split->parsed()) return cmd_split(g);
    if (precompute->parsed()) return cmd_precompute_rewards(g);
    if (train->parsed()) return cmd_train(g);
    if (eval->parsed()) return cmd_eval(g);
    if (gradcheck->parsed()) return cmd_gradcheck(g, gradcheck_target, corrupt_gradient);
    if (lemma->parsed()) return cmd_lemma_probe(g);
    if (report->parsed()) return cmd_report(g);
    throw InvalidArgument("no subcommand given");
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& s : args) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace preflab
