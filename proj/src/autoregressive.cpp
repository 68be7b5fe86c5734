// SPDX-License-Identifier: Apache-2.0
#include "preflab/autoregressive.hpp"

#include <cmath>
#include <string>

#include "preflab/errors.hpp"
#include "preflab/rng.hpp"
#include "preflab/tabular.hpp"

namespace preflab {

namespace {

constexpr std::size_t kMaxParams = 100000;

void validate_config(const ArConfig& cfg) {
  if (cfg.vocab_size < 2) throw InvalidArgument("autoregressive: vocab_size must be >= 2");
  if (cfg.embed_dim < 1 || cfg.hidden_dim < 1) {
    throw InvalidArgument("autoregressive: embed_dim and hidden_dim must be >= 1");
  }
  if (cfg.max_seq_len < 2) throw InvalidArgument("autoregressive: max_seq_len must be >= 2");
}

void validate_tokens(std::span<const int> tokens, int vocab, const char* what) {
  for (int t : tokens) {
    if (t < 0 || t >= vocab) {
      throw InvalidArgument(std::string("autoregressive: ") + what + " token " +
                            std::to_string(t) + " outside vocabulary");
    }
  }
}

}  // namespace

struct AutoregressivePolicy::Tape {
  std::span<const int> stream;
  std::vector<std::vector<double>> hidden;  // h_t after consuming stream[t]
  struct Scored {
    std::size_t state_pos;  // h index the prediction was made from
    int target;
    std::vector<double> probs;
  };
  std::vector<Scored> scored;
  double log_prob = 0.0;
  double head_value = 0.0;
};

AutoregressivePolicy::AutoregressivePolicy(const ArConfig& cfg) : cfg_(cfg) {
  validate_config(cfg_);
  std::size_t total = head_b_off() + (cfg_.separate_reward_head ? 1 : 0);
  if (total > kMaxParams) {
    throw InvalidArgument("autoregressive: configuration has " + std::to_string(total) +
                          " parameters, budget is " + std::to_string(kMaxParams));
  }
  params_.resize(total);
  Rng rng(derive_seed(cfg_.init_seed, "ar.init"));
  for (double& p : params_) p = rng.normal(0.0, cfg_.init_std);
}

std::size_t AutoregressivePolicy::wx_off() const {
  return static_cast<std::size_t>(cfg_.vocab_size + 1) * cfg_.embed_dim;
}
std::size_t AutoregressivePolicy::wh_off() const {
  return wx_off() + static_cast<std::size_t>(cfg_.hidden_dim) * cfg_.embed_dim;
}
std::size_t AutoregressivePolicy::bh_off() const {
  return wh_off() + static_cast<std::size_t>(cfg_.hidden_dim) * cfg_.hidden_dim;
}
std::size_t AutoregressivePolicy::wo_off() const { return bh_off() + cfg_.hidden_dim; }
std::size_t AutoregressivePolicy::bo_off() const {
  return wo_off() + static_cast<std::size_t>(cfg_.vocab_size) * cfg_.hidden_dim;
}
std::size_t AutoregressivePolicy::head_w_off() const { return bo_off() + cfg_.vocab_size; }
std::size_t AutoregressivePolicy::head_b_off() const {
  return head_w_off() + (cfg_.separate_reward_head ? cfg_.hidden_dim : 0);
}

std::vector<ParamBlock> AutoregressivePolicy::param_blocks() const {
  std::vector<ParamBlock> b = {
      {"embedding", emb_off(), wx_off() - emb_off()},
      {"input_transform", wx_off(), wh_off() - wx_off()},
      {"hidden_transform", wh_off(), bh_off() - wh_off()},
      {"hidden_bias", bh_off(), static_cast<std::size_t>(cfg_.hidden_dim)},
      {"output_projection", wo_off(), bo_off() - wo_off()},
      {"output_bias", bo_off(), static_cast<std::size_t>(cfg_.vocab_size)},
  };
  if (cfg_.separate_reward_head) {
    b.push_back({"reward_head_w", head_w_off(), static_cast<std::size_t>(cfg_.hidden_dim)});
    b.push_back({"reward_head_b", head_b_off(), 1});
  }
  return b;
}

std::vector<int> AutoregressivePolicy::input_stream(const Prompt& x, const Response& y) const {
  validate_tokens(x.tokens, cfg_.vocab_size, "prompt");
  validate_tokens(y.tokens, cfg_.vocab_size, "response");
  if (y.tokens.empty()) throw InvalidArgument("autoregressive: response must be non-empty");
  if (x.tokens.size() + y.tokens.size() > static_cast<std::size_t>(cfg_.max_seq_len)) {
    throw InvalidArgument("autoregressive: prompt plus response exceeds max_seq_len");
  }
  std::vector<int> stream;
  stream.reserve(1 + x.tokens.size() + y.tokens.size());
  stream.push_back(cfg_.vocab_size);  // BOS row of the embedding table
  stream.insert(stream.end(), x.tokens.begin(), x.tokens.end());
  stream.insert(stream.end(), y.tokens.begin(), y.tokens.end());
  return stream;
}

void AutoregressivePolicy::forward(std::span<const int> stream, std::size_t score_from,
                                   bool want_head, Tape& tape) const {
  const int de = cfg_.embed_dim;
  const int dh = cfg_.hidden_dim;
  const int V = cfg_.vocab_size;
  const double* E = params_.data() + emb_off();
  const double* Wx = params_.data() + wx_off();
  const double* Wh = params_.data() + wh_off();
  const double* bh = params_.data() + bh_off();
  const double* Wo = params_.data() + wo_off();
  const double* bo = params_.data() + bo_off();

  tape.stream = stream;
  tape.hidden.assign(stream.size(), std::vector<double>(dh));
  tape.scored.clear();
  tape.log_prob = 0.0;

  std::vector<double> h(dh, 0.0);
  std::vector<double> logits(V);
  for (std::size_t t = 0; t < stream.size(); ++t) {
    const double* e = E + static_cast<std::size_t>(stream[t]) * de;
    std::vector<double>& ht = tape.hidden[t];
    for (int i = 0; i < dh; ++i) {
      double a = bh[i];
      for (int j = 0; j < de; ++j) a += Wx[i * de + j] * e[j];
      for (int j = 0; j < dh; ++j) a += Wh[i * dh + j] * h[j];
      ht[i] = std::tanh(a);
    }
    h = ht;
    if (t + 1 < stream.size() && t + 1 >= score_from) {
      for (int v = 0; v < V; ++v) {
        double s = bo[v];
        for (int j = 0; j < dh; ++j) s += Wo[v * dh + j] * h[j];
        logits[v] = s;
      }
      std::vector<double> probs = softmax(logits);
      int target = stream[t + 1];
      tape.log_prob += std::log(probs[target]);
      tape.scored.push_back({t, target, std::move(probs)});
    }
  }
  if (want_head) {
    const double* hw = params_.data() + head_w_off();
    double r = params_[head_b_off()];
    for (int j = 0; j < dh; ++j) r += hw[j] * h[j];
    tape.head_value = r;
  }
}

void AutoregressivePolicy::backward(const Tape& tape, double logp_weight, double head_weight,
                                    std::span<double> grad) const {
  const int de = cfg_.embed_dim;
  const int dh = cfg_.hidden_dim;
  const double* E = params_.data() + emb_off();
  const double* Wx = params_.data() + wx_off();
  const double* Wh = params_.data() + wh_off();
  const double* Wo = params_.data() + wo_off();

  std::vector<double> dh_carry(dh, 0.0);
  if (head_weight != 0.0) {
    const std::vector<double>& h_last = tape.hidden.back();
    const double* hw = params_.data() + head_w_off();
    for (int j = 0; j < dh; ++j) {
      grad[head_w_off() + j] += head_weight * h_last[j];
      dh_carry[j] += head_weight * hw[j];
    }
    grad[head_b_off()] += head_weight;
  }

  auto scored_it = tape.scored.rbegin();
  std::vector<double> da(dh);
  for (std::size_t t = tape.stream.size(); t-- > 0;) {
    const std::vector<double>& ht = tape.hidden[t];
    if (logp_weight != 0.0 && scored_it != tape.scored.rend() && scored_it->state_pos == t) {
      const auto& s = *scored_it;
      for (std::size_t v = 0; v < s.probs.size(); ++v) {
        double dl = logp_weight * ((static_cast<int>(v) == s.target ? 1.0 : 0.0) - s.probs[v]);
        grad[bo_off() + v] += dl;
        for (int j = 0; j < dh; ++j) {
          grad[wo_off() + v * dh + j] += dl * ht[j];
          dh_carry[j] += dl * Wo[v * dh + j];
        }
      }
      ++scored_it;
    }
    for (int i = 0; i < dh; ++i) da[i] = dh_carry[i] * (1.0 - ht[i] * ht[i]);
    const double* e = E + static_cast<std::size_t>(tape.stream[t]) * de;
    const std::vector<double>* h_prev = t > 0 ? &tape.hidden[t - 1] : nullptr;
    for (int i = 0; i < dh; ++i) {
      grad[bh_off() + i] += da[i];
      for (int j = 0; j < de; ++j) {
        grad[wx_off() + i * de + j] += da[i] * e[j];
        grad[emb_off() + static_cast<std::size_t>(tape.stream[t]) * de + j] +=
            da[i] * Wx[i * de + j];
      }
      if (h_prev) {
        for (int j = 0; j < dh; ++j) grad[wh_off() + i * dh + j] += da[i] * (*h_prev)[j];
      }
    }
    std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
    for (int j = 0; j < dh; ++j) {
      double acc = 0.0;
      for (int i = 0; i < dh; ++i) acc += da[i] * Wh[i * dh + j];
      dh_carry[j] = acc;
    }
  }
}

double AutoregressivePolicy::log_prob(const Prompt& x, const Response& y) const {
  std::vector<int> stream = input_stream(x, y);
  Tape tape;
  forward(stream, 1 + x.tokens.size(), false, tape);
  return tape.log_prob;
}

void AutoregressivePolicy::add_log_prob_grad(const Prompt& x, const Response& y, double weight,
                                             std::span<double> grad) const {
  std::vector<int> stream = input_stream(x, y);
  Tape tape;
  forward(stream, 1 + x.tokens.size(), false, tape);
  backward(tape, weight, 0.0, grad);
}

double AutoregressivePolicy::student_reward(const Prompt& x, const Response& y) const {
  if (!cfg_.separate_reward_head) return log_prob(x, y);
  std::vector<int> stream = input_stream(x, y);
  Tape tape;
  forward(stream, stream.size(), true, tape);  // score_from past end: likelihood not needed
  return tape.head_value;
}

void AutoregressivePolicy::add_student_reward_grad(const Prompt& x, const Response& y,
                                                   double weight, std::span<double> grad) const {
  if (!cfg_.separate_reward_head) {
    add_log_prob_grad(x, y, weight, grad);
    return;
  }
  std::vector<int> stream = input_stream(x, y);
  Tape tape;
  forward(stream, stream.size(), true, tape);
  backward(tape, 0.0, weight, grad);
}

std::vector<double> AutoregressivePolicy::next_token_logits(std::span<const int> stream) const {
  const int dh = cfg_.hidden_dim;
  const int V = cfg_.vocab_size;
  Tape tape;
  forward(stream, stream.size(), false, tape);
  const std::vector<double>& h = tape.hidden.back();
  const double* Wo = params_.data() + wo_off();
  const double* bo = params_.data() + bo_off();
  std::vector<double> logits(V);
  for (int v = 0; v < V; ++v) {
    double s = bo[v];
    for (int j = 0; j < dh; ++j) s += Wo[v * dh + j] * h[j];
    logits[v] = s;
  }
  return logits;
}

Response AutoregressivePolicy::sample(const Prompt& x, const SampleConfig& cfg) const {
  validate_tokens(x.tokens, cfg_.vocab_size, "prompt");
  std::size_t budget = cfg_.max_seq_len > static_cast<int>(x.tokens.size())
                           ? cfg_.max_seq_len - x.tokens.size()
                           : 0;
  std::size_t new_tokens = std::min<std::size_t>(budget, cfg.max_new_tokens > 0
                                                             ? static_cast<std::size_t>(cfg.max_new_tokens)
                                                             : 0);
  if (new_tokens == 0) {
    throw InvalidArgument("autoregressive: no token budget left to sample a response");
  }
  std::vector<int> stream;
  stream.reserve(1 + x.tokens.size() + new_tokens);
  stream.push_back(cfg_.vocab_size);
  stream.insert(stream.end(), x.tokens.begin(), x.tokens.end());
  Rng rng(cfg.seed);
  Response out;
  for (std::size_t k = 0; k < new_tokens; ++k) {
    std::vector<double> logits = next_token_logits(stream);
    std::size_t idx = sample_index(logits, cfg, rng);
    out.tokens.push_back(static_cast<int>(idx));
    stream.push_back(static_cast<int>(idx));
  }
  return out;
}

std::unique_ptr<Policy> AutoregressivePolicy::clone() const {
  return std::make_unique<AutoregressivePolicy>(*this);
}

ArRewardModel::ArRewardModel(const ArConfig& cfg)
    : net_([&] {
        ArConfig c = cfg;
        c.separate_reward_head = true;
        return c;
      }()) {}

}  // namespace preflab
