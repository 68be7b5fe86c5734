// SPDX-License-Identifier: Apache-2.0
#include "preflab/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "preflab/dataio.hpp"
#include "preflab/errors.hpp"
#include "preflab/synthworld.hpp"

namespace preflab {

namespace {

constexpr const char* kMagic = "preflab-checkpoint 1";

struct Header {
  std::string kind;
  std::string backend;
  std::vector<std::size_t> catalog_sizes;  // tabular
  ArConfig ar;                             // autoregressive
  std::size_t num_params = 0;
};

void write_params(std::ofstream& out, std::span<const double> params) {
  out << "params " << params.size() << '\n';
  for (double p : params) out << format_double(p) << '\n';
}

void write_tabular_header(std::ofstream& out, const char* kind,
                          const std::vector<std::vector<Response>>& catalogs) {
  out << kMagic << '\n' << "kind " << kind << '\n' << "backend tabular\n";
  out << "catalog_sizes";
  for (const auto& catalog : catalogs) out << ' ' << catalog.size();
  out << '\n';
}

void write_ar_header(std::ofstream& out, const char* kind, const ArConfig& cfg) {
  out << kMagic << '\n'
      << "kind " << kind << '\n'
      << "backend autoregressive\n"
      << "vocab_size " << cfg.vocab_size << '\n'
      << "embed_dim " << cfg.embed_dim << '\n'
      << "hidden_dim " << cfg.hidden_dim << '\n'
      << "max_seq_len " << cfg.max_seq_len << '\n'
      << "reward_head " << (cfg.separate_reward_head ? 1 : 0) << '\n';
}

Header read_header(std::ifstream& in, const std::filesystem::path& path, std::size_t& line_no) {
  std::string line;
  auto next = [&]() -> std::string {
    if (!std::getline(in, line)) {
      throw ParseError("checkpoint truncated: " + path.string(), line_no);
    }
    ++line_no;
    return line;
  };
  if (next() != kMagic) {
    throw VersionError("unrecognized checkpoint header in " + path.string() +
                       " (expected '" + kMagic + "')");
  }
  Header h;
  std::string key;
  {
    std::istringstream kv(next());
    kv >> key >> h.kind;
    if (key != "kind" || (h.kind != "policy" && h.kind != "reward_model")) {
      throw ParseError("bad kind line in checkpoint", line_no);
    }
  }
  {
    std::istringstream kv(next());
    kv >> key >> h.backend;
    if (key != "backend") throw ParseError("bad backend line in checkpoint", line_no);
  }
  if (h.backend == "tabular") {
    std::istringstream kv(next());
    kv >> key;
    if (key != "catalog_sizes") throw ParseError("missing catalog_sizes line", line_no);
    std::size_t size;
    while (kv >> size) h.catalog_sizes.push_back(size);
    if (h.catalog_sizes.empty()) throw ParseError("empty catalog_sizes line", line_no);
  } else if (h.backend == "autoregressive") {
    auto read_int = [&](const char* expect) {
      std::istringstream kv(next());
      int value;
      kv >> key >> value;
      if (key != expect || !kv) {
        throw ParseError(std::string("missing ") + expect + " line", line_no);
      }
      return value;
    };
    h.ar.vocab_size = read_int("vocab_size");
    h.ar.embed_dim = read_int("embed_dim");
    h.ar.hidden_dim = read_int("hidden_dim");
    h.ar.max_seq_len = read_int("max_seq_len");
    h.ar.separate_reward_head = read_int("reward_head") != 0;
  } else {
    throw UnsupportedBackend("unknown checkpoint backend '" + h.backend + "'");
  }
  {
    std::istringstream kv(next());
    kv >> key >> h.num_params;
    if (key != "params" || !kv) throw ParseError("bad params line in checkpoint", line_no);
  }
  return h;
}

void read_params(std::ifstream& in, const std::filesystem::path& path, std::size_t& line_no,
                 std::span<double> out) {
  std::string line;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::getline(in, line)) {
      throw ParseError("checkpoint truncated: " + path.string(), line_no);
    }
    ++line_no;
    const char* begin = line.data();
    const char* end = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(begin, end, out[i]);
    if (ec != std::errc{} || ptr != end) {
      throw ParseError("bad parameter value '" + line + "'", line_no);
    }
  }
}

void check_tabular_shape(const Header& h, const World& world,
                         const std::filesystem::path& path) {
  if (h.catalog_sizes.size() != world.catalogs.size()) {
    throw ConfigError("checkpoint " + path.string() + " has " +
                      std::to_string(h.catalog_sizes.size()) + " prompts, world has " +
                      std::to_string(world.catalogs.size()));
  }
  for (std::size_t p = 0; p < h.catalog_sizes.size(); ++p) {
    if (h.catalog_sizes[p] != world.catalogs[p].size()) {
      throw ConfigError("checkpoint " + path.string() + " catalog size mismatch at prompt " +
                        std::to_string(p));
    }
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  return out;
}

}  // namespace

void save_checkpoint(const Policy& policy, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  if (policy.backend() == "tabular") {
    const auto& tab = dynamic_cast<const TabularPolicy&>(policy);
    write_tabular_header(out, "policy", tab.catalogs());
  } else {
    const auto& ar = dynamic_cast<const AutoregressivePolicy&>(policy);
    write_ar_header(out, "policy", ar.config());
  }
  write_params(out, policy.params());
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

void save_checkpoint(const RewardModel& model, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  if (model.backend() == "tabular") {
    const auto& tab = dynamic_cast<const TabularRewardModel&>(model);
    write_tabular_header(out, "reward_model", tab.catalogs());
  } else {
    const auto& ar = dynamic_cast<const ArRewardModel&>(model);
    write_ar_header(out, "reward_model", ar.net().config());
  }
  write_params(out, model.params());
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

std::unique_ptr<Policy> load_policy_checkpoint(const std::filesystem::path& path,
                                               const World* world) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::size_t line_no = 0;
  Header h = read_header(in, path, line_no);
  if (h.kind != "policy") {
    throw ConfigError("checkpoint " + path.string() + " holds a " + h.kind + ", not a policy");
  }
  std::unique_ptr<Policy> policy;
  if (h.backend == "tabular") {
    if (world == nullptr) {
      throw ConfigError("tabular checkpoint " + path.string() + " needs a world for its catalogs");
    }
    check_tabular_shape(h, *world, path);
    policy = std::make_unique<TabularPolicy>(world->catalogs);
  } else {
    policy = std::make_unique<AutoregressivePolicy>(h.ar);
  }
  if (policy->num_params() != h.num_params) {
    throw ParseError("parameter count mismatch in " + path.string(), line_no);
  }
  read_params(in, path, line_no, policy->params());
  return policy;
}

std::unique_ptr<RewardModel> load_reward_model_checkpoint(const std::filesystem::path& path,
                                                          const World* world) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::size_t line_no = 0;
  Header h = read_header(in, path, line_no);
  if (h.kind != "reward_model") {
    throw ConfigError("checkpoint " + path.string() + " holds a " + h.kind +
                      ", not a reward model");
  }
  std::unique_ptr<RewardModel> model;
  if (h.backend == "tabular") {
    if (world == nullptr) {
      throw ConfigError("tabular checkpoint " + path.string() + " needs a world for its catalogs");
    }
    check_tabular_shape(h, *world, path);
    model = std::make_unique<TabularRewardModel>(world->catalogs);
  } else {
    ArConfig cfg = h.ar;
    cfg.separate_reward_head = true;
    auto ar = std::make_unique<ArRewardModel>(cfg);
    model = std::move(ar);
  }
  if (model->num_params() != h.num_params) {
    throw ParseError("parameter count mismatch in " + path.string(), line_no);
  }
  read_params(in, path, line_no, model->params());
  return model;
}

}  // namespace preflab
