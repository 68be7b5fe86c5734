// SPDX-License-Identifier: Apache-2.0
#include "preflab/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "preflab/errors.hpp"

namespace preflab {

namespace {

using nlohmann::json;

const char* const kPairKeys[] = {"prompt_id",      "prompt_tokens", "chosen_tokens",
                                 "rejected_tokens", "confidence",    "true_reward_gap",
                                 "meta"};

json pair_to_json(const PreferencePair& pair) {
  json j = {
      {"prompt_id", pair.prompt.id},
      {"prompt_tokens", pair.prompt.tokens},
      {"chosen_tokens", pair.chosen.tokens},
      {"rejected_tokens", pair.rejected.tokens},
      {"meta", pair.meta},
  };
  if (pair.confidence) j["confidence"] = *pair.confidence;
  if (pair.true_reward_gap) j["true_reward_gap"] = *pair.true_reward_gap;
  return j;
}

PreferencePair pair_from_json(const json& j, std::size_t line) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(kPairKeys), std::end(kPairKeys),
                     [&](const char* k) { return it.key() == k; }) == std::end(kPairKeys)) {
      throw ParseError("unknown key '" + it.key() + "' in pair record", line);
    }
  }
  PreferencePair pair;
  try {
    pair.prompt.id = j.at("prompt_id").get<int>();
    pair.prompt.tokens = j.at("prompt_tokens").get<std::vector<int>>();
    pair.chosen.tokens = j.at("chosen_tokens").get<std::vector<int>>();
    pair.rejected.tokens = j.at("rejected_tokens").get<std::vector<int>>();
    if (j.contains("confidence")) pair.confidence = j.at("confidence").get<double>();
    if (j.contains("true_reward_gap")) {
      pair.true_reward_gap = j.at("true_reward_gap").get<double>();
    }
    if (j.contains("meta")) pair.meta = j.at("meta").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ParseError("missing or mistyped pair field: " + std::string(e.what()), line);
  }
  if (pair.chosen.tokens.empty() || pair.rejected.tokens.empty()) {
    throw ParseError("responses must be non-empty", line);
  }
  if (pair.chosen == pair.rejected) {
    throw ParseError("chosen and rejected responses are identical", line);
  }
  return pair;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open dataset file for writing: " + path.string());
  for (const PreferencePair& pair : ds.pairs) {
    out << pair_to_json(pair).dump() << '\n';
  }
  if (!out) throw IoError("failed writing dataset file: " + path.string());
}

PreferenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path.string());
  PreferenceDataset ds;
  ds.name = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  bool saw_record = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("invalid JSON: " + std::string(e.what()), line_no);
    }
    if (!j.is_object()) throw ParseError("line is not a JSON object", line_no);
    if (!saw_record && j.contains("schema_version")) {
      int version = j.at("schema_version").get<int>();
      if (version != kDatasetSchemaVersion) {
        throw VersionError("unsupported dataset schema version " + std::to_string(version) +
                           " (this build reads version " +
                           std::to_string(kDatasetSchemaVersion) + ")");
      }
      saw_record = true;  // header consumed; records must follow
      continue;
    }
    saw_record = true;
    ds.pairs.push_back(pair_from_json(j, line_no));
  }
  if (ds.pairs.empty()) {
    std::cerr << "warning: dataset " << path.string()
              << " is empty; usable for statistics but not training\n";
  }
  return ds;
}

void save_reward_snapshot(const RewardSnapshot& snap, const std::filesystem::path& path) {
  if (snap.chosen.size() != snap.rejected.size()) {
    throw InvalidArgument("reward snapshot: chosen/rejected length mismatch");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open rewards file for writing: " + path.string());
  for (std::size_t i = 0; i < snap.size(); ++i) {
    json j = {{"pair_index", i},
              {"r_chosen", snap.chosen[i]},
              {"r_rejected", snap.rejected[i]}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing rewards file: " + path.string());
}

RewardSnapshot load_reward_snapshot(const std::filesystem::path& path,
                                    std::size_t expected_pairs) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rewards file: " + path.string());
  RewardSnapshot snap;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("invalid JSON: " + std::string(e.what()), line_no);
    }
    try {
      auto index = j.at("pair_index").get<std::size_t>();
      if (index != snap.size()) {
        throw ParseError("pair_index " + std::to_string(index) + " out of order (expected " +
                             std::to_string(snap.size()) + ")",
                         line_no);
      }
      snap.chosen.push_back(j.at("r_chosen").get<double>());
      snap.rejected.push_back(j.at("r_rejected").get<double>());
    } catch (const json::exception& e) {
      throw ParseError("missing or mistyped reward field: " + std::string(e.what()), line_no);
    }
  }
  if (snap.size() != expected_pairs) {
    throw InvalidArgument("rewards file " + path.string() + " holds " +
                          std::to_string(snap.size()) + " pairs but the dataset has " +
                          std::to_string(expected_pairs));
  }
  return snap;
}

DatasetStats dataset_stats(const PreferenceDataset& ds) {
  DatasetStats stats;
  stats.name = ds.name;
  stats.count = ds.pairs.size();
  if (ds.pairs.empty()) return stats;
  double conf_sum = 0.0;
  std::size_t conf_n = 0;
  double edit_sum = 0.0;
  for (const PreferencePair& pair : ds.pairs) {
    if (pair.confidence) {
      conf_sum += *pair.confidence;
      ++conf_n;
    }
    edit_sum += normalized_edit_distance(pair.chosen, pair.rejected);
  }
  if (conf_n > 0) stats.mean_confidence = conf_sum / static_cast<double>(conf_n);
  stats.mean_edit_distance = edit_sum / static_cast<double>(ds.pairs.size());
  return stats;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("lower_median: empty sample");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

SplitResult split_by_confidence_and_edit_distance(const PreferenceDataset& ds) {
  if (ds.pairs.empty()) {
    throw InvalidArgument("split: dataset is empty");
  }
  std::vector<double> confidences, edits;
  confidences.reserve(ds.pairs.size());
  edits.reserve(ds.pairs.size());
  for (const PreferencePair& pair : ds.pairs) {
    if (!pair.confidence) {
      throw InvalidArgument("split: every pair needs a confidence score");
    }
    confidences.push_back(*pair.confidence);
    edits.push_back(normalized_edit_distance(pair.chosen, pair.rejected));
  }
  double conf_p50 = lower_median(confidences);
  double edit_p50 = lower_median(edits);

  SplitResult result;
  result.high_conf_high_edit.name = ds.name + "_hc_he";
  result.low_conf_low_edit.name = ds.name + "_lc_le";
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    bool high_conf = confidences[i] >= conf_p50;
    bool high_edit = edits[i] >= edit_p50;
    if (high_conf && high_edit) {
      result.high_conf_high_edit.pairs.push_back(ds.pairs[i]);
    } else if (!high_conf && !high_edit) {
      result.low_conf_low_edit.pairs.push_back(ds.pairs[i]);
    }
  }

  auto make_row = [&](const PreferenceDataset& d, const std::string& label) {
    DatasetStats stats = dataset_stats(d);
    SplitRow row;
    row.split = label;
    row.count = stats.count;
    row.mean_confidence = stats.mean_confidence;
    row.mean_edit_distance = stats.mean_edit_distance;
    row.conf_threshold = conf_p50;
    row.edit_threshold = edit_p50;
    return row;
  };
  result.report.push_back(make_row(ds, "all"));
  result.report.push_back(make_row(result.high_conf_high_edit, "hc_he"));
  result.report.push_back(make_row(result.low_conf_low_edit, "lc_le"));
  return result;
}

void write_split_report_csv(const std::vector<SplitRow>& rows,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open split report for writing: " + path.string());
  out << "split,count,mean_confidence,mean_edit_distance,conf_threshold,edit_threshold\n";
  for (const SplitRow& row : rows) {
    out << row.split << ',' << row.count << ','
        << (row.mean_confidence ? format_double(*row.mean_confidence) : "") << ','
        << format_double(row.mean_edit_distance) << ',' << format_double(row.conf_threshold)
        << ',' << format_double(row.edit_threshold) << '\n';
  }
  if (!out) throw IoError("failed writing split report: " + path.string());
}

std::vector<int> text_to_tokens(std::string_view text) {
  std::vector<int> tokens;
  tokens.reserve(text.size());
  for (unsigned char c : text) tokens.push_back(static_cast<int>(c));
  return tokens;
}

std::string tokens_to_text(const std::vector<int>& tokens) {
  std::string text;
  text.reserve(tokens.size());
  for (int t : tokens) {
    if (t < 0 || t > 255) {
      throw InvalidArgument("tokens_to_text: token " + std::to_string(t) + " is not a byte");
    }
    text.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return text;
}

}  // namespace preflab
