// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "preflab/core.hpp"

namespace preflab {

inline constexpr int kDatasetSchemaVersion = 1;

// One pair per line:
//   {"prompt_id":..,"prompt_tokens":[..],"chosen_tokens":[..],
//    "rejected_tokens":[..],"confidence":..,"true_reward_gap":..,"meta":{..}}
// confidence and true_reward_gap are omitted when absent. A leading
// {"schema_version": N} line is accepted (and checked) but never written;
// the current layout is version 1.
void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& path);

// Loads a JSONL dataset. An empty file yields an empty dataset (usable for
// statistics, rejected by training); malformed lines raise a parse error
// naming the 1-based line number.
PreferenceDataset load_dataset(const std::filesystem::path& path);

struct DatasetStats {
  std::string name;
  std::size_t count = 0;
  std::optional<double> mean_confidence;  // absent when no pair carries one
  double mean_edit_distance = 0.0;
};

DatasetStats dataset_stats(const PreferenceDataset& ds);

struct SplitRow {
  std::string split;
  std::size_t count = 0;
  std::optional<double> mean_confidence;
  double mean_edit_distance = 0.0;
  double conf_threshold = 0.0;
  double edit_threshold = 0.0;
};

struct SplitResult {
  PreferenceDataset high_conf_high_edit;
  PreferenceDataset low_conf_low_edit;
  std::vector<SplitRow> report;  // parent, hc_he, lc_le
};

// Value at index floor((n-1)/2) of the sorted sample: the lower median.
double lower_median(std::vector<double> values);

// Partitions by the 50th percentiles of confidence and chosen/rejected edit
// distance: the high split takes pairs at or above both thresholds, the low
// split pairs strictly below both; pairs mixed across the two axes are
// dropped. Every pair must carry a confidence score.
SplitResult split_by_confidence_and_edit_distance(const PreferenceDataset& ds);

// Header: split,count,mean_confidence,mean_edit_distance,conf_threshold,edit_threshold
void write_split_report_csv(const std::vector<SplitRow>& rows, const std::filesystem::path& path);

// Teacher rewards as JSONL, one line per pair:
//   {"pair_index":i,"r_chosen":..,"r_rejected":..}
// Lines must arrive in pair order; the count must match the dataset.
void save_reward_snapshot(const RewardSnapshot& snap, const std::filesystem::path& path);
RewardSnapshot load_reward_snapshot(const std::filesystem::path& path,
                                    std::size_t expected_pairs);

// Shortest round-trip decimal form; used everywhere a double lands in a file
// so that reruns are byte-identical.
std::string format_double(double v);

// Byte-level adapter: each byte of text becomes one token id in [0, 255].
std::vector<int> text_to_tokens(std::string_view text);
std::string tokens_to_text(const std::vector<int>& tokens);

}  // namespace preflab
