// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace preflab {

// Flat experiment config: one "key = value" per line, full-line # comments.
// The key vocabulary is fixed and unknown keys are rejected at parse time so
// a typo cannot silently fall back to a default.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse_file(const std::filesystem::path& path);
  static KvConfig parse_text(std::string_view text);

  bool has(const std::string& key) const;
  // Injects or replaces a value (used for the --seed override).
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Sorted "key = value" lines covering every key present in the file plus
  // every default a command filled in; written beside each command's outputs.
  std::string resolved_text() const;

 private:
  std::string lookup(const std::string& key, const std::string& fallback, bool required) const;

  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, std::string> resolved_;
};

// Recognized config keys with one-line descriptions.
const std::map<std::string, std::string>& known_config_keys();

// Entry point shared by the binary and the tests. argv[0] is the program
// name. Returns the process exit code: 0 success, 1 validation, 2 io,
// 3 numerical.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace preflab
