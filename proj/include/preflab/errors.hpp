// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace preflab {

// Error categories map 1:1 to CLI exit codes.
enum class ErrorKind { Validation = 1, Io = 2, Numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

class UnsupportedBackend : public Error {
 public:
  explicit UnsupportedBackend(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorKind::Validation, what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

// Thrown when a generation plan asks for more of one pair class than the
// world contains; carries the fraction that would have been satisfiable.
class InfeasiblePlan : public Error {
 public:
  InfeasiblePlan(const std::string& what, double achievable_fraction)
      : Error(ErrorKind::Validation, what), achievable_(achievable_fraction) {}
  double achievable_fraction() const noexcept { return achievable_; }

 private:
  double achievable_;
};

class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what)
      : Error(ErrorKind::Numerical, what), pair_index_(kNoPair) {}
  NumericalFailure(const std::string& what, std::size_t pair_index)
      : Error(ErrorKind::Numerical, what + " (pair " + std::to_string(pair_index) + ")"),
        pair_index_(pair_index) {}
  bool has_pair_index() const noexcept { return pair_index_ != kNoPair; }
  std::size_t pair_index() const noexcept { return pair_index_; }

 private:
  static constexpr std::size_t kNoPair = static_cast<std::size_t>(-1);
  std::size_t pair_index_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace preflab
