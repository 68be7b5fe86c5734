// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace preflab {

// Derives an independent stream seed from a root seed, a purpose label and an
// index. Derivation depends only on the inputs, never on draw order, so
// generation is reproducible regardless of how work is scheduled.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0);

// Deterministic generator (splitmix64 core). All draws are implemented here
// rather than via <random> distributions so that byte-identical output does
// not depend on the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  double uniform();                              // [0, 1)
  std::uint64_t uniform_below(std::uint64_t n);  // [0, n), unbiased
  double normal(double mean, double stddev);     // Box-Muller

 private:
  std::uint64_t state_;
};

}  // namespace preflab
