// SPDX-License-Identifier: Apache-2.0
//
// Seeded randomness. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; the distributions below are implemented here rather
// than taken from <random> so results are identical across standard libraries.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hmnet {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derive a child seed from a parent seed, a tag, and an index.
///
/// Seed splitting scheme: child = mix64(mix64(parent ^ fnv1a(tag)) + index).
/// Every random component (initialization of each stack, data generation,
/// batch packing, epoch shuffles) receives its own child seed, so changing
/// one component never shifts the stream of another.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n). n must be > 0.
  std::size_t below(std::size_t n);
  /// Standard normal (Box-Muller, one value per call).
  double normal();
  /// Normal(0, std) truncated to [-2 std, 2 std] by rejection.
  double truncated_normal(double std);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates, back to front.
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hmnet
