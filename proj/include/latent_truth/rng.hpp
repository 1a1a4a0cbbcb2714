#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace latent_truth {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Sub-seed for a labelled component, e.g. derive_seed(seed, "sem/draw", t).
// Stable across platforms and builds.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index = 0);

/// Counter-based generator: the k-th output is a pure function of (key, k),
/// so any draw can be reproduced without replaying the stream. Output k is
/// mix64(key + (k + 1) * golden_gamma), i.e. SplitMix64 addressed by counter.
///
/// Only integer arithmetic is used for bounded integers and a fixed 53-bit
/// mapping for doubles; no <random> distributions, whose algorithms differ
/// between standard libraries.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  std::uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();

  // Uniform on {0, ..., bound - 1}; bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  // Index drawn with probability proportional to weights (need not sum to 1).
  std::size_t categorical(std::span<const double> weights);

  // Uniform random permutation of {0, ..., n - 1} (Fisher-Yates).
  std::vector<std::size_t> permutation(std::size_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  // Stateless access to output `index` of the stream `key`.
  static std::uint64_t u64_at(std::uint64_t key, std::uint64_t index);
  static double uniform_at(std::uint64_t key, std::uint64_t index);

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

// Inverse-CDF lookup: first index whose cumulative weight exceeds u * total.
// Zero-weight entries are never returned.
std::size_t categorical_from_uniform(std::span<const double> weights, double u);

// Indices of a with-replacement resample of size n.
std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t key);

}  // namespace latent_truth
