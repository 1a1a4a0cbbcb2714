#include "latent_truth/rng.hpp"

#include <stdexcept>

namespace latent_truth {

namespace {

__extension__ using u128 = unsigned __int128;

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index) {
  std::uint64_t h = mix64(seed + kGoldenGamma);
  h = mix64(h ^ fnv1a(label));
  return mix64(h + (index + 1) * kGoldenGamma);
}

std::uint64_t CounterRng::u64_at(std::uint64_t key, std::uint64_t index) {
  return mix64(key + (index + 1) * kGoldenGamma);
}

double CounterRng::uniform_at(std::uint64_t key, std::uint64_t index) {
  return static_cast<double>(u64_at(key, index) >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::next_u64() { return u64_at(key_, counter_++); }

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("CounterRng::below: bound is 0");
  // Lemire's multiply-shift with rejection of the biased low zone.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const u128 m = static_cast<u128>(next_u64()) * bound;
    if (static_cast<std::uint64_t>(m) >= threshold) {
      return static_cast<std::uint64_t>(m >> 64);
    }
  }
}

std::size_t CounterRng::categorical(std::span<const double> weights) {
  return categorical_from_uniform(weights, uniform());
}

std::vector<std::size_t> CounterRng::permutation(std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::size_t categorical_from_uniform(std::span<const double> weights,
                                     double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (weights.empty() || !(total > 0.0)) {
    throw std::invalid_argument("categorical draw with no positive weight");
  }
  const double target = u * total;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    cum += weights[k];
    last_positive = k;
    if (target < cum) return k;
  }
  // u * total rounded past the final cumulative sum.
  return last_positive;
}

std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t key) {
  CounterRng rng(key);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.below(n);
  return idx;
}

}  // namespace latent_truth
