#pragma once

// Counter-based random generator for the simulation harness.
//
// Generator id: "splitmix64-counter/v1". The i-th draw under a key is
//   mix64(key + i * 0x9E3779B97F4A7C15)
// with the SplitMix64 finalizer as mix64. The generator is stateless apart
// from the counter, so streams can be split without coordination:
//   * per-trial streams use key = seed ^ trial_index,
//   * named substreams use derive(tag) = mix64(key ^ tag).
// All arithmetic is unsigned 64-bit, so sequences are identical across
// platforms and thread schedules.

#include <cstdint>
#include <numeric>
#include <vector>

#include "capa/errors.hpp"

namespace capa {

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static CounterRng for_trial(std::uint64_t seed, std::uint64_t trial_index) {
    return CounterRng(seed ^ trial_index);
  }

  CounterRng derive(std::uint64_t tag) const { return CounterRng(mix64(key_ ^ tag)); }

  std::uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ULL;
    return mix64(key_ + counter_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool next_bool() { return (next_u64() & 1u) != 0; }

  // Unbiased uniform integer in [0, bound) by rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) fail(errc::invalid_argument, "next_below(0)");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    for (;;) {
      const std::uint64_t v = next_u64();
      if (v < limit) return v % bound;
    }
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Exact-count subset: k distinct indices out of [0, n), via the first k steps
// of a Fisher-Yates shuffle.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           CounterRng& rng) {
  if (k > n) fail(errc::invalid_argument, "sample_without_replacement: k > n");
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(k);
  return indices;
}

}  // namespace capa
