#pragma once

// Deterministic randomness helpers. std::mt19937_64 output is fully
// specified by the standard, but the std distributions are not, so every
// draw here goes through hand-rolled mappings that behave identically on
// any conforming platform.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ctxmatch/util.hpp"

namespace ctxmatch {

using Rng = std::mt19937_64;

// Derives a stream-specific seed from a base seed and a label, so each
// component (baseline, selector, matcher, ...) gets an independent stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  return Fnv1a().update(base).update(label).digest();
}

// Uniform integer in [0, n) via rejection sampling on raw engine output.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  if (n == 0) fail("uniform_below: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

// Uniform double in [0, 1) with 53-bit resolution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Fisher-Yates. Deterministic across platforms (unlike std::shuffle).
template <typename T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// Draws k distinct indices from [0, n), in draw order. k may exceed n, in
// which case all n indices are returned.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n,
                                                           std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (k > n) k = n;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace ctxmatch
