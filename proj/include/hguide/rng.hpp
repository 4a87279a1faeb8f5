// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hguide {

// Counter-based deterministic randomness. Every consumer derives its own
// stream key from the master seed, so path-level parallelism and reruns are
// reproducible bit for bit regardless of evaluation order.

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// stream = hash(seed, label) or hash(seed, index); chains compose
inline std::uint64_t derive(std::uint64_t key, std::uint64_t word) {
  return mix64(mix64(key + kGolden) ^ mix64(word + 0x6a09e667f3bcc909ull));
}

inline std::uint64_t derive(std::uint64_t key, std::string_view label) {
  return derive(key, fnv1a64(label));
}

// i-th word of the stream identified by key
inline std::uint64_t word_at(std::uint64_t key, std::uint64_t i) {
  return mix64(key + (i + 1) * kGolden);
}

inline double to_unit(std::uint64_t bits) {  // [0,1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double to_unit_open(std::uint64_t bits) {  // (0,1]
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

// Box-Muller, two stream words per draw, random access by index.
inline double normal_at(std::uint64_t key, std::uint64_t idx) {
  const double u1 = to_unit_open(word_at(key, 2 * idx));
  const double u2 = to_unit(word_at(key, 2 * idx + 1));
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// Sequential view over a stream, for consumers without a natural index space.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_word() { return word_at(key_, n_++); }
  double uniform() { return to_unit(next_word()); }
  double normal() {
    const double u1 = to_unit_open(next_word());
    const double u2 = to_unit(next_word());
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }
  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return next_word() % n; }

 private:
  std::uint64_t key_;
  std::uint64_t n_ = 0;
};

}  // namespace hguide
