#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace crelay {

// All randomness in the project flows through mt19937_64 plus the helpers
// below. The standard distributions are implementation-defined, so bounded
// integers and unit doubles are drawn here to keep runs bit-identical across
// standard libraries.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derives a stream seed from an ordered tuple of integers.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

/// Small counter-based stream for places that need many short, independently
/// seeded sequences (per-sample byte picks); seeding an mt19937_64 each time
/// would dominate the cost.
class SplitMixStream {
 public:
  using result_type = std::uint64_t;
  explicit SplitMixStream(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ull;
    return splitmix64(state_);
  }

 private:
  std::uint64_t state_;
};

/// Uniform integer in [0, n). n must be non-zero.
template <class Gen>
std::uint64_t uniform_below(Gen& rng, std::uint64_t n) {
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

/// Uniform double in [0, 1) with 53 bits of precision.
template <class Gen>
double uniform01(Gen& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Gen>
bool bernoulli(Gen& rng, double p) { return uniform01(rng) < p; }

}  // namespace crelay
