#pragma once

#include <array>
#include <cstdint>

namespace crelay::gf256 {

// GF(2^8) generated by x^8 + x^4 + x^3 + x^2 + 1 (0x11D), primitive element 2.
inline constexpr unsigned kPrimitivePoly = 0x11D;
inline constexpr int kOrder = 255;

struct Tables {
  std::array<std::uint8_t, 512> exp{};
  std::array<int, 256> log{};

  constexpr Tables() {
    unsigned x = 1;
    for (int i = 0; i < kOrder; ++i) {
      exp[i] = static_cast<std::uint8_t>(x);
      log[x] = i;
      x <<= 1;
      if (x & 0x100) x ^= kPrimitivePoly;
    }
    for (int i = kOrder; i < 512; ++i) exp[i] = exp[i - kOrder];
    log[0] = -1;
  }
};

inline constexpr Tables kTables{};

inline constexpr std::uint8_t add(std::uint8_t a, std::uint8_t b) { return a ^ b; }

inline constexpr std::uint8_t mul(std::uint8_t a, std::uint8_t b) {
  if (a == 0 || b == 0) return 0;
  return kTables.exp[kTables.log[a] + kTables.log[b]];
}

inline constexpr std::uint8_t div(std::uint8_t a, std::uint8_t b) {
  // b != 0 is a precondition.
  if (a == 0) return 0;
  return kTables.exp[kTables.log[a] + kOrder - kTables.log[b]];
}

inline constexpr std::uint8_t inv(std::uint8_t a) { return kTables.exp[kOrder - kTables.log[a]]; }

/// alpha^k for any integer k.
inline constexpr std::uint8_t pow_alpha(int k) {
  k %= kOrder;
  if (k < 0) k += kOrder;
  return kTables.exp[k];
}

inline constexpr int log(std::uint8_t a) { return kTables.log[a]; }

}  // namespace crelay::gf256
