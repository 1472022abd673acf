#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace crelay::fec {

/// Parameters of the (255,150) code that carries packet data.
struct RsParams {
  static constexpr std::size_t n = 255;
  static constexpr std::size_t k = 150;
  static constexpr std::size_t t_budget = n - k;
};

inline constexpr std::size_t kCodewordLen = RsParams::n;
inline constexpr std::size_t kBlockLen = RsParams::k;
inline constexpr std::size_t kParityLen = RsParams::t_budget;

using Block = std::array<std::uint8_t, kBlockLen>;
using Codeword = std::array<std::uint8_t, kCodewordLen>;

/// A partially known codeword: values at non-present positions are ignored.
struct CodewordView {
  Codeword values{};
  std::bitset<kCodewordLen> present;
};

/// Systematic encoding: the first 150 bytes of the result are `block`.
/// Throws std::invalid_argument unless block.size() == 150.
Codeword rs_encode(std::span<const std::uint8_t> block);

/// Errors-and-erasures decoding. Recovers the block whenever
/// 2*errors + erasures <= 105. The result is re-encoded and compared against
/// every present byte; nullopt means more parity is needed.
std::optional<Block> rs_decode(const CodewordView& view);

struct DecodeResult {
  Block block{};
  int corrected = 0;  // present bytes that disagreed with the decoded codeword
  int erasures = 0;
  /// Redundancy left unused by the decode; zero means nothing checked the result.
  int slack() const { return static_cast<int>(kParityLen) - 2 * corrected - erasures; }
};

/// rs_decode plus the correction bookkeeping callers need to judge how much
/// redundancy vouched for the answer.
std::optional<DecodeResult> rs_decode_detailed(const CodewordView& view);

/// Fisher-Yates permutation of [0, n) driven by `seed`.
std::vector<std::uint32_t> permutation(std::size_t n, std::uint64_t seed);

/// Byte i of `payload` is moved to position perm[i].
std::vector<std::uint8_t> interleave(std::span<const std::uint8_t> payload, std::uint64_t perm_seed);
std::vector<std::uint8_t> deinterleave(std::span<const std::uint8_t> payload, std::uint64_t perm_seed);

/// Network-wide constant mixed into every frame's permutation seed.
inline constexpr std::uint64_t kInterleaveConstant = 0x43524C59'5045524Dull;

/// Sender and overhearers derive the same permutation from the frame sequence number.
inline std::uint64_t frame_perm_seed(std::uint16_t frame_seq) {
  return static_cast<std::uint64_t>(frame_seq) ^ kInterleaveConstant;
}

}  // namespace crelay::fec
