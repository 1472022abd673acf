#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace crelay {

// Systematic Reed-Solomon code over GF(256) with `parity` check symbols and
// consecutive generator roots alpha^1 .. alpha^parity. Codewords of any length
// n <= 255 are accepted; shorter ones are the shortened code (implicit leading
// zeros). Byte i of a length-n codeword is the coefficient of x^(n-1-i), so the
// data bytes come first and the parity bytes last.
class ReedSolomon {
 public:
  explicit ReedSolomon(int parity);

  int parity() const { return parity_; }

  /// Writes the parity for `data` into `parity_out` (size parity()).
  void encode(std::span<const std::uint8_t> data, std::span<std::uint8_t> parity_out) const;

  /// Returns data followed by its parity.
  std::vector<std::uint8_t> encode(std::span<const std::uint8_t> data) const;

  /// Errors-and-erasures decoding in place. Erased positions may hold any
  /// value. Returns the number of corrected non-erased symbols on success, or
  /// nullopt when 2*errors + erasures exceeds the parity budget (as far as the
  /// decoder can tell).
  std::optional<int> decode(std::span<std::uint8_t> codeword,
                            std::span<const int> erasures) const;

 private:
  void syndromes(std::span<const std::uint8_t> codeword, std::span<std::uint8_t> out) const;

  int parity_;
  std::vector<std::uint8_t> generator_;  // g_0 .. g_parity, g_parity == 1
};

}  // namespace crelay
