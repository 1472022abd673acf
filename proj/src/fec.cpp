#include "crelay/fec.hpp"

#include <algorithm>
#include <stdexcept>

#include "crelay/reed_solomon.hpp"
#include "crelay/rng.hpp"

namespace crelay::fec {

namespace {

const ReedSolomon& data_code() {
  static const ReedSolomon code(static_cast<int>(kParityLen));
  return code;
}

}  // namespace

Codeword rs_encode(std::span<const std::uint8_t> block) {
  if (block.size() != kBlockLen) throw std::invalid_argument("rs_encode: block must be exactly 150 bytes");
  Codeword cw{};
  std::copy(block.begin(), block.end(), cw.begin());
  data_code().encode(block, std::span(cw).subspan(kBlockLen));
  return cw;
}

std::optional<Block> rs_decode(const CodewordView& view) {
  auto res = rs_decode_detailed(view);
  if (!res) return std::nullopt;
  return res->block;
}

std::optional<DecodeResult> rs_decode_detailed(const CodewordView& view) {
  const std::size_t present = view.present.count();
  if (present < kBlockLen) return std::nullopt;

  Codeword work = view.values;
  std::vector<int> erasures;
  erasures.reserve(kCodewordLen - present);
  for (std::size_t i = 0; i < kCodewordLen; ++i)
    if (!view.present[i]) erasures.push_back(static_cast<int>(i));

  if (!data_code().decode(work, erasures)) return std::nullopt;

  DecodeResult res;
  std::copy_n(work.begin(), kBlockLen, res.block.begin());

  // Re-encode and check the present bytes against the decoder's claim.
  const Codeword check = rs_encode(res.block);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < kCodewordLen; ++i)
    if (view.present[i] && check[i] != view.values[i]) ++mismatches;
  if (2 * mismatches + erasures.size() > kParityLen) return std::nullopt;
  res.corrected = static_cast<int>(mismatches);
  res.erasures = static_cast<int>(erasures.size());
  return res;
}

std::vector<std::uint32_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::vector<std::uint8_t> interleave(std::span<const std::uint8_t> payload, std::uint64_t perm_seed) {
  const auto perm = permutation(payload.size(), perm_seed);
  std::vector<std::uint8_t> out(payload.size());
  for (std::size_t i = 0; i < payload.size(); ++i) out[perm[i]] = payload[i];
  return out;
}

std::vector<std::uint8_t> deinterleave(std::span<const std::uint8_t> payload, std::uint64_t perm_seed) {
  const auto perm = permutation(payload.size(), perm_seed);
  std::vector<std::uint8_t> out(payload.size());
  for (std::size_t i = 0; i < payload.size(); ++i) out[i] = payload[perm[i]];
  return out;
}

}  // namespace crelay::fec
