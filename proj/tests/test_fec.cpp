#include <algorithm>
#include <set>

#include "crelay/fec.hpp"
#include "crelay/gf256.hpp"
#include "crelay/reed_solomon.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace crelay;
using crelay::testing::corrupt;
using crelay::testing::distinct_indices;
using crelay::testing::random_bytes;

namespace {

// Shift-and-add multiplication, independent of the log/exp tables.
std::uint8_t slow_mul(std::uint8_t a, std::uint8_t b) {
  unsigned acc = 0, x = a;
  for (int bit = 0; bit < 8; ++bit) {
    if (b & (1u << bit)) acc ^= x;
    x <<= 1;
    if (x & 0x100) x ^= gf256::kPrimitivePoly;
  }
  return static_cast<std::uint8_t>(acc);
}

// c(alpha^j) by plain Horner over the codeword, highest degree first.
std::uint8_t eval_codeword(std::span<const std::uint8_t> cw, int j) {
  std::uint8_t x = 1;
  for (int i = 0; i < j; ++i) x = slow_mul(x, 2);
  std::uint8_t acc = 0;
  for (auto c : cw) acc = slow_mul(acc, x) ^ c;
  return acc;
}

fec::Block random_block(Rng& rng) {
  fec::Block b{};
  for (auto& v : b) v = static_cast<std::uint8_t>(rng());
  return b;
}

}  // namespace

TEST_CASE("gf256 tables agree with shift-and-add multiplication") {
  for (unsigned a = 0; a < 256; ++a)
    for (unsigned b = 0; b < 256; ++b)
      REQUIRE(gf256::mul(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)) ==
              slow_mul(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)));
  for (unsigned a = 1; a < 256; ++a) CHECK(gf256::mul(static_cast<std::uint8_t>(a), gf256::inv(static_cast<std::uint8_t>(a))) == 1);
}

TEST_CASE("rs_encode: zero block maps to zero codeword") {
  fec::Block zero{};
  const auto cw = fec::rs_encode(zero);
  CHECK(std::all_of(cw.begin(), cw.end(), [](auto v) { return v == 0; }));
}

TEST_CASE("rs_encode: systematic and every generator root is a codeword root") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = random_block(rng);
    const auto cw = fec::rs_encode(b);
    CHECK(std::equal(b.begin(), b.end(), cw.begin()));
    for (int j = 1; j <= 105; ++j) REQUIRE(eval_codeword(cw, j) == 0);
    // alpha^0 and alpha^106 are not roots of the generator, so a random
    // codeword almost never vanishes there.
  }
}

TEST_CASE("rs_encode rejects wrong block length") {
  std::vector<std::uint8_t> short_block(149);
  CHECK_THROWS_AS(fec::rs_encode(short_block), std::invalid_argument);
}

TEST_CASE("rs_decode: full codeword, no errors") {
  Rng rng(1);
  const auto b = random_block(rng);
  fec::CodewordView v;
  v.values = fec::rs_encode(b);
  v.present.set();
  const auto out = fec::rs_decode(v);
  REQUIRE(out);
  CHECK(*out == b);
}

TEST_CASE("rs_decode: 10 errors with all positions present") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto b = random_block(rng);
    fec::CodewordView v;
    v.values = fec::rs_encode(b);
    v.present.set();
    for (auto i : distinct_indices(rng, 255, 10)) v.values[i] = corrupt(rng, v.values[i]);
    const auto out = fec::rs_decode(v);
    REQUIRE(out);
    CHECK(*out == b);
  }
}

TEST_CASE("rs_decode: data plus 2e parity bytes corrects e data errors") {
  Rng rng(3);
  int recovered = 0;
  const int trials = 10000;
  for (int trial = 0; trial < trials; ++trial) {
    const int e = 1 + trial % 20;
    const auto b = random_block(rng);
    fec::CodewordView v;
    v.values = fec::rs_encode(b);
    for (int i = 0; i < 150 + 2 * e; ++i) v.present.set(i);
    for (auto i : distinct_indices(rng, 150, e)) v.values[i] = corrupt(rng, v.values[i]);
    const auto out = fec::rs_decode(v);
    if (out && *out == b) ++recovered;
  }
  CHECK(recovered == trials);
}

TEST_CASE("rs_decode: 53 errors exceed the budget and fail") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto b = random_block(rng);
    fec::CodewordView v;
    v.values = fec::rs_encode(b);
    v.present.set();
    for (auto i : distinct_indices(rng, 255, 53)) v.values[i] = corrupt(rng, v.values[i]);
    CHECK_FALSE(fec::rs_decode(v));
  }
}

TEST_CASE("rs_decode: exactly 150 present bytes carry no redundancy") {
  // Any 150 values determine one codeword, so errors there are undetectable:
  // the decoder returns whatever block the present bytes pin down.
  Rng rng(14);
  const auto b = random_block(rng);
  fec::CodewordView v;
  v.values = fec::rs_encode(b);
  for (int i = 0; i < 150; ++i) v.present.set(i);
  for (auto i : distinct_indices(rng, 150, 53)) v.values[i] = corrupt(rng, v.values[i]);
  const auto out = fec::rs_decode(v);
  REQUIRE(out);
  CHECK(std::equal(out->begin(), out->end(), v.values.begin()));
  CHECK(*out != b);
}

TEST_CASE("rs_decode: fewer than 150 present bytes always fails") {
  Rng rng(5);
  const auto b = random_block(rng);
  fec::CodewordView v;
  v.values = fec::rs_encode(b);
  for (int i = 0; i < 149; ++i) v.present.set(i);
  CHECK_FALSE(fec::rs_decode(v));
}

TEST_CASE("rs_decode property: exact recovery inside the bound") {
  Rng rng(6);
  for (int trial = 0; trial < 3000; ++trial) {
    const int s = static_cast<int>(uniform_below(rng, 106));
    const int e = static_cast<int>(uniform_below(rng, 70));
    const auto b = random_block(rng);
    fec::CodewordView v;
    v.values = fec::rs_encode(b);
    v.present.set();
    const auto pos = distinct_indices(rng, 255, std::min(255, s + e));
    for (int i = 0; i < s; ++i) v.present.reset(pos[i]);
    for (std::size_t i = s; i < pos.size(); ++i) v.values[pos[i]] = corrupt(rng, v.values[pos[i]]);
    const auto out = fec::rs_decode(v);
    if (2 * e + s <= 105) {
      REQUIRE(out);
      CHECK(*out == b);
    } else if (out) {
      // Outside the bound the decoder cannot land on the original block.
      CHECK(*out != b);
    }
  }
}

TEST_CASE("shortened code used for frame headers corrects up to parity/2 errors") {
  ReedSolomon rs(10);
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const auto data = random_bytes(rng, 18);
    auto cw = rs.encode(data);
    REQUIRE(cw.size() == 28);
    const int e = static_cast<int>(uniform_below(rng, 6));
    for (auto i : distinct_indices(rng, cw.size(), e)) cw[i] = corrupt(rng, cw[i]);
    const auto res = rs.decode(cw, {});
    REQUIRE(res);
    CHECK(*res == e);
    CHECK(std::equal(data.begin(), data.end(), cw.begin()));
  }
}

TEST_CASE("interleave: deinterleave is the inverse, output is a permutation") {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_below(rng, 2300));
    const auto payload = random_bytes(rng, n);
    const auto seed = rng();
    const auto mixed = fec::interleave(payload, seed);
    REQUIRE(fec::deinterleave(mixed, seed) == payload);
    auto a = payload, b = mixed;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("interleave: deterministic in the seed, permutation is a bijection") {
  Rng rng(9);
  const auto payload = random_bytes(rng, 1500);
  CHECK(fec::interleave(payload, 77) == fec::interleave(payload, 77));
  for (std::uint64_t seed : std::initializer_list<std::uint64_t>{0, 1, 12345, fec::frame_perm_seed(65535)}) {
    auto perm = fec::permutation(1500, seed);
    std::sort(perm.begin(), perm.end());
    for (std::uint32_t i = 0; i < perm.size(); ++i) REQUIRE(perm[i] == i);
  }
}

TEST_CASE("interleave spreads a 20-byte burst over several codewords") {
  // 10 codewords' data segments of 150 bytes back to back, as in a 1500-byte frame.
  const std::size_t frame = 1500;
  Rng rng(10);
  int spread = 0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) {
    const auto perm = fec::permutation(frame, fec::frame_perm_seed(static_cast<std::uint16_t>(s)) + s);
    std::vector<std::uint32_t> inverse(frame);
    for (std::size_t i = 0; i < frame; ++i) inverse[perm[i]] = static_cast<std::uint32_t>(i);
    const auto start = uniform_below(rng, frame - 20);
    std::set<std::size_t> codewords;
    for (std::size_t k = 0; k < 20; ++k) codewords.insert(inverse[start + k] / 150);
    if (codewords.size() >= 2) ++spread;
  }
  CHECK(static_cast<double>(spread) / seeds > 0.99);
}
