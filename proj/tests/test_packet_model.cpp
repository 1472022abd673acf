#include <algorithm>

#include "crelay/packet_model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace crelay;
using crelay::testing::corrupt;
using crelay::testing::distinct_indices;
using crelay::testing::random_bytes;

namespace {

Segment seg(int a, int b, int e) {
  return Segment{static_cast<std::uint16_t>(a), static_cast<std::uint16_t>(b), static_cast<std::uint16_t>(e)};
}

// Delivers [a,b) of `cw` into `rec`.
void deliver(Record& rec, const fec::Codeword& cw, Segment s) {
  merge_segment(rec, s, std::span<const std::uint8_t>(cw.data() + s.start, s.length()));
}

fec::Codeword random_codeword(Rng& rng) {
  const auto data = random_bytes(rng, 150);
  return fec::rs_encode(data);
}

bool disjoint_sorted(const Record& r) {
  for (std::size_t i = 1; i < r.segments.size(); ++i)
    if (r.segments[i - 1].end > r.segments[i].start) return false;
  for (const auto& s : r.segments)
    if (s.start >= s.end || s.est_errors > s.length()) return false;
  return true;
}

}  // namespace

TEST_CASE("merge_segment: empty record takes the segment as is") {
  Rng rng(1);
  const auto cw = random_codeword(rng);
  Record r;
  deliver(r, cw, seg(0, 150, 2));
  REQUIRE(r.segments.size() == 1);
  CHECK(r.segments[0] == seg(0, 150, 2));
  CHECK(r.coverage() == 150);
}

TEST_CASE("merge_segment: overlap keeps bytes from the cleaner segment") {
  fec::Codeword first{}, second{};
  std::fill(first.begin(), first.end(), 0xAA);
  std::fill(second.begin(), second.end(), 0xBB);
  Record r;
  deliver(r, first, seg(0, 150, 5));
  deliver(r, second, seg(100, 200, 0));
  REQUIRE(r.segments.size() == 2);
  CHECK(r.segments[0] == seg(0, 100, 5));
  CHECK(r.segments[1] == seg(100, 200, 0));
  for (int i = 0; i < 100; ++i) REQUIRE(r.values[i] == 0xAA);
  for (int i = 100; i < 200; ++i) REQUIRE(r.values[i] == 0xBB);

  // The noisier newcomer only fills the gaps.
  fec::Codeword third{};
  std::fill(third.begin(), third.end(), 0xCC);
  deliver(r, third, seg(50, 255, 9));
  CHECK(r.segments.back() == seg(200, 255, 9));
  CHECK(r.values[120] == 0xBB);
  CHECK(r.values[220] == 0xCC);
}

TEST_CASE("merge_segment: equal estimates keep the older bytes") {
  fec::Codeword first{}, second{};
  std::fill(first.begin(), first.end(), 1);
  std::fill(second.begin(), second.end(), 2);
  Record r;
  deliver(r, first, seg(0, 100, 1));
  deliver(r, second, seg(50, 150, 1));
  CHECK(r.values[75] == 1);
  CHECK(r.values[120] == 2);
  CHECK(r.coverage() == 150);
}

TEST_CASE("merge_segment: adjacent segments cover their union") {
  Rng rng(2);
  const auto cw = random_codeword(rng);
  Record r;
  deliver(r, cw, seg(0, 100, 1));
  deliver(r, cw, seg(100, 150, 1));
  CHECK(r.coverage() == 150);
  CHECK(r.present().count() == 150);
  CHECK(r.est_total() == 2);
}

TEST_CASE("merge_segment rejects malformed input") {
  Record r;
  std::vector<std::uint8_t> bytes(10);
  CHECK_THROWS_AS(merge_segment(r, seg(250, 260, 0), bytes), std::invalid_argument);
  CHECK_THROWS_AS(merge_segment(r, seg(0, 11, 0), bytes), std::invalid_argument);
}

TEST_CASE("merge_segment property: idempotent, disjoint, values follow the winner") {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    Record r;
    const int count = 1 + static_cast<int>(uniform_below(rng, 6));
    for (int k = 0; k < count; ++k) {
      const int a = static_cast<int>(uniform_below(rng, 254));
      const int b = a + 1 + static_cast<int>(uniform_below(rng, 255 - a));
      const int e = static_cast<int>(uniform_below(rng, 8));
      fec::Codeword fill{};
      std::fill(fill.begin(), fill.end(), static_cast<std::uint8_t>(k + 1));
      const Record before = r;
      deliver(r, fill, seg(a, b, e));
      REQUIRE(disjoint_sorted(r));
      // Coverage is the union of everything delivered so far.
      CHECK(r.coverage() >= before.coverage());
      CHECK(r.coverage() >= b - a);

      Record again = r;
      fec::Codeword same{};
      for (const auto& s : r.segments)
        for (int i = s.start; i < s.end; ++i) same[i] = r.values[i];
      for (const auto& s : r.segments) deliver(again, same, s);
      CHECK(again.segments == r.segments);
      CHECK(again.values == r.values);
    }
  }
}

TEST_CASE("decodable_estimate arithmetic") {
  CHECK(decodable_estimate(std::vector<Segment>{seg(0, 150, 0)}));
  CHECK_FALSE(decodable_estimate(std::vector<Segment>{seg(0, 150, 1)}));
  CHECK(decodable_estimate(std::vector<Segment>{seg(0, 152, 1)}));
  CHECK(decodable_estimate(std::vector<Segment>{seg(0, 200, 52), seg(200, 255, 0)}));
  CHECK_FALSE(decodable_estimate(std::vector<Segment>{seg(0, 200, 53), seg(200, 255, 0)}));
}

TEST_CASE("try_decode: clean codewords decode completely") {
  Rng rng(4);
  const std::vector<std::uint8_t> packet = random_bytes(rng, 1500);
  const auto blocks = split_blocks(packet);
  REQUIRE(blocks.size() == 10);
  PacketBuffer buf(PacketKey{1, 2, 3}, 10);
  for (int i = 0; i < 10; ++i) deliver(buf.records[i], fec::rs_encode(blocks[i]), seg(0, 255, 0));
  const auto rep = try_decode(buf);
  CHECK(rep.newly_decoded == 0x3FF);
  CHECK(buf.decoded_mask == 0x3FF);
  CHECK(buf.complete());
  std::vector<fec::Block> out;
  for (const auto& r : buf.records) out.push_back(r.decoded_block);
  CHECK(join_blocks(out, packet.size()) == packet);
}

TEST_CASE("try_decode: partial success, then the failed block decodes after more parity") {
  Rng rng(5);
  const auto c0 = random_codeword(rng);
  const auto c1 = random_codeword(rng);
  PacketBuffer buf(PacketKey{1, 2, 3}, 2);

  auto noisy0 = c0;
  for (auto i : distinct_indices(rng, 255, 5)) noisy0[i] = corrupt(rng, noisy0[i]);
  auto noisy1 = c1;
  for (auto i : distinct_indices(rng, 255, 60)) noisy1[i] = corrupt(rng, noisy1[i]);
  deliver(buf.records[0], noisy0, seg(0, 255, 5));
  deliver(buf.records[1], noisy1, seg(0, 255, 60));
  auto rep = try_decode(buf);
  CHECK(buf.decoded_mask == 0x1);
  CHECK(rep.failed == 0x2);

  // Incremental case: the second block first arrives as data plus too little
  // parity, then one more segment completes it.
  PacketBuffer inc(PacketKey{1, 2, 4}, 1);
  auto noisy = c1;
  noisy[10] = corrupt(rng, noisy[10]);
  deliver(inc.records[0], noisy, seg(0, 150, 1));
  // 150 bytes leave no redundancy to check anything, so demand a little.
  CHECK(try_decode(inc, 1).failed == 0x1);
  deliver(inc.records[0], c1, seg(150, 152, 0));
  CHECK(try_decode(inc).newly_decoded == 0x1);
  CHECK(std::equal(inc.records[0].decoded_block.begin(), inc.records[0].decoded_block.end(), c1.begin()));
}

TEST_CASE("try_decode: slack requirement rejects decodes nothing could check") {
  Rng rng(6);
  const auto c = random_codeword(rng);
  PacketBuffer buf(PacketKey{1, 2, 3}, 1);
  deliver(buf.records[0], c, seg(0, 150, 0));
  CHECK(try_decode(buf, 4).failed == 1);
  deliver(buf.records[0], c, seg(150, 154, 0));
  CHECK(try_decode(buf, 4).newly_decoded == 1);
}

TEST_CASE("decodable_estimate with truthful estimates implies decode") {
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const auto c = random_codeword(rng);
    PacketBuffer buf(PacketKey{0, 1, 0}, 1);
    const int pieces = 1 + static_cast<int>(uniform_below(rng, 3));
    for (int k = 0; k < pieces; ++k) {
      const int a = static_cast<int>(uniform_below(rng, 200));
      const int b = std::min(255, a + 20 + static_cast<int>(uniform_below(rng, 200)));
      auto noisy = c;
      const int errs = static_cast<int>(uniform_below(rng, 12));
      for (auto i : distinct_indices(rng, b - a, errs)) noisy[a + i] = corrupt(rng, noisy[a + i]);
      // Report the true number of bad bytes that survive the merge as the estimate.
      deliver(buf.records[0], noisy, seg(a, b, errs));
    }
    auto& rec = buf.records[0];
    // Recompute truthful per-piece estimates from the bytes actually held.
    for (auto& s : rec.segments) {
      int bad = 0;
      for (int i = s.start; i < s.end; ++i) bad += rec.values[i] != c[i];
      s.est_errors = static_cast<std::uint16_t>(bad);
    }
    if (!decodable_estimate(rec)) continue;
    ++checked;
    REQUIRE(try_decode(buf).newly_decoded == 1);
    CHECK(std::equal(rec.decoded_block.begin(), rec.decoded_block.end(), c.begin()));
  }
  CHECK(checked > 300);
}

TEST_CASE("select_segment examples") {
  CHECK(select_segment(std::vector<Segment>{}) == seg(0, 150, 0));
  CHECK(select_segment(std::vector<Segment>{seg(0, 150, 1)}) == seg(150, 152, 0));
  CHECK(select_segment(std::vector<Segment>{seg(0, 150, 60)}) == seg(0, 255, 0));
  // Already decodable by the estimates: one more byte is requested.
  CHECK(select_segment(std::vector<Segment>{seg(0, 150, 0)}) == seg(150, 151, 0));
  // A hole in the middle is filled first.
  CHECK(select_segment(std::vector<Segment>{seg(0, 50, 3), seg(60, 160, 0)}) == seg(50, 56, 0));
}

TEST_CASE("select_segment matches exhaustive interval search") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    Record r;
    const int count = static_cast<int>(uniform_below(rng, 4));
    fec::Codeword zero{};
    for (int k = 0; k < count; ++k) {
      const int a = static_cast<int>(uniform_below(rng, 240));
      const int b = a + 1 + static_cast<int>(uniform_below(rng, std::min(120, 255 - a)));
      deliver(r, zero, seg(a, b, static_cast<int>(uniform_below(rng, 6))));
    }
    const auto pick = select_segment(r.segments);
    const int need = std::max(150 + 2 * r.est_total(), r.coverage() + 1);
    if (need > 255) {
      CHECK(pick == seg(0, 255, 0));
      continue;
    }
    auto with = r.segments;
    with.push_back(pick);
    CHECK(union_coverage(with) >= need);

    int best = 1000;
    for (int a = 0; a < 255; ++a)
      for (int b = a + 1; b <= 255 && b - a < best; ++b) {
        auto w = r.segments;
        w.push_back(seg(a, b, 0));
        if (union_coverage(w) >= need) best = b - a;
      }
    CHECK(pick.length() == best);
  }
}

TEST_CASE("blocks per packet") {
  CHECK(blocks_for(1500) == 10);
  CHECK(blocks_for(1) == 1);
  CHECK(blocks_for(151) == 2);
  Rng rng(9);
  const auto p = random_bytes(rng, 451);
  const auto b = split_blocks(p);
  REQUIRE(b.size() == 4);
  CHECK(b[3][1] == 0);
  CHECK(join_blocks(b, p.size()) == p);
}
