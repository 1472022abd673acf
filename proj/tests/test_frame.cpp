#include <stdexcept>

#include "crelay/amps.hpp"
#include "crelay/checksum.hpp"
#include "crelay/fec.hpp"
#include "crelay/frame.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace crelay;
using namespace crelay::frame;
using crelay::testing::corrupt;
using crelay::testing::distinct_indices;
using crelay::testing::random_frame;

TEST_CASE("ACK-only frame is 71 bytes") {
  Frame f;
  f.acks.push_back({1, 2, 3});
  CHECK(frame_len(f) == 71);
  const auto bytes = serialize(f);
  CHECK(bytes.size() == 71);
  CHECK(deserialize(bytes) == f);
}

TEST_CASE("typical announcement content stays within 60 bytes") {
  Frame f;
  f.acks.push_back({1, 2, 3});
  f.statuses.push_back({{1, 2, 4}, 10, 0, {{0, 150, 3}, {150, 160, 3}}});
  DataPacket d;
  d.header = {{1, 2, 5}, 10, 0, 150, 0, 10};
  d.payload.assign(d.header.payload_len(), 7);
  f.data.push_back(d);
  CHECK(announce_content_len(f) == 41);
  CHECK(announce_content_len(f) + 2 <= 60);
  CHECK(announce_len(f) == 75);
}

TEST_CASE("header layout is little-endian and fixed") {
  Frame f;
  f.frame_seq = 0x1234;
  f.sender = 0x0506;
  const auto b = serialize(f);
  CHECK(b[0] == 37);  // announce_len: 3 counts + crc + parity
  CHECK(b[1] == 0);
  CHECK(b[2] == 0);
  CHECK(b[4] == 0x34);
  CHECK(b[5] == 0x12);
  CHECK(b[6] == 0x06);
  CHECK(b[7] == 0x05);
  const std::uint16_t crc = crc16(std::span(b).first(16));
  CHECK(b[16] == (crc & 0xFF));
  CHECK(b[17] == (crc >> 8));
}

TEST_CASE("round trip on random frames") {
  Rng rng(11);
  for (int t = 0; t < 10000; ++t) {
    const auto f = random_frame(rng);
    const auto bytes = serialize(f);
    REQUIRE(bytes.size() == frame_len(f));
    const auto back = deserialize(bytes);
    REQUIRE(back);
    CHECK(*back == f);
  }
}

TEST_CASE("samples cover the data section before interleaving") {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    auto f = random_frame(rng);
    if (f.data.empty()) continue;
    const auto bytes = serialize(f);
    const auto p = parse(bytes);
    REQUIRE(p);
    CHECK(p->section == data_section(f));
    CHECK(p->header.samples == amps::compute_samples(data_section(f), f.frame_seq));
  }
}

TEST_CASE("serialize rejects frames outside the field limits") {
  Frame f;
  DataPacket d;
  d.header = {{1, 2, 3}, 2, 10, 10, 0, 1};
  f.data.push_back(d);
  CHECK_THROWS_AS(serialize(f), std::invalid_argument);
  f.data[0].header = {{1, 2, 3}, 2, 0, 10, 1, 2};
  f.data[0].payload.assign(20, 0);
  CHECK_THROWS_AS(serialize(f), std::invalid_argument);
  f.data.clear();
  f.statuses.push_back({{1, 2, 3}, 1, 0, std::vector<Segment>(8, Segment{0, 1, 0})});
  CHECK_THROWS_AS(serialize(f), std::invalid_argument);
  f.statuses.clear();
  f.acks.assign(40, PacketKey{});
  CHECK_THROWS_AS(serialize(f), std::invalid_argument);
}

TEST_CASE("correctable corruption of header and announcements is repaired") {
  Rng rng(13);
  for (int t = 0; t < 500; ++t) {
    const auto f = random_frame(rng);
    auto bytes = serialize(f);
    for (auto i : distinct_indices(rng, kHeaderLen, 5)) bytes[i] = corrupt(rng, bytes[i]);
    const std::size_t alen = announce_len(f);
    for (auto i : distinct_indices(rng, alen, 16)) bytes[kHeaderLen + i] = corrupt(rng, bytes[kHeaderLen + i]);
    const auto p = parse(bytes);
    REQUIRE(p);
    REQUIRE(p->announcements_ok);
    CHECK(p->acks == f.acks);
    CHECK(p->statuses == f.statuses);
    CHECK(p->data.size() == f.data.size());
  }
}

TEST_CASE("heavy corruption is detected, never mis-parsed") {
  Rng rng(14);
  int header_lost = 0, ann_lost = 0;
  for (int t = 0; t < 3000; ++t) {
    const auto f = random_frame(rng);
    auto bytes = serialize(f);
    const std::size_t alen = announce_len(f);
    const auto nh = 6 + uniform_below(rng, 10);
    const auto na = 17 + uniform_below(rng, alen - 17);
    const bool hit_header = t % 2 == 0;
    if (hit_header)
      for (auto i : distinct_indices(rng, kHeaderLen, nh)) bytes[i] = corrupt(rng, bytes[i]);
    else
      for (auto i : distinct_indices(rng, alen, na)) bytes[kHeaderLen + i] = corrupt(rng, bytes[kHeaderLen + i]);
    const auto p = parse(bytes);
    if (!p) {
      ++header_lost;
      continue;
    }
    CHECK(p->header.frame_seq == f.frame_seq);
    CHECK(p->header.sender == f.sender);
    if (!p->announcements_ok) {
      ++ann_lost;
      CHECK(p->data.empty());
      continue;
    }
    CHECK(p->acks == f.acks);
    CHECK(p->statuses == f.statuses);
  }
  CHECK(header_lost > 1400);
  CHECK(ann_lost > 1400);
}

TEST_CASE("data corruption flips the packet checksum but keeps the layout") {
  Rng rng(15);
  for (int t = 0; t < 300; ++t) {
    auto f = random_frame(rng);
    if (f.data.empty()) continue;
    auto bytes = serialize(f);
    const std::size_t off = kHeaderLen + announce_len(f);
    const std::size_t dl = data_len(f);
    const auto hit = uniform_below(rng, dl);
    bytes[off + hit] = corrupt(rng, bytes[off + hit]);
    const auto p = parse(bytes);
    REQUIRE(p);
    REQUIRE(p->announcements_ok);
    int bad = 0;
    for (const auto& d : p->data) bad += !d.checksum_ok;
    CHECK(bad == 1);
    CHECK_FALSE(deserialize(bytes));
  }
}

TEST_CASE("truncated frames are rejected") {
  Rng rng(16);
  const auto f = random_frame(rng);
  const auto bytes = serialize(f);
  CHECK_FALSE(parse(std::span(bytes).first(20)));
  CHECK_FALSE(parse(std::span(bytes).first(bytes.size() - 1)));
}
