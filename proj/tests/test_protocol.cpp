#include <algorithm>
#include <map>
#include <vector>

#include "crelay/amps_table.hpp"
#include "crelay/frame.hpp"
#include "crelay/protocol.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace crelay;
using namespace crelay::proto;
using crelay::testing::corrupt;
using crelay::testing::distinct_indices;
using crelay::testing::random_bytes;

namespace {

// Nodes sharing one link table; frames are moved by hand.
struct Net {
  std::vector<CrelayNode> nodes;
  int now = 0;

  Net(const routing::LinkTable& links, Options opt = {}) {
    for (int i = 0; i < links.size(); ++i) {
      nodes.emplace_back(i, links.size(), opt, amps::AmpsTables::shared());
      nodes.back().set_links(links);
    }
  }
  std::vector<std::uint8_t> send(int from) {
    auto f = nodes[from].build_frame(now, 2000);
    if (!f) return {};
    return frame::serialize(*f);
  }
  void deliver(const std::vector<std::uint8_t>& bytes, std::initializer_list<int> to) {
    for (int n : to) nodes[n].on_frame(bytes, now);
  }
  void advance(int slots) {
    now += slots;
    for (auto& n : nodes) n.tick(now);
  }
};

routing::LinkTable chain(int n, double erasure, double error = 0.0) {
  routing::LinkTable t(n);
  for (int i = 0; i + 1 < n; ++i) t.set_symmetric(i, i + 1, {erasure, error});
  return t;
}

// Offset of the data section in a serialized frame.
std::size_t data_offset(const std::vector<std::uint8_t>& bytes) {
  const auto h = frame::parse_header(bytes);
  REQUIRE(h);
  return frame::kHeaderLen + h->announce_len;
}

std::size_t data_bytes(const std::vector<std::uint8_t>& bytes) {
  const auto f = frame::deserialize(bytes);
  std::size_t n = 0;
  if (f)
    for (const auto& d : f->data) n += d.payload.size();
  return n;
}

}  // namespace

TEST_CASE("preemptive fraction clamps p to [0.02, 0.05]") {
  CHECK(preemptive_fraction(0.0) == 0.0);
  CHECK(preemptive_fraction(0.001) == doctest::Approx(0.02));
  CHECK(preemptive_fraction(0.03) == doctest::Approx(0.03));
  CHECK(preemptive_fraction(0.2) == doctest::Approx(0.05));
  CHECK(preemptive_bytes(0.0, 150) == 0);
  CHECK(preemptive_bytes(0.03, 150) == 9);
  CHECK(preemptive_bytes(0.01, 150) == 6);
  CHECK(preemptive_bytes(0.5, 105) == 11);
}

TEST_CASE("two-hop relay over clean links delivers once and clears state") {
  Net net(chain(3, 0.05));
  Rng rng(3);
  const PacketKey key{0, 2, 1};
  const auto payload = random_bytes(rng, 1500);
  REQUIRE(net.nodes[0].inject(key, payload, 0));
  CHECK(net.nodes[0].path(0, 2) == std::vector<NodeId>{0, 1, 2});
  CHECK(net.nodes[0].state(key) == PacketState::S2);

  net.deliver(net.send(0), {1});
  CHECK(net.nodes[0].state(key) == PacketState::S1);
  CHECK(net.nodes[1].state(key) == PacketState::S1);

  // The relay's ACK clears the source and makes node 2 announce an empty status.
  net.advance(1);
  const auto ack = net.send(1);
  CHECK(data_bytes(ack) == 0);
  net.deliver(ack, {0, 2});
  CHECK_FALSE(net.nodes[0].state(key));
  CHECK(net.nodes[2].state(key) == PacketState::S0);

  net.advance(1);
  const auto status = net.send(2);
  const auto sf = frame::deserialize(status);
  REQUIRE(sf);
  REQUIRE(sf->statuses.size() == 1);
  CHECK(sf->statuses[0].decoded_mask == 0);
  net.deliver(status, {1});
  CHECK(net.nodes[1].state(key) == PacketState::S2);

  net.advance(1);
  net.deliver(net.send(1), {2});
  const auto got = net.nodes[2].take_deliveries();
  REQUIRE(got.size() == 1);
  CHECK(got[0].key == key);
  CHECK(std::equal(payload.begin(), payload.end(), got[0].payload.begin()));

  net.advance(1);
  net.deliver(net.send(2), {1});
  CHECK_FALSE(net.nodes[1].state(key));
  for (auto& n : net.nodes) CHECK_FALSE(n.backlogged());
}

TEST_CASE("relay drops its copy when the destination overhears the source") {
  routing::LinkTable links = chain(3, 0.05);
  links.set_symmetric(0, 2, {0.7, 0.0});
  Net net(links);
  Rng rng(4);
  const PacketKey key{0, 2, 9};
  REQUIRE(net.nodes[0].inject(key, random_bytes(rng, 600), 0));
  REQUIRE(net.nodes[0].path(0, 2) == std::vector<NodeId>{0, 1, 2});

  net.deliver(net.send(0), {1, 2});
  CHECK(net.nodes[2].take_deliveries().size() == 1);
  CHECK(net.nodes[1].state(key) == PacketState::S1);

  net.advance(1);
  net.deliver(net.send(2), {0, 1});
  CHECK_FALSE(net.nodes[1].state(key));
  CHECK_FALSE(net.nodes[0].state(key));
  // Whatever the relay still sends carries no data for the packet.
  net.advance(100);
  CHECK(data_bytes(net.send(1)) == 0);
}

TEST_CASE("duplicate data after a lost ACK is re-acknowledged, not re-delivered") {
  Net net(chain(2, 0.05));
  Rng rng(5);
  const PacketKey key{0, 1, 2};
  REQUIRE(net.nodes[0].inject(key, random_bytes(rng, 300), 0));
  const auto first = net.send(0);
  net.deliver(first, {1});
  CHECK(net.nodes[1].take_deliveries().size() == 1);
  net.advance(1);
  (void)net.send(1);  // lost

  Options opt;
  net.advance(opt.s1_timeout);
  CHECK(net.nodes[0].state(key) == PacketState::S2);
  net.deliver(net.send(0), {1});
  CHECK(net.nodes[1].take_deliveries().empty());
  net.advance(1);
  const auto ack = frame::deserialize(net.send(1));
  REQUIRE(ack);
  CHECK(std::count(ack->acks.begin(), ack->acks.end(), key) == 1);
}

TEST_CASE("S1 returns to S2 exactly at the timeout") {
  Options opt;
  opt.s1_timeout = 25;
  Net net(chain(2, 0.05), opt);
  Rng rng(6);
  const PacketKey key{0, 1, 3};
  REQUIRE(net.nodes[0].inject(key, random_bytes(rng, 150), 0));
  (void)net.send(0);
  CHECK(net.nodes[0].state(key) == PacketState::S1);
  net.advance(24);
  CHECK(net.nodes[0].state(key) == PacketState::S1);
  CHECK_FALSE(net.nodes[0].backlogged());
  net.advance(1);
  CHECK(net.nodes[0].state(key) == PacketState::S2);
  CHECK(net.nodes[0].backlogged());
}

TEST_CASE("a packet nobody answers is dropped after max_attempts") {
  Options opt;
  opt.max_attempts = 5;
  opt.s1_timeout = 1;
  Net net(chain(2, 0.05), opt);
  Rng rng(7);
  REQUIRE(net.nodes[0].inject({0, 1, 4}, random_bytes(rng, 150), 0));
  int sent = 0;
  for (int i = 0; i < 20; ++i) {
    sent += data_bytes(net.send(0)) > 0;
    net.advance(1);
  }
  CHECK(sent == 5);
  CHECK(net.nodes[0].dropped() == 1);
  CHECK_FALSE(net.nodes[0].backlogged());
}

TEST_CASE("upstream ACK for an unknown packet creates an empty record at the next hop only") {
  Net net(chain(4, 0.05));
  const PacketKey key{0, 3, 5};
  frame::Frame f;
  f.sender = 1;
  f.acks.push_back(key);
  const auto bytes = frame::serialize(f);
  net.deliver(bytes, {0, 2, 3});
  CHECK(net.nodes[2].state(key) == PacketState::S0);
  CHECK(net.nodes[2].backlogged());
  CHECK_FALSE(net.nodes[3].state(key));
  CHECK_FALSE(net.nodes[3].backlogged());
  CHECK_FALSE(net.nodes[0].state(key));
}

TEST_CASE("corrupted data is repaired with a partial retransmission") {
  Net net(chain(2, 0.05, 0.02));
  Rng rng(8);
  const PacketKey key{0, 1, 6};
  const auto payload = random_bytes(rng, 1500);
  REQUIRE(net.nodes[0].inject(key, payload, 0));

  auto bytes = net.send(0);
  const std::size_t off = data_offset(bytes);
  for (auto i : distinct_indices(rng, bytes.size() - off, 40)) bytes[off + i] = corrupt(rng, bytes[off + i]);
  net.deliver(bytes, {1});
  CHECK(net.nodes[1].take_deliveries().empty());
  CHECK(net.nodes[1].state(key) == PacketState::S0);

  std::size_t resent = 0;
  std::vector<Delivery> got;
  for (int round = 0; round < 6 && got.empty(); ++round) {
    net.advance(1);
    net.deliver(net.send(1), {0});
    net.advance(1);
    const auto more = net.send(0);
    resent += data_bytes(more);
    net.deliver(more, {1});
    got = net.nodes[1].take_deliveries();
  }
  REQUIRE(got.size() == 1);
  CHECK(std::equal(payload.begin(), payload.end(), got[0].payload.begin()));
  CHECK(resent > 0);
  CHECK(resent < payload.size() / 2);
}

TEST_CASE("randomized lossy chains never deliver twice or deliver wrong bytes") {
  Rng rng(9);
  int total = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(uniform_below(rng, 3));
    Net net(chain(n, 0.2, 0.02));
    std::map<PacketKey, std::vector<std::uint8_t>> sent;
    for (std::uint16_t s = 0; s < 5; ++s) {
      const PacketKey key{0, static_cast<std::uint16_t>(n - 1), s};
      sent[key] = random_bytes(rng, 150 + uniform_below(rng, 1350));
      REQUIRE(net.nodes[0].inject(key, sent[key], 0));
    }
    std::map<PacketKey, int> delivered;
    for (int step = 0; step < 3000; ++step) {
      const int from = static_cast<int>(uniform_below(rng, n));
      auto bytes = net.send(from);
      if (!bytes.empty()) {
        for (int to = 0; to < n; ++to) {
          if (to == from || std::abs(to - from) > 2 || bernoulli(rng, 0.3)) continue;
          auto rx = bytes;
          if (bernoulli(rng, 0.5))
            for (auto i : distinct_indices(rng, rx.size(), rx.size() / 100)) rx[i] = corrupt(rng, rx[i]);
          net.nodes[to].on_frame(rx, net.now);
        }
      }
      for (const auto& d : net.nodes[n - 1].take_deliveries()) {
        ++delivered[d.key];
        const auto& want = sent.at(d.key);
        CHECK(std::equal(want.begin(), want.end(), d.payload.begin()));
      }
      net.advance(1);
    }
    for (const auto& [k, c] : delivered) CHECK(c == 1);
    total += static_cast<int>(delivered.size());
  }
  MESSAGE("delivered ", total, " of 100");
  CHECK(total > 50);
}
