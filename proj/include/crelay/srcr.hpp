#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "crelay/packet_model.hpp"
#include "crelay/protocol.hpp"
#include "crelay/routing.hpp"

namespace crelay::srcr {

using routing::NodeId;

// Whole-packet hop-by-hop forwarding on ETX paths. A frame with any bad byte
// is dropped; lost packets are resent until the next hop acknowledges them.
inline constexpr std::size_t kHeaderLen = 28;
inline constexpr std::size_t kChecksumLen = 4;

struct Frame {
  std::uint16_t frame_seq = 0;
  std::uint16_t sender = 0;
  std::vector<PacketKey> acks;
  bool has_data = false;
  std::uint16_t next_hop = 0;
  PacketKey key;
  std::vector<std::uint8_t> payload;
  friend bool operator==(const Frame&, const Frame&) = default;
};

std::size_t frame_len(const Frame& f);
std::vector<std::uint8_t> serialize(const Frame& f);
/// nullopt on any checksum or layout failure.
std::optional<Frame> deserialize(std::span<const std::uint8_t> bytes);

struct Options {
  int ack_timeout = 10;
  int max_attempts = 16;
  int queue_limit = 64;
};

struct RxReport {
  bool ok = false;
  NodeId sender = -1;
  std::vector<PacketKey> acks;
};

class SrcrNode {
 public:
  SrcrNode(NodeId id, int num_nodes, Options opt);

  NodeId id() const { return id_; }
  void set_links(const routing::LinkTable& links);
  const std::vector<NodeId>& path(NodeId src, NodeId dst);

  bool inject(PacketKey key, std::span<const std::uint8_t> payload, int now);
  void tick(int now) { now_ = now; }
  bool backlogged() const;
  std::optional<Frame> build_frame(int now, std::size_t mtu);
  RxReport on_frame(std::span<const std::uint8_t> bytes, int now);

  std::vector<proto::Delivery> take_deliveries();
  std::size_t dropped() const { return dropped_; }

 private:
  struct Pending {
    PacketKey key;
    std::vector<std::uint8_t> payload;
    int attempts = 0;
    int sent_at = -1;
  };
  bool ready(const Pending& p) const;
  bool enqueue(const PacketKey& key, std::span<const std::uint8_t> payload);

  NodeId id_;
  int n_;
  Options opt_;
  routing::LinkTable links_;
  std::map<NodeId, std::vector<NodeId>> paths_;  // keyed by src * n + dst
  std::map<NodeId, std::deque<Pending>> queues_;
  std::set<PacketKey> done_;
  std::vector<PacketKey> acks_;
  NodeId rr_ = 0;
  int now_ = 0;
  std::uint16_t frame_seq_ = 0;
  std::vector<proto::Delivery> deliveries_;
  std::size_t dropped_ = 0;
};

}  // namespace crelay::srcr
