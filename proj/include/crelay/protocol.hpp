#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "crelay/amps_table.hpp"
#include "crelay/frame.hpp"
#include "crelay/packet_model.hpp"
#include "crelay/routing.hpp"

namespace crelay::proto {

using routing::NodeId;

/// S0: overheard, not decoded. S1: decoded, next hop's status unknown.
/// S2: decoded with a status to work from; only S2 packets are sent.
enum class PacketState { S0, S1, S2 };

const char* to_string(PacketState s);

struct Options {
  int w = 4;
  bool preemptive = true;
  int s1_timeout = 25;
  int tombstone_slots = 100;
  int status_timeout = 50;
  int queue_limit = 64;
  int decode_slack = 4;
  int max_attempts = 64;
  routing::OverhearingCheck check = routing::OverhearingCheck::Consistent;
};

/// 0 on a clean link, otherwise p clamped to [0.02, 0.05].
double preemptive_fraction(double p);
/// Extra parity bytes for a segment of `len`: ceil(2 * fraction * len).
int preemptive_bytes(double p, int len);

struct Delivery {
  PacketKey key;
  std::vector<std::uint8_t> payload;  // num_blocks * 150 bytes, zero padded
  int slot = 0;  // node clock at delivery
};

/// One data packet this node fed to its records, for AMPS accounting.
struct AmpsSample {
  int packet_index = 0;  // position in the frame's data list
  int estimate = 0;      // AMPS per-segment bound, before any checksum override
  bool checksum_ok = false;
};

struct RxReport {
  bool header_ok = false;
  bool announcements_ok = false;
  NodeId sender = -1;
  std::vector<PacketKey> acks;
  std::vector<AmpsSample> amps;
};

class CrelayNode {
 public:
  CrelayNode(NodeId id, int num_nodes, Options opt, const amps::AmpsTables& tables);

  NodeId id() const { return id_; }

  /// Link-state snapshot shared by every node; paths are derived from it.
  void set_links(const routing::LinkTable& links);
  /// Prior used for AMPS on frames from `neighbor`.
  void set_alpha(NodeId neighbor, int alpha_index);

  /// Path for (src,dst); empty when unreachable.
  const std::vector<NodeId>& path(NodeId src, NodeId dst);

  /// Source side: queue a new packet. False when unroutable or the queue is full.
  bool inject(PacketKey key, std::span<const std::uint8_t> payload, int now);

  void tick(int now);
  bool backlogged() const;
  std::optional<frame::Frame> build_frame(int now, std::size_t mtu);
  RxReport on_frame(std::span<const std::uint8_t> bytes, int now);

  std::vector<Delivery> take_deliveries();
  std::optional<PacketState> state(const PacketKey& key) const;
  std::vector<std::pair<PacketKey, PacketState>> states() const;
  std::size_t dropped() const { return dropped_; }

 private:
  struct Entry {
    PacketBuffer buf;
    PacketState state = PacketState::S0;
    bool decoded = false;
    std::vector<fec::Codeword> codewords;
    // Next hop's view, used to choose what to send.
    std::vector<Segment> next_status;
    std::uint32_t next_mask = 0;
    int s1_since = 0;
    int attempts = 0;
    NodeId next_hop = -1;
    // Our own receiving status, re-announced while undecoded.
    bool announcing = false;
    bool status_fresh = false;
    int last_data = 0;
  };

  int position(const std::vector<NodeId>& p, NodeId n) const;
  void queue_ack(const PacketKey& key);
  void remove(const PacketKey& key, int now, bool tombstone);
  void decoded(const PacketKey& key, Entry& e, int now);
  frame::ReceivingStatus status_of(const PacketKey& key, const Entry& e) const;
  bool add_data(frame::Frame& f, const PacketKey& key, Entry& e, std::size_t budget);

  void handle_ack(const PacketKey& key, NodeId from, int now);
  void handle_status(const frame::ReceivingStatus& s, NodeId from, int now);
  void handle_data(const frame::ParsedFrame& pf, const frame::ReceivedPacket& p, int estimate, int now);

  NodeId id_;
  int n_;
  Options opt_;
  const amps::AmpsTables& tables_;
  routing::LinkTable links_;
  std::vector<int> alpha_;
  std::map<std::pair<NodeId, NodeId>, std::vector<NodeId>> paths_;

  std::map<PacketKey, Entry> packets_;
  std::map<PacketKey, int> tombstones_;
  std::set<PacketKey> done_;
  std::vector<PacketKey> acks_;
  std::map<NodeId, std::deque<PacketKey>> queues_;
  NodeId rr_ = 0;
  std::uint16_t frame_seq_ = 0;
  std::vector<Delivery> deliveries_;
  std::size_t dropped_ = 0;
};

}  // namespace crelay::proto
