#include "crelay/srcr.hpp"

#include <algorithm>
#include <stdexcept>

#include "crelay/checksum.hpp"

namespace crelay::srcr {
namespace {

const std::vector<NodeId> kNoPath;

void put16(std::vector<std::uint8_t>& out, unsigned v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8 & 0xFF));
}
unsigned get16(std::span<const std::uint8_t> b, std::size_t at) { return b[at] | b[at + 1] << 8; }

void put_key(std::vector<std::uint8_t>& out, const PacketKey& k) {
  put16(out, k.src);
  put16(out, k.dst);
  put16(out, k.seq);
}
PacketKey get_key(std::span<const std::uint8_t> b, std::size_t at) {
  return {static_cast<std::uint16_t>(get16(b, at)), static_cast<std::uint16_t>(get16(b, at + 2)),
          static_cast<std::uint16_t>(get16(b, at + 4))};
}

}  // namespace

std::size_t frame_len(const Frame& f) {
  return kHeaderLen + f.acks.size() * 6 + f.payload.size() + kChecksumLen;
}

// Header: sender 2, frame_seq 2, ack count 1, flags 1, next hop 2, key 6,
// payload length 2, then zero padding to the same 28 bytes Crelay uses.
std::vector<std::uint8_t> serialize(const Frame& f) {
  if (f.acks.size() > 255 || f.payload.size() > 0xFFFF) throw std::invalid_argument("srcr frame: field overflow");
  if (!f.has_data && !f.payload.empty()) throw std::invalid_argument("srcr frame: payload without data flag");
  std::vector<std::uint8_t> out;
  out.reserve(frame_len(f));
  put16(out, f.sender);
  put16(out, f.frame_seq);
  out.push_back(static_cast<std::uint8_t>(f.acks.size()));
  out.push_back(f.has_data ? 1 : 0);
  put16(out, f.next_hop);
  put_key(out, f.key);
  put16(out, static_cast<unsigned>(f.payload.size()));
  out.resize(kHeaderLen, 0);
  for (const auto& k : f.acks) put_key(out, k);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  const std::uint32_t crc = crc32(out);
  put16(out, crc & 0xFFFF);
  put16(out, crc >> 16);
  return out;
}

std::optional<Frame> deserialize(std::span<const std::uint8_t> b) {
  if (b.size() < kHeaderLen + kChecksumLen) return std::nullopt;
  const auto body = b.first(b.size() - kChecksumLen);
  const std::uint32_t crc = get16(b, body.size()) | static_cast<std::uint32_t>(get16(b, body.size() + 2)) << 16;
  if (crc != crc32(body)) return std::nullopt;
  Frame f;
  f.sender = static_cast<std::uint16_t>(get16(b, 0));
  f.frame_seq = static_cast<std::uint16_t>(get16(b, 2));
  const unsigned na = b[4];
  f.has_data = b[5] != 0;
  f.next_hop = static_cast<std::uint16_t>(get16(b, 6));
  f.key = get_key(b, 8);
  const unsigned plen = get16(b, 14);
  if (b.size() != kHeaderLen + na * 6 + plen + kChecksumLen) return std::nullopt;
  for (unsigned i = 0; i < na; ++i) f.acks.push_back(get_key(b, kHeaderLen + 6 * i));
  const auto pay = b.subspan(kHeaderLen + na * 6, plen);
  f.payload.assign(pay.begin(), pay.end());
  return f;
}

SrcrNode::SrcrNode(NodeId id, int num_nodes, Options opt) : id_(id), n_(num_nodes), opt_(opt), links_(num_nodes) {
  if (id < 0 || id >= num_nodes) throw std::invalid_argument("SrcrNode: id out of range");
}

void SrcrNode::set_links(const routing::LinkTable& links) {
  if (links.size() != n_) throw std::invalid_argument("SrcrNode: link table size mismatch");
  links_ = links;
  paths_.clear();
}

const std::vector<NodeId>& SrcrNode::path(NodeId src, NodeId dst) {
  if (src < 0 || src >= n_ || dst < 0 || dst >= n_ || src == dst) return kNoPath;
  const NodeId slot = src * n_ + dst;
  auto it = paths_.find(slot);
  if (it != paths_.end()) return it->second;
  const auto all = routing::etx_route(src, links_);
  for (NodeId d = 0; d < n_; ++d)
    if (d != src) paths_[src * n_ + d] = all[d].nodes;
  return paths_.at(slot);
}

bool SrcrNode::enqueue(const PacketKey& key, std::span<const std::uint8_t> payload) {
  const auto& p = path(key.src, key.dst);
  const auto it = std::find(p.begin(), p.end(), id_);
  if (it == p.end() || it + 1 == p.end()) return false;
  auto& q = queues_[*(it + 1)];
  if (static_cast<int>(q.size()) >= opt_.queue_limit) return false;
  q.push_back({key, {payload.begin(), payload.end()}, 0, -1});
  return true;
}

bool SrcrNode::inject(PacketKey key, std::span<const std::uint8_t> payload, int now) {
  now_ = now;
  if (key.src != id_ || done_.count(key)) return false;
  if (!enqueue(key, payload)) return false;
  done_.insert(key);
  return true;
}

bool SrcrNode::ready(const Pending& p) const { return p.sent_at < 0 || now_ - p.sent_at >= opt_.ack_timeout; }

bool SrcrNode::backlogged() const {
  if (!acks_.empty()) return true;
  for (const auto& [nb, q] : queues_)
    if (!q.empty() && ready(q.front())) return true;
  return false;
}

std::optional<Frame> SrcrNode::build_frame(int now, std::size_t mtu) {
  now_ = now;
  Frame f;
  f.sender = static_cast<std::uint16_t>(id_);
  f.frame_seq = frame_seq_;
  std::size_t acks_sent = 0;
  while (acks_sent < acks_.size() && acks_sent < 255 && frame_len(f) + 6 <= mtu) f.acks.push_back(acks_[acks_sent++]);

  std::vector<NodeId> order;
  for (const auto& [nb, q] : queues_)
    if (!q.empty()) order.push_back(nb);
  std::rotate(order.begin(), std::lower_bound(order.begin(), order.end(), rr_), order.end());
  for (NodeId nb : order) {
    auto& q = queues_[nb];
    while (!q.empty() && q.front().attempts >= opt_.max_attempts) {
      q.pop_front();
      ++dropped_;
    }
    if (q.empty() || !ready(q.front())) continue;
    auto& head = q.front();
    if (frame_len(f) + head.payload.size() > mtu) continue;
    f.has_data = true;
    f.next_hop = static_cast<std::uint16_t>(nb);
    f.key = head.key;
    f.payload = head.payload;
    ++head.attempts;
    head.sent_at = now;
    rr_ = nb + 1;
    break;
  }
  if (f.acks.empty() && !f.has_data) return std::nullopt;
  acks_.erase(acks_.begin(), acks_.begin() + static_cast<long>(acks_sent));
  ++frame_seq_;
  return f;
}

RxReport SrcrNode::on_frame(std::span<const std::uint8_t> bytes, int now) {
  now_ = now;
  RxReport rep;
  const auto f = deserialize(bytes);
  if (!f || f->sender >= n_ || f->sender == id_) return rep;
  rep.ok = true;
  rep.sender = f->sender;
  rep.acks = f->acks;
  const NodeId from = f->sender;

  auto qit = queues_.find(from);
  if (qit != queues_.end())
    for (const auto& k : f->acks)
      if (!qit->second.empty() && qit->second.front().key == k) qit->second.pop_front();

  if (f->has_data && f->next_hop == id_) {
    const PacketKey key = f->key;
    if (done_.count(key)) {
      if (std::find(acks_.begin(), acks_.end(), key) == acks_.end()) acks_.push_back(key);
      return rep;
    }
    if (key.dst == id_) {
      deliveries_.push_back({key, f->payload, now});
    } else if (!enqueue(key, f->payload)) {
      return rep;  // no room: stay silent so the sender retries
    }
    done_.insert(key);
    acks_.push_back(key);
  }
  return rep;
}

std::vector<proto::Delivery> SrcrNode::take_deliveries() { return std::exchange(deliveries_, {}); }

}  // namespace crelay::srcr
