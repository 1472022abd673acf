#include "crelay/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crelay/amps.hpp"
#include "crelay/fec.hpp"

namespace crelay::proto {
namespace {

// Room kept in the announcement codeword for data headers.
constexpr std::size_t kDataHeaderReserve = 4 * frame::kDataHeaderLen;

const std::vector<NodeId> kNoPath;

// Shrinks a segment list to what one status entry can carry. Adjacent
// segments merge first; if that is not enough the shortest segments are
// dropped, which only makes the sender resend bytes we already hold.
void fit_segments(std::vector<Segment>& segs) {
  while (segs.size() > static_cast<std::size_t>(frame::kMaxStatusSegments)) {
    std::size_t best = segs.size();
    int best_len = 1 << 20;
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
      if (segs[i].end != segs[i + 1].start) continue;
      const int len = segs[i + 1].end - segs[i].start;
      if (len < best_len) best_len = len, best = i;
    }
    if (best < segs.size()) {
      auto& a = segs[best];
      const auto& b = segs[best + 1];
      a.est_errors = static_cast<std::uint16_t>(std::min(255, a.est_errors + b.est_errors));
      a.end = b.end;
      segs.erase(segs.begin() + static_cast<long>(best) + 1);
      continue;
    }
    const auto shortest = std::min_element(segs.begin(), segs.end(),
                                           [](const Segment& a, const Segment& b) { return a.length() < b.length(); });
    segs.erase(shortest);
  }
}

}  // namespace

const char* to_string(PacketState s) {
  switch (s) {
    case PacketState::S0: return "S0";
    case PacketState::S1: return "S1";
    case PacketState::S2: return "S2";
  }
  return "?";
}

double preemptive_fraction(double p) {
  if (p <= 0) return 0.0;
  return std::max(0.02, std::min(0.05, p));
}

int preemptive_bytes(double p, int len) {
  return static_cast<int>(std::ceil(2.0 * preemptive_fraction(p) * len - 1e-9));
}

CrelayNode::CrelayNode(NodeId id, int num_nodes, Options opt, const amps::AmpsTables& tables)
    : id_(id), n_(num_nodes), opt_(opt), tables_(tables), links_(num_nodes),
      alpha_(num_nodes, amps::alpha_index(1.0)) {
  if (id < 0 || id >= num_nodes) throw std::invalid_argument("CrelayNode: id out of range");
}

void CrelayNode::set_links(const routing::LinkTable& links) {
  if (links.size() != n_) throw std::invalid_argument("CrelayNode: link table size mismatch");
  links_ = links;
  paths_.clear();
}

void CrelayNode::set_alpha(NodeId neighbor, int alpha_index) { alpha_.at(neighbor) = alpha_index; }

const std::vector<NodeId>& CrelayNode::path(NodeId src, NodeId dst) {
  if (src < 0 || src >= n_ || dst < 0 || dst >= n_ || src == dst) return kNoPath;
  auto it = paths_.find({src, dst});
  if (it != paths_.end()) return it->second;
  const auto all = routing::greedy_route(src, links_.ratios(), opt_.w, opt_.check);
  for (NodeId d = 0; d < n_; ++d)
    if (d != src) paths_[{src, d}] = all[d].valid() ? all[d].nodes : std::vector<NodeId>{};
  return paths_.at({src, dst});
}

int CrelayNode::position(const std::vector<NodeId>& p, NodeId n) const {
  const auto it = std::find(p.begin(), p.end(), n);
  return it == p.end() ? -1 : static_cast<int>(it - p.begin());
}

bool CrelayNode::inject(PacketKey key, std::span<const std::uint8_t> payload, int now) {
  if (key.src != id_) return false;
  const auto& p = path(key.src, key.dst);
  if (p.size() < 2 || packets_.count(key) || done_.count(key)) return false;
  auto& q = queues_[p[1]];
  if (static_cast<int>(q.size()) >= opt_.queue_limit) return false;
  const auto blocks = split_blocks(payload);
  if (blocks.size() > static_cast<std::size_t>(kMaxBlocks)) throw std::invalid_argument("inject: packet too large");

  Entry e;
  e.buf = PacketBuffer(key, static_cast<int>(blocks.size()));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    e.buf.records[i].decoded = true;
    e.buf.records[i].decoded_block = blocks[i];
    e.codewords.push_back(fec::rs_encode(blocks[i]));
  }
  e.buf.decoded_mask = e.buf.full_mask();
  e.decoded = true;
  e.state = PacketState::S2;
  e.next_hop = p[1];
  e.s1_since = now;
  packets_.emplace(key, std::move(e));
  q.push_back(key);
  return true;
}

void CrelayNode::tick(int now) {
  for (auto& [key, e] : packets_) {
    if (e.state == PacketState::S1 && now - e.s1_since >= opt_.s1_timeout) e.state = PacketState::S2;
    if (e.announcing && now - e.last_data > opt_.status_timeout) e.announcing = e.status_fresh = false;
  }
  std::erase_if(tombstones_, [&](const auto& kv) { return now - kv.second > opt_.tombstone_slots; });
}

bool CrelayNode::backlogged() const {
  if (!acks_.empty()) return true;
  for (const auto& [key, e] : packets_)
    if (e.status_fresh || (e.decoded && e.state == PacketState::S2 && e.next_hop >= 0)) return true;
  return false;
}

void CrelayNode::queue_ack(const PacketKey& key) {
  if (std::find(acks_.begin(), acks_.end(), key) == acks_.end()) acks_.push_back(key);
}

void CrelayNode::remove(const PacketKey& key, int now, bool tombstone) {
  const auto it = packets_.find(key);
  if (it != packets_.end()) {
    if (it->second.next_hop >= 0) {
      auto& q = queues_[it->second.next_hop];
      q.erase(std::remove(q.begin(), q.end(), key), q.end());
    }
    packets_.erase(it);
  }
  done_.insert(key);
  if (tombstone) tombstones_[key] = now;
}

frame::ReceivingStatus CrelayNode::status_of(const PacketKey& key, const Entry& e) const {
  frame::ReceivingStatus s;
  s.key = key;
  s.num_blocks = static_cast<std::uint8_t>(e.buf.num_blocks > 0 ? e.buf.num_blocks : 1);
  s.decoded_mask = e.buf.decoded_mask;
  if (e.buf.num_blocks == 0) return s;

  const Record* worst = nullptr;
  int worst_deficit = 0;
  for (const auto& r : e.buf.records) {
    if (r.decoded) continue;
    const int deficit = static_cast<int>(fec::kBlockLen) + 2 * r.est_total() - r.coverage();
    if (!worst || deficit > worst_deficit) worst = &r, worst_deficit = deficit;
  }
  if (!worst) return s;
  s.segments = worst->segments;

  // Estimates said decodable but the decoder refused: raise them so the
  // sender supplies enough extra bytes to give the decoder its slack.
  if (decodable_estimate(*worst)) {
    const int need = (worst->coverage() + opt_.decode_slack - static_cast<int>(fec::kBlockLen) + 1) / 2;
    int add = need - worst->est_total();
    for (auto it = s.segments.rbegin(); it != s.segments.rend() && add > 0; ++it) {
      const int room = std::min(it->length(), 255) - it->est_errors;
      const int take = std::min(room, add);
      it->est_errors = static_cast<std::uint16_t>(it->est_errors + take);
      add -= take;
    }
  }
  fit_segments(s.segments);
  return s;
}

bool CrelayNode::add_data(frame::Frame& f, const PacketKey& key, Entry& e, std::size_t budget) {
  if (e.attempts >= opt_.max_attempts) {
    ++dropped_;
    remove(key, 0, false);
    return false;
  }
  const std::uint32_t missing = e.buf.full_mask() & ~e.next_mask;
  if (missing == 0) {
    remove(key, 0, false);
    return false;
  }

  Segment seg = select_segment(e.next_status);
  if (opt_.preemptive) {
    const int ext = preemptive_bytes(links_.at(id_, e.next_hop).error, seg.length());
    seg.end = static_cast<std::uint16_t>(std::min<int>(fec::kCodewordLen, seg.end + ext));
  }
  const int len = seg.length();

  bool added = false;
  for (int i = 0; i < e.buf.num_blocks;) {
    if (!(missing >> i & 1)) {
      ++i;
      continue;
    }
    int j = i;
    while (j < e.buf.num_blocks && (missing >> j & 1)) ++j;
    const std::size_t overhead = frame::kDataHeaderLen + frame::kPacketChecksumLen;
    if (f.data.size() >= frame::kMaxEntries ||
        frame::announce_content_len(f) + frame::kDataHeaderLen > frame::kAnnounceMaxContent || budget <= overhead)
      break;
    const int fit = static_cast<int>((budget - overhead) / len);
    const int cw = std::min(j - i, fit);
    if (cw <= 0) break;
    // A packet split across frames gets its first part resent, so only the
    // frame's first data packet may be split.
    if (cw < j - i && !f.data.empty()) break;

    frame::DataPacket d;
    d.header = {key,
                static_cast<std::uint8_t>(e.buf.num_blocks),
                static_cast<std::uint8_t>(seg.start),
                static_cast<std::uint8_t>(seg.end),
                static_cast<std::uint8_t>(i),
                static_cast<std::uint8_t>(cw)};
    d.payload.reserve(static_cast<std::size_t>(cw) * len);
    for (int k = i; k < i + cw; ++k)
      d.payload.insert(d.payload.end(), e.codewords[k].begin() + seg.start, e.codewords[k].begin() + seg.end);
    budget -= overhead + d.payload.size();
    f.data.push_back(std::move(d));
    added = true;
    if (cw < j - i) break;
    i = j;
  }
  return added;
}

std::optional<frame::Frame> CrelayNode::build_frame(int now, std::size_t mtu) {
  frame::Frame f;
  f.sender = static_cast<std::uint16_t>(id_);
  f.frame_seq = frame_seq_;
  const std::size_t ann_limit = frame::kAnnounceMaxContent - kDataHeaderReserve;

  std::size_t acks_sent = 0;
  while (acks_sent < acks_.size() && frame::announce_content_len(f) + frame::kAckLen <= ann_limit)
    f.acks.push_back(acks_[acks_sent++]);

  for (auto& [key, e] : packets_) {
    if (!e.announcing || e.decoded) continue;
    auto s = status_of(key, e);
    const std::size_t len = frame::kStatusLen + s.segments.size() * frame::kSegmentLen;
    if (frame::announce_content_len(f) + len > ann_limit) continue;
    f.statuses.push_back(std::move(s));
    e.status_fresh = false;
  }

  // Round-robin over neighbor queues, FIFO within a queue, one packet per
  // queue per pass until the frame is full.
  std::vector<NodeId> order;
  for (const auto& [nb, q] : queues_)
    if (!q.empty()) order.push_back(nb);
  std::rotate(order.begin(), std::lower_bound(order.begin(), order.end(), rr_), order.end());
  bool progress = true;
  NodeId last_served = -1;
  while (progress) {
    progress = false;
    for (NodeId nb : order) {
      const std::size_t used = frame::frame_len(f);
      if (used >= mtu) break;
      auto& q = queues_[nb];
      for (std::size_t qi = 0; qi < q.size(); ++qi) {
        const PacketKey key = q[qi];
        auto& e = packets_.at(key);
        if (e.state != PacketState::S2) continue;
        if (add_data(f, key, e, mtu - used)) {
          e.state = PacketState::S1;
          e.s1_since = now;
          ++e.attempts;
          progress = true;
          last_served = nb;
        }
        break;
      }
    }
  }
  if (last_served >= 0) rr_ = last_served + 1;

  if (f.acks.empty() && f.statuses.empty() && f.data.empty()) return std::nullopt;
  acks_.erase(acks_.begin(), acks_.begin() + static_cast<long>(acks_sent));
  ++frame_seq_;
  return f;
}

void CrelayNode::decoded(const PacketKey& key, Entry& e, int now) {
  e.decoded = true;
  e.announcing = e.status_fresh = false;
  e.codewords.clear();
  for (const auto& r : e.buf.records) e.codewords.push_back(fec::rs_encode(r.decoded_block));

  if (key.dst == id_) {
    std::vector<fec::Block> blocks;
    for (const auto& r : e.buf.records) blocks.push_back(r.decoded_block);
    deliveries_.push_back({key, join_blocks(blocks, blocks.size() * fec::kBlockLen), now});
    queue_ack(key);
    remove(key, now, false);
    return;
  }
  const auto& p = path(key.src, key.dst);
  const int my = position(p, id_);
  const NodeId next = p[my + 1];
  auto& q = queues_[next];
  if (static_cast<int>(q.size()) >= opt_.queue_limit) {
    ++dropped_;
    packets_.erase(key);
    return;
  }
  queue_ack(key);
  e.next_hop = next;
  e.state = PacketState::S1;
  e.s1_since = now;
  e.next_status.clear();
  e.next_mask = 0;
  q.push_back(key);
}

void CrelayNode::handle_ack(const PacketKey& key, NodeId from, int now) {
  const auto& p = path(key.src, key.dst);
  const int my = position(p, id_), x = position(p, from);
  if (my < 0 || x < 0) return;
  const bool fresh_tomb = tombstones_.count(key) > 0;
  if (x > my) {
    if (done_.count(key)) return;
    const auto it = packets_.find(key);
    const bool had = it != packets_.end() && it->second.decoded;
    if (!had) queue_ack(key);
    remove(key, now, true);
    return;
  }
  if (done_.count(key)) {
    if (key.dst == id_ || fresh_tomb) queue_ack(key);
    return;
  }
  const auto it = packets_.find(key);
  if (it != packets_.end()) {
    if (it->second.decoded) queue_ack(key);
    return;
  }
  if (my == x + 1) {
    Entry e;
    e.announcing = e.status_fresh = true;
    e.last_data = now;
    packets_.emplace(key, std::move(e));
  }
}

void CrelayNode::handle_status(const frame::ReceivingStatus& s, NodeId from, int now) {
  const auto& p = path(s.key.src, s.key.dst);
  const int my = position(p, id_), x = position(p, from);
  if (my < 0 || x != my + 1) return;
  const auto it = packets_.find(s.key);
  if (it == packets_.end() || !it->second.decoded) return;
  auto& e = it->second;
  const std::uint32_t full = e.buf.full_mask();
  if (s.num_blocks == e.buf.num_blocks && (s.decoded_mask & full) == full) {
    remove(s.key, now, true);
    return;
  }
  e.next_status = s.segments;
  e.next_mask = s.num_blocks == e.buf.num_blocks ? (s.decoded_mask & full) : 0;
  e.state = PacketState::S2;
}

void CrelayNode::handle_data(const frame::ParsedFrame& pf, const frame::ReceivedPacket& p, int estimate, int now) {
  const auto& h = p.header;
  const PacketKey key = h.key;
  const NodeId from = pf.header.sender;
  const auto& pth = path(key.src, key.dst);
  const int my = position(pth, id_), x = position(pth, from);
  if (my < 0 || x < 0) return;

  if (my < x) {
    // Only S2 packets are sent, so a downstream sender already has it.
    if (done_.count(key)) return;
    const auto it = packets_.find(key);
    if (it == packets_.end() || !it->second.decoded) queue_ack(key);
    remove(key, now, true);
    return;
  }
  if (done_.count(key)) {
    if (key.dst == id_ || tombstones_.count(key)) queue_ack(key);
    return;
  }
  auto it = packets_.find(key);
  if (it != packets_.end() && it->second.decoded) {
    queue_ack(key);
    return;
  }
  if (it == packets_.end()) it = packets_.emplace(key, Entry{}).first;
  Entry& e = it->second;
  if (e.buf.num_blocks == 0) e.buf = PacketBuffer(key, h.num_blocks);
  if (e.buf.num_blocks != h.num_blocks) return;

  const int seglen = h.end - h.start;
  const Segment seg{h.start, h.end, static_cast<std::uint16_t>(p.checksum_ok ? 0 : std::min(estimate, seglen))};
  const auto payload = pf.payload(p);
  for (int i = 0; i < h.cw_count; ++i) {
    auto& rec = e.buf.records[h.first_cw + i];
    if (rec.decoded) continue;
    merge_segment(rec, seg, payload.subspan(static_cast<std::size_t>(i) * seglen, seglen));
  }
  e.announcing = true;
  e.last_data = now;
  try_decode(e.buf, opt_.decode_slack, true);
  if (e.buf.complete())
    decoded(key, e, now);
  else
    e.status_fresh = true;
}

RxReport CrelayNode::on_frame(std::span<const std::uint8_t> bytes, int now) {
  RxReport rep;
  const auto pf = frame::parse(bytes);
  if (!pf) return rep;
  rep.header_ok = true;
  rep.sender = pf->header.sender;
  rep.announcements_ok = pf->announcements_ok;
  const NodeId from = pf->header.sender;
  if (!pf->announcements_ok || from >= n_ || from == id_) return rep;
  rep.acks = pf->acks;

  for (const auto& k : pf->acks) handle_ack(k, from, now);
  for (const auto& s : pf->statuses) handle_status(s, from, now);

  // AMPS runs once per frame, and only when some packet will be merged.
  std::vector<bool> relevant(pf->data.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < pf->data.size(); ++i) {
    const auto& key = pf->data[i].header.key;
    const auto& pth = path(key.src, key.dst);
    const int my = position(pth, id_), x = position(pth, from);
    if (my < 0 || x < 0 || my < x || done_.count(key)) continue;
    const auto it = packets_.find(key);
    if (it != packets_.end() && it->second.decoded) continue;
    relevant[i] = any = true;
  }
  std::vector<int> est(pf->data.size(), 0);
  if (any) {
    const auto m = amps::mismatches(pf->header.samples, amps::compute_samples(pf->section, pf->header.frame_seq));
    std::vector<amps::PacketShape> shapes;
    for (const auto& d : pf->data)
      shapes.push_back({static_cast<int>(d.header.payload_len() + frame::kPacketChecksumLen), d.header.cw_count});
    const auto e = tables_.lookup(m, alpha_[from], static_cast<int>(pf->section.size()), shapes);
    est = e.per_packet_e;
  }
  for (std::size_t i = 0; i < pf->data.size(); ++i) {
    if (relevant[i]) rep.amps.push_back({static_cast<int>(i), est[i], pf->data[i].checksum_ok});
    handle_data(*pf, pf->data[i], est[i], now);
  }
  return rep;
}

std::vector<Delivery> CrelayNode::take_deliveries() { return std::exchange(deliveries_, {}); }

std::optional<PacketState> CrelayNode::state(const PacketKey& key) const {
  const auto it = packets_.find(key);
  if (it == packets_.end()) return std::nullopt;
  return it->second.state;
}

std::vector<std::pair<PacketKey, PacketState>> CrelayNode::states() const {
  std::vector<std::pair<PacketKey, PacketState>> out;
  for (const auto& [k, e] : packets_) out.emplace_back(k, e.state);
  return out;
}

}  // namespace crelay::proto
