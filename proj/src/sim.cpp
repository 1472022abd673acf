#include "crelay/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>

#include "crelay/amps_table.hpp"
#include "crelay/fec.hpp"
#include "crelay/frame.hpp"

namespace crelay::sim {
namespace {

constexpr std::uint64_t kHelloTag = 0x48454C4C4FULL;
constexpr std::size_t kMaxViolations = 20;

std::string key_str(const PacketKey& k) {
  return std::to_string(k.src) + ">" + std::to_string(k.dst) + "#" + std::to_string(k.seq);
}

std::string describe(const frame::Frame& f) {
  std::ostringstream o;
  o << "seq=" << f.frame_seq;
  for (const auto& k : f.acks) o << " ack(" << key_str(k) << ")";
  for (const auto& s : f.statuses) {
    o << " status(" << key_str(s.key) << " blocks=" << int(s.num_blocks) << " mask=" << std::hex << s.decoded_mask
      << std::dec;
    for (const auto& g : s.segments) o << " [" << g.start << "," << g.end << ")e" << g.est_errors;
    o << ")";
  }
  for (const auto& d : f.data)
    o << " data(" << key_str(d.header.key) << " [" << int(d.header.start) << "," << int(d.header.end) << ") cw "
      << int(d.header.first_cw) << "+" << int(d.header.cw_count) << ")";
  return o.str();
}

std::string describe(const srcr::Frame& f) {
  std::ostringstream o;
  o << "seq=" << f.frame_seq;
  for (const auto& k : f.acks) o << " ack(" << key_str(k) << ")";
  if (f.has_data) o << " data(" << key_str(f.key) << " to " << f.next_hop << " " << f.payload.size() << "B)";
  return o.str();
}

void hex_dump(std::ostream& o, const std::vector<std::uint8_t>& b) {
  static const char* digits = "0123456789abcdef";
  o << " hex=";
  for (auto v : b) o << digits[v >> 4] << digits[v & 15];
}

std::vector<std::uint8_t> seeded_bytes(std::uint64_t seed, std::size_t n) {
  SplitMixStream g(seed);
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; i += 8) {
    const std::uint64_t v = g();
    for (std::size_t k = 0; k < 8 && i + k < n; ++k) out[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
  }
  return out;
}

// A hello is an ordinary frame whose data bytes every node can regenerate.
frame::Frame hello_frame(NodeId sender, int k, int bytes) {
  frame::Frame f;
  f.sender = static_cast<std::uint16_t>(sender);
  f.frame_seq = static_cast<std::uint16_t>(k);
  const int cw = std::max(1, std::min(kMaxBlocks, (bytes + 149) / 150));
  frame::DataPacket d;
  d.header = {{static_cast<std::uint16_t>(sender), 0xFFFF, static_cast<std::uint16_t>(k)},
              static_cast<std::uint8_t>(cw), 0, 150, 0, static_cast<std::uint8_t>(cw)};
  d.payload = seeded_bytes(derive_seed({kHelloTag, static_cast<std::uint64_t>(sender), static_cast<std::uint64_t>(k)}),
                           d.header.payload_len());
  f.data.push_back(std::move(d));
  return f;
}

struct LinkObservation {
  std::vector<int> heard;        // frame seqs whose header decoded
  std::vector<int> clean;        // frame seqs with no bad byte at all
  std::vector<double> ratios;    // bad-byte fraction of each heard frame
};

double gap_erasure(const std::vector<int>& seqs) {
  if (seqs.size() < 2) return 1.0;
  const auto [lo, hi] = std::minmax_element(seqs.begin(), seqs.end());
  return 1.0 - static_cast<double>(seqs.size()) / (*hi - *lo + 1);
}

struct Measured {
  routing::LinkTable crelay;
  routing::LinkTable srcr;
  std::vector<std::vector<int>> alpha;  // [receiver][sender]
};

Measured hello_phase(const Scenario& sc, Channel& ch, Rng& mac) {
  const int n = sc.num_nodes;
  std::vector<std::pair<NodeId, int>> events;
  for (NodeId s = 0; s < n; ++s)
    for (int k = 0; k < sc.sim.hellos_per_node; ++k) events.emplace_back(s, k);
  std::shuffle(events.begin(), events.end(), mac);

  std::vector<LinkObservation> obs(static_cast<std::size_t>(n) * n);
  for (const auto& [s, k] : events) {
    const auto bytes = frame::serialize(hello_frame(s, k, sc.sim.hello_bytes));
    for (NodeId r = 0; r < n; ++r) {
      if (r == s) continue;
      const auto rx = ch.transmit(bytes, s, r);
      if (rx.erased) continue;
      auto& o = obs[static_cast<std::size_t>(s) * n + r];
      if (rx.corrupted == 0) o.clean.push_back(k);
      if (!frame::parse_header(rx.bytes)) continue;
      o.heard.push_back(k);
      o.ratios.push_back(static_cast<double>(rx.corrupted) / static_cast<double>(bytes.size()));
    }
  }

  Measured m{routing::LinkTable(n), routing::LinkTable(n),
             std::vector<std::vector<int>>(n, std::vector<int>(n, amps::alpha_index(1.0)))};
  for (NodeId s = 0; s < n; ++s)
    for (NodeId r = 0; r < n; ++r) {
      if (s == r) continue;
      const auto& o = obs[static_cast<std::size_t>(s) * n + r];
      double p = 0;
      std::vector<double> bad;
      for (double x : o.ratios) {
        p += x;
        if (x > 0) bad.push_back(std::clamp(x, amps::kGamma, amps::kNu));
      }
      p = o.ratios.empty() ? 0.0 : p / static_cast<double>(o.ratios.size());
      m.crelay.at(s, r) = {gap_erasure(o.heard), std::min(p, 0.499)};
      m.srcr.at(s, r) = {gap_erasure(o.clean), 0.0};
      if (bad.size() >= 5) m.alpha[r][s] = amps::alpha_index(amps::fit_alpha(bad));
    }
  return m;
}

struct FlowState {
  long offered = 0, injected = 0, delivered = 0;
  double delay_sum = 0;
  std::uint16_t next_seq = 0;
};

struct Sent {
  int flow = 0;
  int slot = 0;
  std::vector<std::uint8_t> payload;
};

class Runner {
 public:
  Runner(const Scenario& sc, Protocol p, const RunOptions& opt) : sc_(sc), proto_(p), opt_(opt) {
    m_.protocol = p;
  }

  Metrics run() {
    sc_.validate();
    const int n = sc_.num_nodes;
    Channel ch(n, derive_seed({sc_.sim.seed, 1}), sc_.sim.burst, sc_.sim.burst_mean);
    for (NodeId a = 0; a < n; ++a)
      for (NodeId b = 0; b < n; ++b) ch.link(a, b) = sc_.links[a][b];
    Rng mac(derive_seed({sc_.sim.seed, 2}));

    const Measured meas = hello_phase(sc_, ch, mac);
    if (proto_ == Protocol::Crelay) {
      m_.measured = meas.crelay;
      for (NodeId i = 0; i < n; ++i) {
        crelay_.push_back(std::make_unique<proto::CrelayNode>(i, n, sc_.crelay, amps::AmpsTables::shared()));
        crelay_.back()->set_links(meas.crelay);
        for (NodeId s = 0; s < n; ++s)
          if (s != i) crelay_.back()->set_alpha(s, meas.alpha[i][s]);
      }
    } else {
      m_.measured = meas.srcr;
      for (NodeId i = 0; i < n; ++i) {
        srcr_.push_back(std::make_unique<srcr::SrcrNode>(i, n, sc_.srcr));
        srcr_.back()->set_links(meas.srcr);
      }
    }
    known_acks_.assign(n, {});
    flows_.assign(sc_.flows.size(), {});

    const int end = sc_.sim.data_slots + sc_.sim.drain_slots;
    int busy_until = 0;
    // Protocol timers count frame-slots: a frame on the channel or an idle slot.
    // Airtime and injection use simulator slots.
    int clock = 0;
    for (int now = 0; now < end; ++now) {
      slot_ = now;
      inject(now, clock);
      if (now >= busy_until) {
        for (NodeId i = 0; i < n; ++i) tick(i, clock);
        std::vector<NodeId> ready;
        for (NodeId i = 0; i < n; ++i)
          if (backlogged(i)) ready.push_back(i);
        const NodeId s = mac_pick(mac, ready);
        const int air = s >= 0 ? transmit(s, clock, ch) : 0;
        if (air > 0) busy_until = now + air;
        ++clock;
      }
      for (NodeId i = 0; i < n; ++i) collect(i, now);
    }
    finish();
    return std::move(m_);
  }

 private:
  const std::vector<NodeId>& path(NodeId src, NodeId dst) {
    return proto_ == Protocol::Crelay ? crelay_[0]->path(src, dst) : srcr_[0]->path(src, dst);
  }
  void tick(NodeId i, int now) {
    if (proto_ == Protocol::Crelay)
      crelay_[i]->tick(now);
    else
      srcr_[i]->tick(now);
  }
  bool backlogged(NodeId i) const {
    return proto_ == Protocol::Crelay ? crelay_[i]->backlogged() : srcr_[i]->backlogged();
  }

  void violation(std::string msg) {
    if (m_.violations.size() < kMaxViolations) m_.violations.push_back(std::move(msg));
  }

  void inject(int now, int clock) {
    for (std::size_t f = 0; f < sc_.flows.size(); ++f) {
      const auto& spec = sc_.flows[f];
      const int dur = spec.duration_slots < 0 ? sc_.sim.data_slots : spec.duration_slots;
      const int rel = now - spec.start_slot;
      if (rel < 0 || rel >= dur || now >= sc_.sim.data_slots || rel % spec.interval_slots != 0) continue;
      auto& st = flows_[f];
      ++st.offered;
      const PacketKey key{static_cast<std::uint16_t>(spec.src), static_cast<std::uint16_t>(spec.dst),
                          seqs_[{spec.src, spec.dst}]};
      auto payload = seeded_bytes(derive_seed({sc_.sim.seed, 3, f, static_cast<std::uint64_t>(st.offered)}),
                                  static_cast<std::size_t>(spec.pkt_bytes));
      const bool ok = proto_ == Protocol::Crelay ? crelay_[spec.src]->inject(key, payload, clock)
                                                 : srcr_[spec.src]->inject(key, payload, clock);
      if (!ok) continue;
      ++seqs_[{spec.src, spec.dst}];
      ++st.injected;
      sent_[key] = {static_cast<int>(f), now, std::move(payload)};
    }
  }

  int transmit(NodeId s, int now, Channel& ch) {  // now: frame clock
    std::vector<std::uint8_t> bytes;
    std::optional<frame::Frame> cf;
    if (proto_ == Protocol::Crelay) {
      std::map<PacketKey, proto::PacketState> before;
      if (opt_.check_invariants)
        for (const auto& [k, st] : crelay_[s]->states()) before[k] = st;
      cf = crelay_[s]->build_frame(now, static_cast<std::size_t>(sc_.sim.mtu));
      if (!cf) return 0;
      bytes = frame::serialize(*cf);
      if (opt_.trace) *opt_.trace << "slot=" << slot_ << " node=" << s << " len=" << bytes.size() << " " << describe(*cf);
      if (opt_.check_invariants) {
        if (frame::deserialize(bytes) != cf) violation("codec round trip failed");
        if (bytes.size() > static_cast<std::size_t>(sc_.sim.mtu)) violation("frame exceeds MTU");
        for (const auto& d : cf->data) {
          const auto it = before.find(d.header.key);
          if (it == before.end() || it->second != proto::PacketState::S2)
            violation("node " + std::to_string(s) + " sent data outside S2");
          if (known_acks_[s].count(d.header.key))
            violation("node " + std::to_string(s) + " sent data after a downstream ACK");
        }
      }
    } else {
      const auto f = srcr_[s]->build_frame(now, static_cast<std::size_t>(sc_.sim.mtu));
      if (!f) return 0;
      bytes = srcr::serialize(*f);
      if (opt_.trace) *opt_.trace << "slot=" << slot_ << " node=" << s << " len=" << bytes.size() << " " << describe(*f);
      if (opt_.check_invariants) {
        if (srcr::deserialize(bytes) != f) violation("codec round trip failed");
        if (f->has_data && known_acks_[s].count(f->key))
          violation("node " + std::to_string(s) + " sent data after a downstream ACK");
      }
    }
    if (opt_.trace) {
      if (opt_.trace_hex) hex_dump(*opt_.trace, bytes);
      *opt_.trace << "\n";
    }
    ++m_.frames_tx;
    m_.bytes_tx += static_cast<long>(bytes.size());

    std::vector<std::uint8_t> section;
    std::vector<std::size_t> offsets;
    if (cf) {
      section = frame::data_section(*cf);
      std::size_t off = 0;
      for (const auto& d : cf->data) {
        offsets.push_back(off);
        off += d.payload.size() + frame::kPacketChecksumLen;
      }
    }

    for (NodeId r = 0; r < sc_.num_nodes; ++r) {
      if (r == s) continue;
      const auto rx = ch.transmit(bytes, s, r);
      if (rx.erased) continue;
      std::vector<PacketKey> acks;
      if (proto_ == Protocol::Crelay) {
        const auto rep = crelay_[r]->on_frame(rx.bytes, now);
        if (!rep.header_ok) continue;
        acks = rep.acks;
        if (!rep.amps.empty()) record_amps(*cf, rep, rx.bytes, section, offsets);
      } else {
        const auto rep = srcr_[r]->on_frame(rx.bytes, now);
        if (!rep.ok) continue;
        acks = rep.acks;
      }
      for (const auto& k : acks) {
        const auto& p = path(k.src, k.dst);
        const auto me = std::find(p.begin(), p.end(), r), from = std::find(p.begin(), p.end(), s);
        if (me == p.end() || from == p.end() || from <= me) continue;
        // Srcr forwards hop by hop, so only its next hop's ACK counts.
        if (proto_ == Protocol::Crelay || from == me + 1) known_acks_[r].insert(k);
      }
    }
    return std::max(1, static_cast<int>((bytes.size() + sc_.sim.bytes_per_slot - 1) / sc_.sim.bytes_per_slot));
  }

  void record_amps(const frame::Frame& f, const proto::RxReport& rep, const std::vector<std::uint8_t>& rx,
                   const std::vector<std::uint8_t>& section, const std::vector<std::size_t>& offsets) {
    const std::size_t start = frame::kHeaderLen + frame::announce_len(f);
    const auto got = fec::deinterleave(std::span(rx).subspan(start, section.size()), fec::frame_perm_seed(f.frame_seq));
    for (const auto& a : rep.amps) {
      const auto& h = f.data[a.packet_index].header;
      const std::size_t seglen = h.end - h.start;
      ++m_.data_receptions;
      if (!a.checksum_ok) ++m_.partial_receptions;
      for (int k = 0; k < h.cw_count; ++k) {
        const std::size_t base = offsets[a.packet_index] + k * seglen;
        int truth = 0;
        for (std::size_t i = base; i < base + seglen; ++i) truth += got[i] != section[i];
        m_.amps.push_back({a.estimate, truth});
      }
    }
  }

  void collect(NodeId i, int now) {
    auto ds = proto_ == Protocol::Crelay ? crelay_[i]->take_deliveries() : srcr_[i]->take_deliveries();
    for (auto& d : ds) {
      const auto it = sent_.find(d.key);
      if (it == sent_.end()) {
        violation("delivered a packet that was never injected");
        continue;
      }
      if (!delivered_.insert(d.key).second) {
        violation("packet delivered twice");
        continue;
      }
      auto want = it->second.payload;
      if (proto_ == Protocol::Crelay) want.resize(d.payload.size(), 0);
      if (d.key.dst != i || d.payload != want) violation("delivered payload differs from the injected one");
      auto& st = flows_[it->second.flow];
      ++st.delivered;
      st.delay_sum += now - it->second.slot;
      m_.delivered_bytes += static_cast<long>(it->second.payload.size());
    }
  }

  void finish() {
    const double seconds = static_cast<double>(sc_.sim.data_slots) / sc_.sim.slots_per_second;
    for (std::size_t f = 0; f < sc_.flows.size(); ++f) {
      const auto& st = flows_[f];
      FlowMetrics fm;
      fm.flow = static_cast<int>(f);
      fm.src = sc_.flows[f].src;
      fm.dst = sc_.flows[f].dst;
      fm.path = path(fm.src, fm.dst);
      fm.offered = st.offered;
      fm.injected = st.injected;
      fm.delivered = st.delivered;
      fm.throughput_pps = st.delivered / seconds;
      fm.mean_delay_slots = st.delivered > 0 ? st.delay_sum / st.delivered : 0.0;
      m_.flows.push_back(std::move(fm));
    }
  }

  const Scenario& sc_;
  Protocol proto_;
  RunOptions opt_;
  Metrics m_;
  std::vector<std::unique_ptr<proto::CrelayNode>> crelay_;
  std::vector<std::unique_ptr<srcr::SrcrNode>> srcr_;
  std::vector<std::set<PacketKey>> known_acks_;
  std::vector<FlowState> flows_;
  std::map<std::pair<NodeId, NodeId>, std::uint16_t> seqs_;
  std::map<PacketKey, Sent> sent_;
  std::set<PacketKey> delivered_;
  int slot_ = 0;
};

}  // namespace

Scenario Scenario::empty(int n) {
  Scenario sc;
  sc.num_nodes = n;
  for (int i = 0; i < n; ++i) sc.names.push_back(std::to_string(i));
  sc.links.assign(n, std::vector<LinkModel>(n));
  return sc;
}

void Scenario::set_link(NodeId a, NodeId b, const LinkModel& m, bool symmetric) {
  links.at(a).at(b) = m;
  if (symmetric) links.at(b).at(a) = m;
}

void Scenario::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument(what); };
  if (num_nodes < 2 || num_nodes > 0xFFFE) bad("nodes: need between 2 and 65534 nodes");
  if (static_cast<int>(names.size()) != num_nodes) bad("nodes: name count mismatch");
  if (static_cast<int>(links.size()) != num_nodes) bad("links: matrix size mismatch");
  for (int a = 0; a < num_nodes; ++a) {
    if (static_cast<int>(links[a].size()) != num_nodes) bad("links: matrix size mismatch");
    for (int b = 0; b < num_nodes; ++b) {
      const auto& l = links[a][b];
      const std::string where = "links[" + names[a] + "->" + names[b] + "].";
      if (!(l.erasure >= 0 && l.erasure <= 1)) bad(where + "erasure must be in [0,1]");
      if (!(l.clean_fraction >= 0 && l.clean_fraction <= 1)) bad(where + "clean_fraction must be in [0,1]");
      if (l.errors && !(l.alpha > 0 && std::isfinite(l.alpha))) bad(where + "alpha must be positive");
    }
  }
  for (std::size_t f = 0; f < flows.size(); ++f) {
    const auto& fl = flows[f];
    const std::string where = "flows[" + std::to_string(f) + "].";
    if (fl.src < 0 || fl.src >= num_nodes) bad(where + "src out of range");
    if (fl.dst < 0 || fl.dst >= num_nodes) bad(where + "dst out of range");
    if (fl.src == fl.dst) bad(where + "src equals dst");
    if (fl.pkt_bytes < 1 || fl.pkt_bytes > kMaxBlocks * static_cast<int>(fec::kBlockLen))
      bad(where + "pkt_bytes must be in [1,4800]");
    if (fl.interval_slots < 1) bad(where + "interval_slots must be positive");
    if (fl.start_slot < 0) bad(where + "start_slot must be non-negative");
  }
  if (sim.mtu < 600 || sim.mtu > 0xFFFF) bad("sim.mtu must be in [600,65535]");
  if (sim.slots_per_second < 1) bad("sim.slots_per_second must be positive");
  if (sim.bytes_per_slot < 1) bad("sim.bytes_per_slot must be positive");
  if (sim.hellos_per_node < 0 || sim.hellos_per_node > 0xFFFF) bad("sim.hellos_per_node out of range");
  if (sim.hello_bytes < 1 || sim.hello_bytes > kMaxBlocks * 150) bad("sim.hello_bytes must be in [1,4800]");
  if (sim.hello_bytes + 200 > sim.mtu) bad("sim.hello_bytes does not fit the MTU");
  if (sim.data_slots < 0 || sim.drain_slots < 0) bad("sim: slot counts must be non-negative");
  if (crelay.w < 1) bad("protocol.w must be at least 1");
  if (crelay.queue_limit < 1 || srcr.queue_limit < 1) bad("protocol.queue_limit must be positive");
}

const char* to_string(Protocol p) { return p == Protocol::Crelay ? "crelay" : "srcr"; }

Metrics run(const Scenario& sc, Protocol protocol, const RunOptions& opt) {
  return Runner(sc, protocol, opt).run();
}

double throughput_gain(double mu_a, double mu_b) {
  if (mu_b <= 0) return mu_a > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  return (mu_a - mu_b) / mu_b;
}

}  // namespace crelay::sim
