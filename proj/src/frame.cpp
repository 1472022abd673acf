#include "crelay/frame.hpp"

#include <algorithm>
#include <stdexcept>

#include "crelay/amps.hpp"
#include "crelay/checksum.hpp"
#include "crelay/fec.hpp"
#include "crelay/reed_solomon.hpp"

namespace crelay::frame {
namespace {

const ReedSolomon& header_code() {
  static const ReedSolomon rs(kHeaderParity);
  return rs;
}
const ReedSolomon& announce_code() {
  static const ReedSolomon rs(kAnnounceParity);
  return rs;
}

struct Writer {
  std::vector<std::uint8_t>& out;
  void u8(unsigned v) { out.push_back(static_cast<std::uint8_t>(v)); }
  void u16(unsigned v) {
    u8(v & 0xFF);
    u8((v >> 8) & 0xFF);
  }
  void u32(std::uint32_t v) {
    u16(v & 0xFFFF);
    u16(v >> 16);
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void key(const PacketKey& k) {
    u16(k.src);
    u16(k.dst);
    u16(k.seq);
  }
};

struct Reader {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;
  bool ok = true;

  bool need(std::size_t n) {
    if (pos + n > in.size()) ok = false;
    return ok;
  }
  unsigned u8() { return need(1) ? in[pos++] : 0; }
  unsigned u16() {
    const unsigned lo = u8();
    return lo | (u8() << 8);
  }
  std::uint32_t u32() {
    const std::uint32_t lo = u16();
    return lo | (static_cast<std::uint32_t>(u16()) << 16);
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  PacketKey key() {
    PacketKey k;
    k.src = static_cast<std::uint16_t>(u16());
    k.dst = static_cast<std::uint16_t>(u16());
    k.seq = static_cast<std::uint16_t>(u16());
    return k;
  }
};

void check_frame(const Frame& f) {
  if (f.acks.size() > kMaxEntries || f.statuses.size() > kMaxEntries || f.data.size() > kMaxEntries)
    throw std::invalid_argument("frame: too many announcement entries");
  for (const auto& s : f.statuses) {
    if (s.num_blocks < 1 || s.num_blocks > kMaxBlocks) throw std::invalid_argument("frame: status num_blocks");
    if (s.segments.size() > kMaxStatusSegments) throw std::invalid_argument("frame: status has too many segments");
    for (const auto& g : s.segments)
      if (g.start >= g.end || g.end > fec::kCodewordLen || g.est_errors > 255)
        throw std::invalid_argument("frame: bad status segment");
  }
  for (const auto& d : f.data) {
    const auto& h = d.header;
    if (h.num_blocks < 1 || h.num_blocks > kMaxBlocks) throw std::invalid_argument("frame: data num_blocks");
    if (h.start >= h.end) throw std::invalid_argument("frame: empty data segment");
    if (h.cw_count == 0 || h.first_cw + h.cw_count > h.num_blocks)
      throw std::invalid_argument("frame: codeword range outside the packet");
    if (d.payload.size() != h.payload_len()) throw std::invalid_argument("frame: payload length mismatch");
  }
  if (announce_content_len(f) > kAnnounceMaxContent) throw std::invalid_argument("frame: announcements too long");
  if (data_len(f) > 0xFFFF) throw std::invalid_argument("frame: data section too long");
}

bool parse_announcements(std::span<const std::uint8_t> content, ParsedFrame& out) {
  Reader r{content};
  const unsigned na = r.u8(), ns = r.u8(), nd = r.u8();
  for (unsigned i = 0; i < na && r.ok; ++i) out.acks.push_back(r.key());
  for (unsigned i = 0; i < ns && r.ok; ++i) {
    ReceivingStatus s;
    s.key = r.key();
    s.decoded_mask = r.u32();
    const unsigned packed = r.u8();
    s.num_blocks = static_cast<std::uint8_t>((packed >> 3) + 1);
    const unsigned nseg = packed & 7;
    for (unsigned k = 0; k < nseg && r.ok; ++k) {
      Segment g;
      g.start = static_cast<std::uint16_t>(r.u16());
      g.end = static_cast<std::uint16_t>(r.u16());
      g.est_errors = static_cast<std::uint16_t>(r.u8());
      if (g.start >= g.end || g.end > fec::kCodewordLen) return false;
      s.segments.push_back(g);
    }
    out.statuses.push_back(std::move(s));
  }
  std::size_t offset = 0;
  for (unsigned i = 0; i < nd && r.ok; ++i) {
    ReceivedPacket p;
    p.header.key = r.key();
    p.header.num_blocks = static_cast<std::uint8_t>(r.u8());
    p.header.start = static_cast<std::uint8_t>(r.u8());
    p.header.end = static_cast<std::uint8_t>(r.u8());
    p.header.first_cw = static_cast<std::uint8_t>(r.u8());
    p.header.cw_count = static_cast<std::uint8_t>(r.u8());
    const auto& h = p.header;
    if (h.num_blocks < 1 || h.num_blocks > kMaxBlocks || h.start >= h.end || h.cw_count == 0 ||
        h.first_cw + h.cw_count > h.num_blocks)
      return false;
    p.offset = offset;
    offset += h.payload_len() + kPacketChecksumLen;
    out.data.push_back(p);
  }
  return r.ok && r.pos == content.size() && offset == out.header.data_len;
}

}  // namespace

std::size_t announce_content_len(const Frame& f) {
  std::size_t n = 3 + f.acks.size() * kAckLen + f.data.size() * kDataHeaderLen;
  for (const auto& s : f.statuses) n += kStatusLen + s.segments.size() * kSegmentLen;
  return n;
}

std::size_t announce_len(const Frame& f) { return announce_content_len(f) + 2 + kAnnounceParity; }

std::size_t data_len(const Frame& f) {
  std::size_t n = 0;
  for (const auto& d : f.data) n += d.payload.size() + kPacketChecksumLen;
  return n;
}

std::size_t frame_len(const Frame& f) { return kHeaderLen + announce_len(f) + data_len(f); }

std::vector<std::uint8_t> data_section(const Frame& f) {
  std::vector<std::uint8_t> out;
  out.reserve(data_len(f));
  Writer w{out};
  for (const auto& d : f.data) {
    out.insert(out.end(), d.payload.begin(), d.payload.end());
    w.u32(crc32(d.payload));
  }
  return out;
}

std::vector<std::uint8_t> serialize(const Frame& f) {
  check_frame(f);
  const auto section = data_section(f);

  std::vector<std::uint8_t> ann;
  Writer a{ann};
  a.u8(static_cast<unsigned>(f.acks.size()));
  a.u8(static_cast<unsigned>(f.statuses.size()));
  a.u8(static_cast<unsigned>(f.data.size()));
  for (const auto& k : f.acks) a.key(k);
  for (const auto& s : f.statuses) {
    a.key(s.key);
    a.u32(s.decoded_mask);
    a.u8(static_cast<unsigned>((s.num_blocks - 1) << 3 | s.segments.size()));
    for (const auto& g : s.segments) {
      a.u16(g.start);
      a.u16(g.end);
      a.u8(g.est_errors);
    }
  }
  for (const auto& d : f.data) {
    const auto& h = d.header;
    a.key(h.key);
    a.u8(h.num_blocks);
    a.u8(h.start);
    a.u8(h.end);
    a.u8(h.first_cw);
    a.u8(h.cw_count);
  }
  a.u16(crc16(ann));
  ann = announce_code().encode(ann);

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderLen + ann.size() + section.size());
  Writer h{out};
  h.u16(static_cast<unsigned>(ann.size()));
  h.u16(static_cast<unsigned>(section.size()));
  h.u16(f.frame_seq);
  h.u16(f.sender);
  h.u64(section.empty() ? 0 : amps::compute_samples(section, f.frame_seq));
  h.u16(crc16(out));
  out = header_code().encode(out);

  out.insert(out.end(), ann.begin(), ann.end());
  const auto mixed = fec::interleave(section, fec::frame_perm_seed(f.frame_seq));
  out.insert(out.end(), mixed.begin(), mixed.end());
  return out;
}

std::optional<Header> parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderLen) return std::nullopt;
  std::vector<std::uint8_t> hdr(bytes.begin(), bytes.begin() + kHeaderLen);
  if (!header_code().decode(hdr, {})) return std::nullopt;
  Reader r{hdr};
  Header h;
  h.announce_len = static_cast<std::uint16_t>(r.u16());
  h.data_len = static_cast<std::uint16_t>(r.u16());
  h.frame_seq = static_cast<std::uint16_t>(r.u16());
  h.sender = static_cast<std::uint16_t>(r.u16());
  h.samples = r.u64();
  const unsigned crc = r.u16();
  if (crc != crc16(std::span(hdr).first(16))) return std::nullopt;
  if (h.announce_len < kAnnounceOverhead || h.announce_len > 255) return std::nullopt;
  if (bytes.size() < kHeaderLen + h.announce_len + h.data_len) return std::nullopt;
  return h;
}

std::optional<ParsedFrame> parse(std::span<const std::uint8_t> bytes) {
  const auto h = parse_header(bytes);
  if (!h) return std::nullopt;
  ParsedFrame out;
  out.header = *h;
  out.section = fec::deinterleave(bytes.subspan(kHeaderLen + h->announce_len, h->data_len),
                                  fec::frame_perm_seed(h->frame_seq));

  std::vector<std::uint8_t> ann(bytes.begin() + kHeaderLen, bytes.begin() + kHeaderLen + h->announce_len);
  if (!announce_code().decode(ann, {})) return out;
  const auto body = std::span(ann).first(ann.size() - kAnnounceParity);
  const auto content = body.first(body.size() - 2);
  if ((body[body.size() - 2] | body[body.size() - 1] << 8) != crc16(content)) return out;
  if (!parse_announcements(content, out)) {
    out.acks.clear();
    out.statuses.clear();
    out.data.clear();
    return out;
  }
  out.announcements_ok = true;
  for (auto& p : out.data) {
    const auto pay = out.payload(p);
    const auto* t = out.section.data() + p.offset + pay.size();
    const std::uint32_t sent = t[0] | t[1] << 8 | t[2] << 16 | static_cast<std::uint32_t>(t[3]) << 24;
    p.checksum_ok = sent == crc32(pay);
  }
  return out;
}

std::optional<Frame> deserialize(std::span<const std::uint8_t> bytes) {
  const auto p = parse(bytes);
  if (!p || !p->announcements_ok) return std::nullopt;
  if (bytes.size() != kHeaderLen + p->header.announce_len + p->header.data_len) return std::nullopt;
  Frame f;
  f.frame_seq = p->header.frame_seq;
  f.sender = p->header.sender;
  f.acks = p->acks;
  f.statuses = p->statuses;
  for (const auto& d : p->data) {
    if (!d.checksum_ok) return std::nullopt;
    const auto pay = p->payload(d);
    f.data.push_back({d.header, {pay.begin(), pay.end()}});
  }
  return f;
}

}  // namespace crelay::frame
