#include "crelay/packet_model.hpp"

#include <algorithm>
#include <bitset>
#include <stdexcept>

namespace crelay {

int Record::coverage() const {
  int n = 0;
  for (const auto& s : segments) n += s.length();
  return n;
}

int Record::est_total() const {
  int n = 0;
  for (const auto& s : segments) n += s.est_errors;
  return n;
}

std::bitset<fec::kCodewordLen> Record::present() const {
  std::bitset<fec::kCodewordLen> p;
  for (const auto& s : segments)
    for (int i = s.start; i < s.end; ++i) p.set(i);
  return p;
}

namespace {

Segment piece(int start, int end, int est) {
  return Segment{static_cast<std::uint16_t>(start), static_cast<std::uint16_t>(end),
                 static_cast<std::uint16_t>(std::min(est, end - start))};
}

}  // namespace

void merge_segment(Record& record, const Segment& incoming, std::span<const std::uint8_t> bytes) {
  if (incoming.start >= incoming.end || incoming.end > fec::kCodewordLen)
    throw std::invalid_argument("merge_segment: segment outside [0,255]");
  if (bytes.size() != static_cast<std::size_t>(incoming.length()))
    throw std::invalid_argument("merge_segment: byte count does not match segment");

  const int a = incoming.start, b = incoming.end;
  std::vector<Segment> kept;
  // Positions in [a,b) still held by an older segment that wins the overlap.
  std::vector<bool> blocked(b - a, false);

  for (const auto& old : record.segments) {
    const int lo = std::max<int>(old.start, a), hi = std::min<int>(old.end, b);
    if (lo >= hi) {
      kept.push_back(old);
    } else if (old.est_errors <= incoming.est_errors) {
      kept.push_back(old);
      for (int i = lo; i < hi; ++i) blocked[i - a] = true;
    } else {
      if (old.start < lo) kept.push_back(piece(old.start, lo, old.est_errors));
      if (hi < old.end) kept.push_back(piece(hi, old.end, old.est_errors));
    }
  }

  for (int i = a; i < b;) {
    if (blocked[i - a]) {
      ++i;
      continue;
    }
    int j = i;
    while (j < b && !blocked[j - a]) {
      record.values[j] = bytes[j - a];
      ++j;
    }
    kept.push_back(piece(i, j, incoming.est_errors));
    i = j;
  }

  std::sort(kept.begin(), kept.end(), [](const Segment& x, const Segment& y) { return x.start < y.start; });
  record.segments = std::move(kept);
}

bool decodable_estimate(std::span<const Segment> segments) {
  int cov = 0, est = 0;
  for (const auto& s : segments) {
    cov += s.length();
    est += s.est_errors;
  }
  return cov >= static_cast<int>(fec::kBlockLen) + 2 * est;
}

bool decodable_estimate(const Record& record) { return decodable_estimate(record.segments); }

PacketBuffer::PacketBuffer(PacketKey k, int blocks) : key(k), num_blocks(blocks) {
  if (blocks < 1 || blocks > kMaxBlocks) throw std::invalid_argument("PacketBuffer: num_blocks must be in [1,32]");
  records.resize(blocks);
  for (int i = 0; i < blocks; ++i) records[i].codeword_index = static_cast<std::uint16_t>(i);
}

std::uint32_t PacketBuffer::full_mask() const {
  return num_blocks >= 32 ? 0xFFFFFFFFu : ((1u << num_blocks) - 1);
}

namespace {

std::uint64_t fingerprint(const Record& rec) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix = [&](std::uint64_t v) { h = (h ^ v) * 0x100000001B3ull; };
  for (const auto& s : rec.segments) {
    mix(s.start | static_cast<std::uint64_t>(s.end) << 16 | static_cast<std::uint64_t>(s.est_errors) << 32);
    for (int i = s.start; i < s.end; ++i) mix(rec.values[i]);
  }
  return h | 1;  // never 0, the "nothing tried" value
}

}  // namespace

DecodeReport try_decode(PacketBuffer& buffer, int min_slack, bool trust_zero_estimates) {
  DecodeReport rep;
  for (int i = 0; i < buffer.num_blocks; ++i) {
    auto& rec = buffer.records[i];
    if (rec.decoded) continue;
    const std::uint32_t bit = 1u << i;
    const int need = trust_zero_estimates && rec.est_total() == 0 ? 0 : min_slack;
    // Slack can never exceed the redundancy actually present.
    if (rec.coverage() < static_cast<int>(fec::kBlockLen) + need) {
      rep.failed |= bit;
      continue;
    }
    const auto fp = fingerprint(rec);
    if (fp == rec.failed_fingerprint && rec.failed_slack < need) {
      rep.failed |= bit;
      continue;
    }
    fec::CodewordView view;
    view.values = rec.values;
    view.present = rec.present();
    const auto res = fec::rs_decode_detailed(view);
    if (!res || res->slack() < need) {
      rec.failed_fingerprint = fp;
      rec.failed_slack = res ? res->slack() : -1;
      rep.failed |= bit;
      continue;
    }
    rec.decoded = true;
    rec.decoded_block = res->block;
    buffer.decoded_mask |= bit;
    rep.newly_decoded |= bit;
  }
  return rep;
}

int blocks_for(std::size_t packet_bytes) {
  return static_cast<int>((packet_bytes + fec::kBlockLen - 1) / fec::kBlockLen);
}

std::vector<fec::Block> split_blocks(std::span<const std::uint8_t> packet) {
  std::vector<fec::Block> out(blocks_for(packet.size()));
  for (std::size_t i = 0; i < packet.size(); ++i) out[i / fec::kBlockLen][i % fec::kBlockLen] = packet[i];
  return out;
}

std::vector<std::uint8_t> join_blocks(std::span<const fec::Block> blocks, std::size_t packet_bytes) {
  if (packet_bytes > blocks.size() * fec::kBlockLen) throw std::invalid_argument("join_blocks: too few blocks");
  std::vector<std::uint8_t> out(packet_bytes);
  for (std::size_t i = 0; i < packet_bytes; ++i) out[i] = blocks[i / fec::kBlockLen][i % fec::kBlockLen];
  return out;
}

int union_coverage(std::span<const Segment> segments) {
  std::bitset<fec::kCodewordLen> p;
  for (const auto& s : segments)
    for (int i = s.start; i < s.end; ++i) p.set(i);
  return static_cast<int>(p.count());
}

Segment select_segment(std::span<const Segment> status) {
  constexpr int n = static_cast<int>(fec::kCodewordLen);
  std::bitset<fec::kCodewordLen> covered;
  int est = 0;
  for (const auto& s : status) {
    for (int i = s.start; i < s.end; ++i) covered.set(i);
    est += s.est_errors;
  }
  const int have = static_cast<int>(covered.count());
  // A status that already looks decodable means the estimates were too low
  // for the receiver; ask for at least one more byte.
  const int need = std::max(static_cast<int>(fec::kBlockLen) + 2 * est, have + 1);
  if (need > n) return Segment{0, static_cast<std::uint16_t>(n), 0};

  std::vector<int> starts{0};
  for (const auto& s : status) {
    starts.push_back(s.start);
    if (s.end < n) starts.push_back(s.end);
  }
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

  Segment best{0, static_cast<std::uint16_t>(n), 0};
  int best_len = n + 1;
  for (int a : starts) {
    int gained = have;
    for (int e = a; e < n; ++e) {
      if (!covered[e]) ++gained;
      if (gained >= need) {
        const int len = e + 1 - a;
        if (len < best_len) {
          best_len = len;
          best = Segment{static_cast<std::uint16_t>(a), static_cast<std::uint16_t>(e + 1), 0};
        }
        break;
      }
    }
  }
  return best;
}

}  // namespace crelay
