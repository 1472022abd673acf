#pragma once

#include <bitset>
#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "crelay/fec.hpp"

namespace crelay {

/// Half-open byte interval [start, end) of a codeword with its error estimate.
struct Segment {
  std::uint16_t start = 0;
  std::uint16_t end = 0;
  std::uint16_t est_errors = 0;

  int length() const { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// What one node holds of one codeword.
struct Record {
  std::uint16_t codeword_index = 0;
  std::vector<Segment> segments;  // sorted by start, non-overlapping
  fec::Codeword values{};
  bool decoded = false;
  fec::Block decoded_block{};
  // Last failed decode: content fingerprint and the slack it achieved
  // (-1 when the decoder gave up). Lets try_decode skip unchanged records.
  std::uint64_t failed_fingerprint = 0;
  int failed_slack = -1;

  int coverage() const;
  int est_total() const;
  std::bitset<fec::kCodewordLen> present() const;
};

/// Adds `bytes` (length end-start) received for `incoming`. Where it overlaps
/// held bytes, the side with the smaller estimate wins; ties keep what is held.
/// Trimmed pieces keep their segment's estimate, capped at the piece length.
void merge_segment(Record& record, const Segment& incoming, std::span<const std::uint8_t> bytes);

/// coverage >= 150 + 2 * (sum of segment estimates).
bool decodable_estimate(const Record& record);
bool decodable_estimate(std::span<const Segment> segments);

struct PacketKey {
  std::uint16_t src = 0;
  std::uint16_t dst = 0;
  std::uint16_t seq = 0;
  friend auto operator<=>(const PacketKey&, const PacketKey&) = default;
};

inline constexpr int kMaxBlocks = 32;

struct PacketBuffer {
  PacketKey key;
  int num_blocks = 0;
  std::vector<Record> records;
  std::uint32_t decoded_mask = 0;

  PacketBuffer() = default;
  PacketBuffer(PacketKey k, int blocks);

  std::uint32_t full_mask() const;
  bool complete() const { return decoded_mask == full_mask(); }
};

struct DecodeReport {
  std::uint32_t newly_decoded = 0;
  std::uint32_t failed = 0;
};

/// Runs rs_decode on every undecoded record. A decode is accepted only if it
/// leaves at least `min_slack` redundancy bytes unused, so callers that act on
/// noisy estimates can demand that something actually checked the result.
/// With trust_zero_estimates, records whose segments all claim zero errors
/// (bytes verified by a checksum) decode without slack.
DecodeReport try_decode(PacketBuffer& buffer, int min_slack = 0, bool trust_zero_estimates = false);

int blocks_for(std::size_t packet_bytes);

/// Splits a packet into zero-padded 150-byte blocks.
std::vector<fec::Block> split_blocks(std::span<const std::uint8_t> packet);

/// Inverse of split_blocks given the original length.
std::vector<std::uint8_t> join_blocks(std::span<const fec::Block> blocks, std::size_t packet_bytes);

/// Union of the covered byte positions.
int union_coverage(std::span<const Segment> segments);

/// Minimal segment that makes `status` decodable under its own estimates.
/// Candidate starts are 0 and every segment boundary; the shortest wins and
/// ties go to the smaller start. Falls back to (0,255) when nothing fits.
Segment select_segment(std::span<const Segment> status);

}  // namespace crelay
