#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "crelay/packet_model.hpp"

namespace crelay::frame {

// Header: announce_len 2, data_len 2, frame_seq 2, sender 2, AMPS samples 8,
// crc16 2, RS parity 10.
inline constexpr std::size_t kHeaderLen = 28;
inline constexpr int kHeaderParity = 10;
inline constexpr int kAnnounceParity = 32;
// One shortened codeword carries the announcements plus their crc16.
inline constexpr std::size_t kAnnounceMaxContent = 255 - kAnnounceParity - 2;
inline constexpr std::size_t kAnnounceOverhead = 3 + 2 + kAnnounceParity;
inline constexpr std::size_t kAckLen = 6;
inline constexpr std::size_t kStatusLen = 11;
inline constexpr std::size_t kSegmentLen = 5;
inline constexpr std::size_t kDataHeaderLen = 11;
inline constexpr std::size_t kPacketChecksumLen = 4;
inline constexpr int kMaxStatusSegments = 7;
inline constexpr int kMaxEntries = 255;

/// What a node has of one packet, as announced to its upstream neighbor.
struct ReceivingStatus {
  PacketKey key;
  std::uint8_t num_blocks = 1;
  std::uint32_t decoded_mask = 0;
  std::vector<Segment> segments;
  friend bool operator==(const ReceivingStatus&, const ReceivingStatus&) = default;
};

/// Byte range [start,end) of codewords first_cw .. first_cw+cw_count-1.
struct DataHeader {
  PacketKey key;
  std::uint8_t num_blocks = 1;
  std::uint8_t start = 0;
  std::uint8_t end = 0;  // 255 fits
  std::uint8_t first_cw = 0;
  std::uint8_t cw_count = 0;

  std::size_t payload_len() const { return static_cast<std::size_t>(cw_count) * (end - start); }
  friend bool operator==(const DataHeader&, const DataHeader&) = default;
};

struct DataPacket {
  DataHeader header;
  std::vector<std::uint8_t> payload;  // segment bytes, codeword after codeword
  friend bool operator==(const DataPacket&, const DataPacket&) = default;
};

struct Frame {
  std::uint16_t frame_seq = 0;
  std::uint16_t sender = 0;
  std::vector<PacketKey> acks;
  std::vector<ReceivingStatus> statuses;
  std::vector<DataPacket> data;
  friend bool operator==(const Frame&, const Frame&) = default;
};

std::size_t announce_content_len(const Frame& f);
std::size_t announce_len(const Frame& f);
std::size_t data_len(const Frame& f);
std::size_t frame_len(const Frame& f);

/// Data section before interleaving: each payload followed by its crc32.
std::vector<std::uint8_t> data_section(const Frame& f);

/// Wire bytes. Throws std::invalid_argument when the frame breaks a field
/// limit (too many entries, announcements over one codeword, bad ranges).
std::vector<std::uint8_t> serialize(const Frame& f);

struct Header {
  std::uint16_t announce_len = 0;
  std::uint16_t data_len = 0;
  std::uint16_t frame_seq = 0;
  std::uint16_t sender = 0;
  std::uint64_t samples = 0;
};

/// RS-corrects and checks the 28-byte header; nullopt means the frame is
/// treated as an erasure.
std::optional<Header> parse_header(std::span<const std::uint8_t> bytes);

struct ReceivedPacket {
  DataHeader header;
  std::size_t offset = 0;  // into ParsedFrame::section
  bool checksum_ok = false;
};

struct ParsedFrame {
  Header header;
  bool announcements_ok = false;
  std::vector<PacketKey> acks;
  std::vector<ReceivingStatus> statuses;
  std::vector<ReceivedPacket> data;
  std::vector<std::uint8_t> section;  // deinterleaved data section, possibly corrupted

  std::span<const std::uint8_t> payload(const ReceivedPacket& p) const {
    return std::span(section).subspan(p.offset, p.header.payload_len());
  }
};

/// Header, announcements and de-interleaved data of a received frame. Without
/// a valid header returns nullopt. Announcements that fail RS or crc16 leave
/// announcements_ok false and no data packets (their headers were lost).
std::optional<ParsedFrame> parse(std::span<const std::uint8_t> bytes);

/// Strict inverse of serialize: every section and packet checksum must hold.
std::optional<Frame> deserialize(std::span<const std::uint8_t> bytes);

}  // namespace crelay::frame
