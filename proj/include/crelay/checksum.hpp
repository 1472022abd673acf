#pragma once

#include <cstdint>
#include <span>

namespace crelay {

// CRC-16/CCITT-FALSE over the header and announcement sections.
std::uint16_t crc16(std::span<const std::uint8_t> bytes);

// CRC-32 (IEEE 802.3) trailing each data packet in a frame.
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace crelay
