#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crelay/amps.hpp"

namespace crelay::amps {

inline constexpr std::array<int, 4> kRepFrameSizes{375, 750, 1500, 2200};
inline constexpr std::array<int, 5> kRepSegmentCounts{1, 2, 5, 10, 15};

/// One precomputed (alpha, B, numB, sample type) slice.
struct AmpsTable {
  int alpha_index = 0;
  int B = 0;
  int numB = 0;
  int K = 0;
  int S = 0;
  std::vector<std::uint16_t> map_c;  // indexed by m in [0, S]
  std::vector<std::uint8_t> max_e;   // indexed by c in [0, map_c[S]]
};

struct PacketShape {
  int bytes = 0;
  int segments = 1;
};

struct Estimate {
  int c_hat = 0;                 // frame-level error bytes
  int e_hat = kMinSegmentErrors;  // worst per-segment bound over the packets
  std::vector<int> per_packet;    // apportioned c_hat
  std::vector<int> per_packet_e;  // per-segment bound for each packet
};

/// Nearest representative, ties toward the larger value.
int nearest_frame_size(int B);
int nearest_segment_count(int numB);

/// Per-segment bound as stored in the tables: bound_e capped by the segment
/// length B/numB (never below the floor of 3).
int table_max_e(int c, int B, int numB);

class AmpsTables {
 public:
  /// Full grid: 100 alphas x 4 frame sizes x 5 segment counts x 3 sample types.
  static AmpsTables build();

  std::vector<std::uint8_t> serialize() const;
  static AmpsTables deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static AmpsTables load(const std::string& path);

  /// Loaded from $CRELAY_TABLES when set, otherwise built in memory once.
  static const AmpsTables& shared();

  const std::vector<AmpsTable>& tables() const { return tables_; }
  const AmpsTable& nearest(int alpha_index, int B, int numB, int type) const;

  /// c estimate for one sample type, rescaled from the representative frame size.
  int lookup_c(int m, int alpha_index, int B, int type) const;
  /// Per-segment bound for c errors over numB segments in B bytes.
  int lookup_e(int c, int alpha_index, int B, int numB) const;

  /// Full frame estimate: per-type MAP, max combine, apportion, per-packet bound.
  Estimate lookup(const std::array<int, kNumTypes>& m, int alpha_index, int B,
                  std::span<const PacketShape> packets) const;

 private:
  static std::size_t slot(int alpha_index, int b_index, int n_index, int type);
  std::vector<AmpsTable> tables_;
};

/// The same estimate without tables; reference for lookup.
Estimate estimate_direct(const std::array<int, kNumTypes>& m, int alpha_index, int B,
                         std::span<const PacketShape> packets);

}  // namespace crelay::amps
