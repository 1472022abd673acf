#include "crelay/amps_table.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace crelay::amps {

namespace {

constexpr char kMagic[8] = {'C', 'R', 'L', 'Y', 'A', 'M', 'P', 'S'};
constexpr std::uint32_t kVersion = 1;

template <std::size_t N>
int nearest_of(const std::array<int, N>& reps, int v) {
  int best = reps[0];
  for (int r : reps) {
    const int d = std::abs(r - v), bd = std::abs(best - v);
    if (d < bd || (d == bd && r > best)) best = r;
  }
  return best;
}

template <std::size_t N>
int index_of(const std::array<int, N>& reps, int v) {
  return static_cast<int>(std::find(reps.begin(), reps.end(), v) - reps.begin());
}

class Writer {
 public:
  void u8(unsigned v) { out.push_back(static_cast<std::uint8_t>(v)); }
  void u16(unsigned v) {
    u8(v & 0xFF);
    u8((v >> 8) & 0xFF);
  }
  void u32(std::uint32_t v) {
    u16(v & 0xFFFF);
    u16(v >> 16);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}
  unsigned u8() {
    if (pos >= bytes.size()) throw std::runtime_error("AMPS table file truncated");
    return bytes[pos++];
  }
  unsigned u16() {
    const unsigned lo = u8();
    return lo | (u8() << 8);
  }
  std::uint32_t u32() {
    const std::uint32_t lo = u16();
    return lo | (static_cast<std::uint32_t>(u16()) << 16);
  }
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

int rescale(int c_rep, int B_rep, int B) {
  if (B == B_rep) return c_rep;
  const long scaled = (static_cast<long>(c_rep) * B + B_rep - 1) / B_rep;
  return static_cast<int>(std::min<long>(scaled, B));
}

Estimate finish(int c_hat, int B, std::span<const PacketShape> packets, auto&& per_segment_bound) {
  Estimate est;
  est.c_hat = c_hat;
  std::vector<int> sizes;
  for (const auto& p : packets) sizes.push_back(p.bytes);
  est.per_packet = apportion(c_hat, sizes);
  est.e_hat = kMinSegmentErrors;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    const int e = per_segment_bound(est.per_packet[i], packets[i]);
    est.per_packet_e.push_back(e);
    est.e_hat = std::max(est.e_hat, e);
  }
  (void)B;
  return est;
}

}  // namespace

int nearest_frame_size(int B) { return nearest_of(kRepFrameSizes, B); }
int nearest_segment_count(int numB) { return nearest_of(kRepSegmentCounts, numB); }

int table_max_e(int c, int B, int numB) {
  const int seg_len = std::max(kMinSegmentErrors, B / numB);
  return std::min(bound_e(c, numB), seg_len);
}

std::size_t AmpsTables::slot(int alpha_index, int b_index, int n_index, int type) {
  return ((static_cast<std::size_t>(alpha_index) * kRepFrameSizes.size() + b_index) * kRepSegmentCounts.size() +
          n_index) *
             kNumTypes +
         type;
}

AmpsTables AmpsTables::build() {
  AmpsTables t;
  t.tables_.resize(static_cast<std::size_t>(kAlphaCount) * kRepFrameSizes.size() * kRepSegmentCounts.size() *
                   kNumTypes);
  int c_top = 0;
  for (int a = 0; a < kAlphaCount; ++a) {
    const PriorModel prior{alpha_at(a)};
    for (std::size_t bi = 0; bi < kRepFrameSizes.size(); ++bi) {
      const int B = kRepFrameSizes[bi];
      for (int type = 0; type < kNumTypes; ++type) {
        const auto& spec = kSampleSpecs[type];
        const auto curve = map_curve(prior, B, spec.K, spec.count);
        c_top = std::max(c_top, curve.back());
        for (std::size_t ni = 0; ni < kRepSegmentCounts.size(); ++ni) {
          auto& tab = t.tables_[slot(a, static_cast<int>(bi), static_cast<int>(ni), type)];
          tab.alpha_index = a;
          tab.B = B;
          tab.numB = kRepSegmentCounts[ni];
          tab.K = spec.K;
          tab.S = spec.count;
          tab.map_c.assign(curve.begin(), curve.end());
        }
      }
    }
  }
  const auto bounds = bound_curves(c_top, kRepSegmentCounts);
  for (auto& tab : t.tables_) {
    const auto& curve = bounds[index_of(kRepSegmentCounts, tab.numB)];
    const int seg_len = std::max(kMinSegmentErrors, tab.B / tab.numB);
    tab.max_e.resize(tab.map_c.back() + 1);
    for (std::size_t c = 0; c < tab.max_e.size(); ++c)
      tab.max_e[c] = static_cast<std::uint8_t>(std::min(curve[c], seg_len));
  }
  return t;
}

std::vector<std::uint8_t> AmpsTables::serialize() const {
  Writer w;
  for (char ch : kMagic) w.u8(static_cast<unsigned char>(ch));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(tables_.size()));
  for (const auto& tab : tables_) {
    w.u16(static_cast<unsigned>(std::lround(alpha_at(tab.alpha_index) * 100)));
    w.u16(tab.B);
    w.u8(tab.numB);
    w.u8(tab.K);
    w.u8(tab.S);
    w.u16(static_cast<unsigned>(tab.map_c.size()));
    for (auto v : tab.map_c) w.u16(v);
    w.u16(static_cast<unsigned>(tab.max_e.size()));
    for (auto v : tab.max_e) w.u8(v);
  }
  return std::move(w.out);
}

AmpsTables AmpsTables::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char ch : kMagic)
    if (r.u8() != static_cast<unsigned char>(ch)) throw std::runtime_error("not an AMPS table file (bad magic)");
  if (r.u32() != kVersion) throw std::runtime_error("unsupported AMPS table file version");
  const std::uint32_t count = r.u32();
  const std::size_t expected =
      static_cast<std::size_t>(kAlphaCount) * kRepFrameSizes.size() * kRepSegmentCounts.size() * kNumTypes;
  if (count != expected) throw std::runtime_error("AMPS table file has an unexpected table count");
  AmpsTables t;
  t.tables_.resize(count);
  for (auto& tab : t.tables_) {
    tab.alpha_index = alpha_index(r.u16() / 100.0);
    tab.B = static_cast<int>(r.u16());
    tab.numB = static_cast<int>(r.u8());
    tab.K = static_cast<int>(r.u8());
    tab.S = static_cast<int>(r.u8());
    tab.map_c.resize(r.u16());
    for (auto& v : tab.map_c) v = static_cast<std::uint16_t>(r.u16());
    tab.max_e.resize(r.u16());
    for (auto& v : tab.max_e) v = static_cast<std::uint8_t>(r.u8());
    if (tab.map_c.size() != static_cast<std::size_t>(tab.S) + 1 || tab.max_e.size() != tab.map_c.back() + 1u)
      throw std::runtime_error("AMPS table file is inconsistent");
  }
  if (r.pos != bytes.size()) throw std::runtime_error("AMPS table file has trailing bytes");
  // Tables are stored in slot order; verify rather than trust it.
  for (int a = 0; a < kAlphaCount; ++a)
    for (std::size_t bi = 0; bi < kRepFrameSizes.size(); ++bi)
      for (std::size_t ni = 0; ni < kRepSegmentCounts.size(); ++ni)
        for (int type = 0; type < kNumTypes; ++type) {
          const auto& tab = t.tables_[slot(a, static_cast<int>(bi), static_cast<int>(ni), type)];
          if (tab.alpha_index != a || tab.B != kRepFrameSizes[bi] || tab.numB != kRepSegmentCounts[ni] ||
              tab.K != kSampleSpecs[type].K)
            throw std::runtime_error("AMPS table file is out of order");
        }
  return t;
}

void AmpsTables::save(const std::string& path) const {
  const auto bytes = serialize();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

AmpsTables AmpsTables::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open AMPS tables at " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

const AmpsTables& AmpsTables::shared() {
  static const AmpsTables tables = [] {
    if (const char* env = std::getenv("CRELAY_TABLES"); env && *env) return load(env);
    return build();
  }();
  return tables;
}

const AmpsTable& AmpsTables::nearest(int alpha_idx, int B, int numB, int type) const {
  if (alpha_idx < 0 || alpha_idx >= kAlphaCount || type < 0 || type >= kNumTypes)
    throw std::invalid_argument("AmpsTables::nearest: alpha index or sample type out of range");
  const int bi = index_of(kRepFrameSizes, nearest_frame_size(B));
  const int ni = index_of(kRepSegmentCounts, nearest_segment_count(numB));
  return tables_.at(slot(alpha_idx, bi, ni, type));
}

int AmpsTables::lookup_c(int m, int alpha_idx, int B, int type) const {
  const auto& tab = nearest(alpha_idx, B, 1, type);
  if (m < 0 || m > tab.S) throw std::invalid_argument("AmpsTables::lookup_c: mismatch count out of range");
  return rescale(tab.map_c[m], tab.B, B);
}

int AmpsTables::lookup_e(int c, int alpha_idx, int B, int numB) const {
  const auto& tab = nearest(alpha_idx, B, numB, 0);
  // Beyond the stored slice (or off-grid parameters) fall back to the direct bound.
  if (tab.B == B && tab.numB == numB && c >= 0 && c < static_cast<int>(tab.max_e.size())) return tab.max_e[c];
  return table_max_e(c, B, numB);
}

Estimate AmpsTables::lookup(const std::array<int, kNumTypes>& m, int alpha_idx, int B,
                            std::span<const PacketShape> packets) const {
  std::array<int, kNumTypes> c{};
  for (int type = 0; type < kNumTypes; ++type) c[type] = lookup_c(m[type], alpha_idx, B, type);
  return finish(combine_multi_resolution(c), B, packets,
                [&](int share, const PacketShape& p) { return lookup_e(share, alpha_idx, p.bytes, p.segments); });
}

Estimate estimate_direct(const std::array<int, kNumTypes>& m, int alpha_idx, int B,
                         std::span<const PacketShape> packets) {
  const PriorModel prior{alpha_at(alpha_idx)};
  std::array<int, kNumTypes> c{};
  for (int type = 0; type < kNumTypes; ++type)
    c[type] = map_estimate_c(m[type], prior, B, kSampleSpecs[type].K, kSampleSpecs[type].count);
  return finish(combine_multi_resolution(c), B, packets,
                [&](int share, const PacketShape& p) { return table_max_e(share, p.bytes, p.segments); });
}

}  // namespace crelay::amps
