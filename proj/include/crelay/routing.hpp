#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace crelay::routing {

using NodeId = int;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinkState {
  double erasure = 1.0;  // fraction of frames the receiver never sees
  double error = 0.0;    // fraction of bad bytes in a received frame
};

double receiving_ratio(const LinkState& ls);

/// Directed link states among n nodes; absent links are full erasures.
class LinkTable {
 public:
  LinkTable() = default;
  explicit LinkTable(int n) : n_(n), links_(static_cast<std::size_t>(n) * n) {}

  int size() const { return n_; }
  const LinkState& at(NodeId from, NodeId to) const { return links_[static_cast<std::size_t>(from) * n_ + to]; }
  LinkState& at(NodeId from, NodeId to) { return links_[static_cast<std::size_t>(from) * n_ + to]; }
  void set_symmetric(NodeId a, NodeId b, LinkState ls) { at(a, b) = at(b, a) = ls; }

  /// r_{i,j} matrix, zero on the diagonal.
  std::vector<std::vector<double>> ratios() const;

  friend bool operator==(const LinkTable&, const LinkTable&) = default;

 private:
  int n_ = 0;
  std::vector<LinkState> links_;
};

// The verbatim validity test multiplies by r_{j,i} while the overheard update
// does not, so O can exceed 1 and later loads go negative. Consistent tests the
// quantity that is actually added.
enum class OverhearingCheck { Verbatim, Consistent };

struct PathCandidate {
  std::vector<NodeId> nodes;
  double metric = kInf;
  std::vector<double> load;       // L per node; last entry is the destination's 0
  std::vector<double> overheard;  // O per node

  bool valid() const { return !nodes.empty() && metric < kInf; }
};

using RatioMatrix = std::vector<std::vector<double>>;

/// Expected bytes sent per delivered byte along `path`, or nullopt for INVALID.
std::optional<PathCandidate> path_metric(const std::vector<NodeId>& path, const RatioMatrix& r,
                                         OverhearingCheck check = OverhearingCheck::Consistent);

/// Greedy w-candidate search; entry j is the best path from source to j.
/// Unreachable nodes carry an empty path and infinite metric.
std::vector<PathCandidate> greedy_route(NodeId source, const RatioMatrix& r, int w = 4,
                                        OverhearingCheck check = OverhearingCheck::Consistent);

struct EtxPath {
  std::vector<NodeId> nodes;
  double etx = kInf;
};

/// ETX link cost 1/((1-e_ij)(1-e_ji)); errors are ignored.
double etx_link(const LinkTable& links, NodeId a, NodeId b);

/// Dijkstra on ETX; ties go to the smaller predecessor id.
std::vector<EtxPath> etx_route(NodeId source, const LinkTable& links);

/// Exhaustive search over simple paths. Throws for graphs above 9 nodes.
PathCandidate brute_force_best_path(NodeId source, NodeId dest, const RatioMatrix& r,
                                    OverhearingCheck check = OverhearingCheck::Consistent);

}  // namespace crelay::routing
