#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crelay/amps.hpp"
#include "crelay/rng.hpp"
#include "crelay/routing.hpp"

namespace crelay::sim {

using routing::NodeId;

/// One directed link. A frame that is not erased is clean with probability
/// clean_fraction; otherwise its byte error ratio is drawn from the
/// truncated Pareto(alpha, gamma, nu).
struct LinkModel {
  double erasure = 1.0;
  bool errors = false;
  double alpha = 1.0;
  double clean_fraction = 0.0;
};

double truncated_pareto_mean(double alpha, double gamma = amps::kGamma, double nu = amps::kNu);

/// alpha whose truncated-Pareto mean equals `mean`; throws when no alpha in
/// [0.01, 50] reaches it.
double alpha_for_mean(double mean, double gamma = amps::kGamma, double nu = amps::kNu);

struct Reception {
  bool erased = true;
  std::vector<std::uint8_t> bytes;
  int corrupted = 0;
};

class Channel {
 public:
  Channel(int num_nodes, std::uint64_t seed, bool burst = false, double burst_mean = 8.0);

  int size() const { return n_; }
  LinkModel& link(NodeId from, NodeId to) { return links_[static_cast<std::size_t>(from) * n_ + to]; }
  const LinkModel& link(NodeId from, NodeId to) const { return links_[static_cast<std::size_t>(from) * n_ + to]; }

  /// Byte error ratio for one non-erased frame (0 for a clean frame).
  double draw_ratio(const LinkModel& l);

  /// What `to` hears of `frame` sent by `from`. Receivers are independent.
  Reception transmit(std::span<const std::uint8_t> frame, NodeId from, NodeId to);

 private:
  int n_;
  Rng rng_;
  bool burst_;
  double burst_mean_;
  std::vector<LinkModel> links_;
};

/// Uniform choice among backlogged nodes; nullopt-like -1 when none.
NodeId mac_pick(Rng& rng, std::span<const NodeId> backlogged);

}  // namespace crelay::sim
