#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "crelay/channel.hpp"
#include "crelay/protocol.hpp"
#include "crelay/srcr.hpp"

namespace crelay::sim {

struct FlowSpec {
  NodeId src = 0;
  NodeId dst = 0;
  int pkt_bytes = 1500;
  int interval_slots = 1;
  int start_slot = 0;
  int duration_slots = -1;  // -1: the whole data phase
};

struct SimParams {
  std::uint64_t seed = 1;
  int mtu = 2000;
  int slots_per_second = 100;
  int bytes_per_slot = 200;
  int hellos_per_node = 50;
  int hello_bytes = 1500;
  int data_slots = 1000;
  int drain_slots = 500;
  bool burst = false;
  double burst_mean = 8.0;
};

struct Scenario {
  int num_nodes = 0;
  std::vector<std::string> names;
  std::vector<std::vector<LinkModel>> links;  // [from][to]
  std::vector<FlowSpec> flows;
  SimParams sim;
  proto::Options crelay;
  srcr::Options srcr;

  /// n nodes named by index, every link erased.
  static Scenario empty(int n);
  void set_link(NodeId a, NodeId b, const LinkModel& m, bool symmetric = true);
  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

enum class Protocol { Crelay, Srcr };
const char* to_string(Protocol p);

struct FlowMetrics {
  int flow = 0;
  NodeId src = 0;
  NodeId dst = 0;
  std::vector<NodeId> path;
  long offered = 0;
  long injected = 0;
  long delivered = 0;
  double throughput_pps = 0;
  double mean_delay_slots = 0;
};

struct AmpsRecord {
  int estimate = 0;
  int truth = 0;
};

struct Metrics {
  Protocol protocol = Protocol::Crelay;
  std::vector<FlowMetrics> flows;
  long frames_tx = 0;
  long bytes_tx = 0;
  long delivered_bytes = 0;
  long data_receptions = 0;     // on-path receptions of a data packet
  long partial_receptions = 0;  // ... whose checksum failed
  std::vector<AmpsRecord> amps;
  std::vector<std::string> violations;
  routing::LinkTable measured;  // link state the nodes routed on

  double bytes_per_delivered_byte() const {
    return delivered_bytes > 0 ? static_cast<double>(bytes_tx) / delivered_bytes : 0.0;
  }
};

struct RunOptions {
  bool check_invariants = true;
  std::ostream* trace = nullptr;  // one line per frame
  bool trace_hex = false;         // append the wire bytes
};

/// Hello phase, link-state snapshot, then the data phase. A pure function of
/// (scenario, protocol).
Metrics run(const Scenario& sc, Protocol protocol, const RunOptions& opt = {});

/// Throughput gain of a over b: (mu_a - mu_b) / mu_b.
double throughput_gain(double mu_a, double mu_b);

}  // namespace crelay::sim
