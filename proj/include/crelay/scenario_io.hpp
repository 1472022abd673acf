#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crelay/sim.hpp"

namespace crelay::io {

/// Schema violation; what() names the offending field.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

sim::Scenario parse_scenario(const std::string& json_text);
sim::Scenario load_scenario(const std::string& path);

/// Scenario as JSON text; parse_scenario(scenario_json(s)) reproduces s up to
/// the alpha of links given by error ratio.
std::string scenario_json(const sim::Scenario& sc);

/// Scenario with its links replaced by a measured link-state table.
std::string snapshot_json(const sim::Scenario& sc, const routing::LinkTable& measured);

/// Mean byte error ratio over received frames implied by a link model.
double mean_error_ratio(const sim::LinkModel& l);
/// Routing view of the scenario's declared links.
routing::LinkTable declared_links(const sim::Scenario& sc);

/// Node index from a name or a decimal index; -1 when unknown.
int node_index(const sim::Scenario& sc, const std::string& name);

// metrics.csv: one row per flow per scheme.
inline constexpr const char* kMetricsHeader =
    "scheme,flow,src,dst,path,hops,offered,injected,delivered,throughput_pps,mean_delay_slots,"
    "frames_tx,bytes_tx,bytes_per_delivered_byte,partial_ratio";
void write_metrics_csv(std::ostream& out, const sim::Scenario& sc, const std::vector<sim::Metrics>& runs);

// amps_accuracy.csv: histogram of estimate - truth per codeword segment.
inline constexpr const char* kAmpsHeader = "scheme,diff,count,fraction";
void write_amps_csv(std::ostream& out, const std::vector<sim::Metrics>& runs);

struct AmpsSummary {
  long segments = 0;
  double within3 = 0;         // |estimate - truth| <= 3
  double under = 0;           // estimate < truth
  double over_within3 = 0;    // among estimate > truth: difference <= 3
};
AmpsSummary summarize_amps(const std::vector<sim::AmpsRecord>& recs);

/// Writes to path.tmp, then renames over path.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace crelay::io
