#include "crelay/scenario_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace crelay::io {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) { throw ScenarioError(where + ": " + what); }

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where, "must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) fail(where + "." + k, "unknown key");
}

double number(const json& obj, const std::string& where, const char* key, double lo, double hi, double dflt,
              bool required = false) {
  if (!obj.contains(key)) {
    if (required) fail(where + "." + key, "missing");
    return dflt;
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) fail(where + "." + key, "must be a number");
  const double x = v.get<double>();
  if (!(x >= lo && x <= hi)) {
    std::ostringstream o;
    o << "must be in [" << lo << "," << hi << "]";
    fail(where + "." + key, o.str());
  }
  return x;
}

int integer(const json& obj, const std::string& where, const char* key, long lo, long hi, long dflt,
            bool required = false) {
  if (obj.contains(key) && !obj.at(key).is_number_integer()) fail(where + "." + key, "must be an integer");
  return static_cast<int>(number(obj, where, key, static_cast<double>(lo), static_cast<double>(hi),
                                 static_cast<double>(dflt), required));
}

bool boolean(const json& obj, const std::string& where, const char* key, bool dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_boolean()) fail(where + "." + key, "must be true or false");
  return obj.at(key).get<bool>();
}

int node_ref(const sim::Scenario& sc, const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) fail(where + "." + key, "missing");
  const auto& v = obj.at(key);
  int idx = -1;
  if (v.is_string())
    idx = node_index(sc, v.get<std::string>());
  else if (v.is_number_integer())
    idx = v.get<int>();
  if (idx < 0 || idx >= sc.num_nodes) fail(where + "." + key, "unknown node");
  return idx;
}

}  // namespace

int node_index(const sim::Scenario& sc, const std::string& name) {
  for (int i = 0; i < sc.num_nodes; ++i)
    if (sc.names[i] == name) return i;
  if (!name.empty() && name.find_first_not_of("0123456789") == std::string::npos && name.size() < 9) {
    const int i = std::stoi(name);
    if (i < sc.num_nodes) return i;
  }
  return -1;
}

double mean_error_ratio(const sim::LinkModel& l) {
  if (!l.errors) return 0.0;
  return (1.0 - l.clean_fraction) * sim::truncated_pareto_mean(l.alpha);
}

routing::LinkTable declared_links(const sim::Scenario& sc) {
  routing::LinkTable t(sc.num_nodes);
  for (int a = 0; a < sc.num_nodes; ++a)
    for (int b = 0; b < sc.num_nodes; ++b)
      if (a != b) t.at(a, b) = {sc.links[a][b].erasure, std::min(0.499, mean_error_ratio(sc.links[a][b]))};
  return t;
}

sim::Scenario parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("syntax: ") + e.what());
  }
  only_keys(doc, "scenario", {"nodes", "links", "flows", "sim", "protocol"});

  if (!doc.contains("nodes")) fail("nodes", "missing");
  const auto& nodes = doc.at("nodes");
  sim::Scenario sc;
  if (nodes.is_number_integer()) {
    const int n = nodes.get<int>();
    if (n < 2 || n > 1000) fail("nodes", "must be between 2 and 1000");
    sc = sim::Scenario::empty(n);
  } else if (nodes.is_array()) {
    if (nodes.size() < 2 || nodes.size() > 1000) fail("nodes", "must list between 2 and 1000 nodes");
    sc = sim::Scenario::empty(static_cast<int>(nodes.size()));
    std::set<std::string> seen;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i].is_string() || nodes[i].get<std::string>().empty())
        fail("nodes[" + std::to_string(i) + "]", "must be a non-empty string");
      sc.names[i] = nodes[i].get<std::string>();
      if (!seen.insert(sc.names[i]).second) fail("nodes[" + std::to_string(i) + "]", "duplicate name");
    }
  } else {
    fail("nodes", "must be a count or a list of names");
  }

  if (doc.contains("links")) {
    const auto& links = doc.at("links");
    if (!links.is_array()) fail("links", "must be a list");
    for (std::size_t i = 0; i < links.size(); ++i) {
      const std::string where = "links[" + std::to_string(i) + "]";
      const auto& l = links[i];
      only_keys(l, where, {"from", "to", "erasure", "alpha", "error_ratio", "clean_fraction", "symmetric"});
      const int a = node_ref(sc, l, where, "from"), b = node_ref(sc, l, where, "to");
      if (a == b) fail(where + ".to", "self link");
      sim::LinkModel m;
      m.erasure = number(l, where, "erasure", 0, 1, 0, true);
      if (l.contains("alpha") && l.contains("error_ratio")) fail(where, "give alpha or error_ratio, not both");
      const bool has_p = l.contains("error_ratio");
      m.clean_fraction = number(l, where, "clean_fraction", 0, 1, has_p ? 0.5 : 0.0);
      if (l.contains("alpha")) {
        m.errors = true;
        m.alpha = number(l, where, "alpha", 0.01, 50, 1);
      } else if (has_p) {
        const double p = number(l, where, "error_ratio", 0, 0.1, 0);
        if (p > 0) {
          if (m.clean_fraction >= 1) fail(where + ".clean_fraction", "must be below 1 when error_ratio > 0");
          m.errors = true;
          try {
            m.alpha = sim::alpha_for_mean(p / (1.0 - m.clean_fraction));
          } catch (const std::invalid_argument&) {
            fail(where + ".error_ratio", "not reachable with this clean_fraction");
          }
        }
      }
      sc.set_link(a, b, m, boolean(l, where, "symmetric", true));
    }
  }

  if (doc.contains("flows")) {
    const auto& flows = doc.at("flows");
    if (!flows.is_array()) fail("flows", "must be a list");
    for (std::size_t i = 0; i < flows.size(); ++i) {
      const std::string where = "flows[" + std::to_string(i) + "]";
      const auto& f = flows[i];
      only_keys(f, where, {"src", "dst", "pkt_bytes", "interval_slots", "start_slot", "duration_slots"});
      sim::FlowSpec fs;
      fs.src = node_ref(sc, f, where, "src");
      fs.dst = node_ref(sc, f, where, "dst");
      if (fs.src == fs.dst) fail(where + ".dst", "equals src");
      fs.pkt_bytes = integer(f, where, "pkt_bytes", 1, 4800, 1500);
      fs.interval_slots = integer(f, where, "interval_slots", 1, 1 << 30, 1);
      fs.start_slot = integer(f, where, "start_slot", 0, 1 << 30, 0);
      fs.duration_slots = integer(f, where, "duration_slots", -1, 1 << 30, -1);
      sc.flows.push_back(fs);
    }
  }

  if (doc.contains("sim")) {
    const auto& s = doc.at("sim");
    only_keys(s, "sim", {"seed", "mtu", "slots_per_second", "bytes_per_slot", "hellos_per_node", "hello_slots", "hello_bytes",
                         "data_slots", "drain_slots", "burst", "burst_mean"});
    if (s.contains("seed")) {
      if (!s.at("seed").is_number_unsigned()) fail("sim.seed", "must be a non-negative integer");
      sc.sim.seed = s.at("seed").get<std::uint64_t>();
    }
    sc.sim.mtu = integer(s, "sim", "mtu", 600, 65535, sc.sim.mtu);
    sc.sim.slots_per_second = integer(s, "sim", "slots_per_second", 1, 1000000, sc.sim.slots_per_second);
    sc.sim.bytes_per_slot = integer(s, "sim", "bytes_per_slot", 1, 1000000, sc.sim.bytes_per_slot);
    sc.sim.hellos_per_node = integer(s, "sim", "hellos_per_node", 0, 65535, sc.sim.hellos_per_node);
    sc.sim.hello_bytes = integer(s, "sim", "hello_bytes", 1, 4800, sc.sim.hello_bytes);
    sc.sim.data_slots = integer(s, "sim", "data_slots", 0, 100000000, sc.sim.data_slots);
    sc.sim.drain_slots = integer(s, "sim", "drain_slots", 0, 100000000, sc.sim.drain_slots);
    sc.sim.burst = boolean(s, "sim", "burst", sc.sim.burst);
    sc.sim.burst_mean = number(s, "sim", "burst_mean", 1, 1e6, sc.sim.burst_mean);
    if (s.contains("hello_slots")) {
      // Hello phase length in slots; every node gets an equal share.
      if (s.contains("hellos_per_node")) fail("sim.hello_slots", "give hello_slots or hellos_per_node, not both");
      const int slots = integer(s, "sim", "hello_slots", 0, 100000000, 0);
      const int per_frame = (sc.sim.hello_bytes + sc.sim.bytes_per_slot - 1) / sc.sim.bytes_per_slot;
      sc.sim.hellos_per_node = slots / (per_frame * sc.num_nodes);
    }
  }

  if (doc.contains("protocol")) {
    const auto& p = doc.at("protocol");
    only_keys(p, "protocol", {"w", "preemptive", "overhearing_check", "s1_timeout", "tombstone_slots",
                              "status_timeout", "queue_limit", "decode_slack", "max_attempts", "srcr_ack_timeout",
                              "srcr_max_attempts"});
    auto& c = sc.crelay;
    c.w = integer(p, "protocol", "w", 1, 64, c.w);
    c.preemptive = boolean(p, "protocol", "preemptive", c.preemptive);
    if (p.contains("overhearing_check")) {
      const auto& v = p.at("overhearing_check");
      if (v == "consistent")
        c.check = routing::OverhearingCheck::Consistent;
      else if (v == "verbatim")
        c.check = routing::OverhearingCheck::Verbatim;
      else
        fail("protocol.overhearing_check", "must be \"consistent\" or \"verbatim\"");
    }
    c.s1_timeout = integer(p, "protocol", "s1_timeout", 1, 1000000, c.s1_timeout);
    c.tombstone_slots = integer(p, "protocol", "tombstone_slots", 0, 1000000, c.tombstone_slots);
    c.status_timeout = integer(p, "protocol", "status_timeout", 0, 1000000, c.status_timeout);
    c.queue_limit = integer(p, "protocol", "queue_limit", 1, 100000, c.queue_limit);
    c.decode_slack = integer(p, "protocol", "decode_slack", 0, 105, c.decode_slack);
    c.max_attempts = integer(p, "protocol", "max_attempts", 1, 100000, c.max_attempts);
    sc.srcr.queue_limit = c.queue_limit;
    sc.srcr.ack_timeout = integer(p, "protocol", "srcr_ack_timeout", 1, 1000000, sc.srcr.ack_timeout);
    sc.srcr.max_attempts = integer(p, "protocol", "srcr_max_attempts", 1, 100000, sc.srcr.max_attempts);
  }

  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
  return sc;
}

sim::Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_json(const sim::Scenario& sc) {
  json doc;
  doc["nodes"] = sc.names;
  doc["links"] = json::array();
  for (int a = 0; a < sc.num_nodes; ++a)
    for (int b = 0; b < sc.num_nodes; ++b) {
      const auto& l = sc.links[a][b];
      if (a == b || l.erasure >= 1.0) continue;
      json j{{"from", sc.names[a]}, {"to", sc.names[b]}, {"erasure", l.erasure}, {"symmetric", false}};
      if (l.errors) {
        j["alpha"] = l.alpha;
        j["clean_fraction"] = l.clean_fraction;
      }
      doc["links"].push_back(j);
    }
  doc["flows"] = json::array();
  for (const auto& f : sc.flows)
    doc["flows"].push_back({{"src", sc.names[f.src]},
                            {"dst", sc.names[f.dst]},
                            {"pkt_bytes", f.pkt_bytes},
                            {"interval_slots", f.interval_slots},
                            {"start_slot", f.start_slot},
                            {"duration_slots", f.duration_slots}});
  const auto& s = sc.sim;
  doc["sim"] = {{"seed", s.seed},
                {"mtu", s.mtu},
                {"slots_per_second", s.slots_per_second},
                {"bytes_per_slot", s.bytes_per_slot},
                {"hellos_per_node", s.hellos_per_node},
                {"hello_bytes", s.hello_bytes},
                {"data_slots", s.data_slots},
                {"drain_slots", s.drain_slots},
                {"burst", s.burst},
                {"burst_mean", s.burst_mean}};
  const auto& c = sc.crelay;
  doc["protocol"] = {{"w", c.w},
                     {"preemptive", c.preemptive},
                     {"overhearing_check", c.check == routing::OverhearingCheck::Verbatim ? "verbatim" : "consistent"},
                     {"s1_timeout", c.s1_timeout},
                     {"tombstone_slots", c.tombstone_slots},
                     {"status_timeout", c.status_timeout},
                     {"queue_limit", c.queue_limit},
                     {"decode_slack", c.decode_slack},
                     {"max_attempts", c.max_attempts},
                     {"srcr_ack_timeout", sc.srcr.ack_timeout},
                     {"srcr_max_attempts", sc.srcr.max_attempts}};
  return doc.dump(2) + "\n";
}

std::string snapshot_json(const sim::Scenario& sc, const routing::LinkTable& measured) {
  auto doc = json::parse(scenario_json(sc));
  const double floor_mean = 1.1 * sim::truncated_pareto_mean(50.0);
  doc["links"] = json::array();
  for (int a = 0; a < sc.num_nodes; ++a)
    for (int b = 0; b < sc.num_nodes; ++b) {
      const auto& l = measured.at(a, b);
      if (a == b || l.erasure >= 1.0) continue;
      json j{{"from", sc.names[a]}, {"to", sc.names[b]}, {"erasure", l.erasure}, {"symmetric", false}};
      const double p = std::min(l.error, 0.1);
      if (p > 0) {
        // Low ratios are reached by making some frames clean.
        j["error_ratio"] = p;
        j["clean_fraction"] = p >= floor_mean ? 0.0 : 1.0 - p / floor_mean;
      }
      doc["links"].push_back(j);
    }
  return doc.dump(2) + "\n";
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", std::isfinite(v) ? v : 0.0);
  return buf;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const sim::Scenario& sc, const std::vector<sim::Metrics>& runs) {
  out << kMetricsHeader << "\n";
  for (const auto& m : runs)
    for (const auto& f : m.flows) {
      std::string path;
      for (std::size_t i = 0; i < f.path.size(); ++i) path += (i ? "-" : "") + sc.names[f.path[i]];
      const double partial =
          m.data_receptions > 0 ? static_cast<double>(m.partial_receptions) / m.data_receptions : 0.0;
      out << sim::to_string(m.protocol) << ',' << f.flow << ',' << sc.names[f.src] << ',' << sc.names[f.dst] << ','
          << path << ',' << (f.path.empty() ? 0 : f.path.size() - 1) << ',' << f.offered << ',' << f.injected << ','
          << f.delivered << ',' << fmt(f.throughput_pps) << ',' << fmt(f.mean_delay_slots) << ',' << m.frames_tx
          << ',' << m.bytes_tx << ',' << fmt(m.bytes_per_delivered_byte()) << ',' << fmt(partial) << "\n";
    }
}

void write_amps_csv(std::ostream& out, const std::vector<sim::Metrics>& runs) {
  out << kAmpsHeader << "\n";
  for (const auto& m : runs) {
    if (m.amps.empty()) continue;
    std::map<int, long> hist;
    for (const auto& r : m.amps) ++hist[r.estimate - r.truth];
    for (const auto& [d, c] : hist)
      out << sim::to_string(m.protocol) << ',' << d << ',' << c << ','
          << fmt(static_cast<double>(c) / static_cast<double>(m.amps.size())) << "\n";
  }
}

AmpsSummary summarize_amps(const std::vector<sim::AmpsRecord>& recs) {
  AmpsSummary s;
  s.segments = static_cast<long>(recs.size());
  if (recs.empty()) return s;
  long within = 0, under = 0, over = 0, over3 = 0;
  for (const auto& r : recs) {
    const int d = r.estimate - r.truth;
    within += std::abs(d) <= 3;
    under += d < 0;
    if (d > 0) ++over, over3 += d <= 3;
  }
  s.within3 = static_cast<double>(within) / s.segments;
  s.under = static_cast<double>(under) / s.segments;
  s.over_within3 = over > 0 ? static_cast<double>(over3) / over : 1.0;
  return s;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

}  // namespace crelay::io
