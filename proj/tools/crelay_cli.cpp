// crelay: run scenarios, build AMPS tables, inspect routes, compare estimators.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crelay/amps.hpp"
#include "crelay/amps_eval.hpp"
#include "crelay/amps_table.hpp"
#include "crelay/routing.hpp"
#include "crelay/scenario_io.hpp"
#include "crelay/sim.hpp"

namespace fs = std::filesystem;
using namespace crelay;

namespace {

enum Exit { kOk = 0, kIo = 1, kSchema = 2, kViolation = 3 };

std::string join_path(const sim::Scenario& sc, const std::vector<int>& nodes) {
  std::string s;
  for (std::size_t i = 0; i < nodes.size(); ++i) s += (i ? " -> " : "") + sc.names[nodes[i]];
  return s;
}

std::string default_tables_path() {
  if (const char* env = std::getenv("CRELAY_TABLES"); env && *env) return env;
  return "amps_tables.bin";
}

struct RunArgs {
  std::string scenario;
  std::string protocol = "both";
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool trace = false;
  bool trace_hex = false;
  bool export_links = false;
};

int cmd_run(const RunArgs& a) {
  sim::Scenario sc;
  try {
    sc = io::load_scenario(a.scenario);
  } catch (const io::ScenarioError& e) {
    std::cerr << a.scenario << ": " << e.what() << "\n";
    return kSchema;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kIo;
  }
  if (a.seed) sc.sim.seed = *a.seed;

  std::vector<sim::Protocol> protocols;
  if (a.protocol == "crelay" || a.protocol == "both") protocols.push_back(sim::Protocol::Crelay);
  if (a.protocol == "srcr" || a.protocol == "both") protocols.push_back(sim::Protocol::Srcr);

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) {
    std::cerr << "cannot create " << a.out << ": " << ec.message() << "\n";
    return kIo;
  }

  std::vector<sim::Metrics> runs;
  int violations = 0;
  try {
    for (const auto p : protocols) {
      std::ostringstream trace;
      sim::RunOptions opt;
      if (a.trace || a.trace_hex) opt.trace = &trace;
      opt.trace_hex = a.trace_hex;
      runs.push_back(sim::run(sc, p, opt));
      const auto& m = runs.back();
      const std::string name = sim::to_string(p);
      if (opt.trace) io::write_file_atomic((fs::path(a.out) / ("trace_" + name + ".txt")).string(), trace.str());
      if (a.export_links)
        io::write_file_atomic((fs::path(a.out) / ("links_" + name + ".json")).string(),
                              io::snapshot_json(sc, m.measured));
      for (const auto& v : m.violations) std::cerr << name << ": invariant violated: " << v << "\n";
      violations += static_cast<int>(m.violations.size());
      for (const auto& f : m.flows)
        std::cout << name << " flow " << f.flow << " " << join_path(sc, f.path) << ": " << f.delivered << "/"
                  << f.offered << " delivered, " << std::fixed << std::setprecision(2) << f.throughput_pps
                  << " pkt/s\n";
    }
    std::ostringstream metrics, amps;
    io::write_metrics_csv(metrics, sc, runs);
    io::write_amps_csv(amps, runs);
    io::write_file_atomic((fs::path(a.out) / "metrics.csv").string(), metrics.str());
    io::write_file_atomic((fs::path(a.out) / "amps_accuracy.csv").string(), amps.str());
  } catch (const std::runtime_error& e) {
    std::cerr << e.what() << "\n";
    return kIo;
  }
  if (runs.size() == 2) {
    for (std::size_t i = 0; i < runs[0].flows.size(); ++i) {
      const double g = sim::throughput_gain(runs[0].flows[i].throughput_pps, runs[1].flows[i].throughput_pps);
      std::cout << "flow " << i << " gain over srcr: " << std::fixed << std::setprecision(3) << g << "\n";
    }
  }
  return violations ? kViolation : kOk;
}

int cmd_gentables(const std::string& out, bool spot_check, std::uint64_t seed) {
  const auto tables = amps::AmpsTables::build();
  const auto bytes = tables.serialize();
  try {
    io::write_file_atomic(out, std::string(bytes.begin(), bytes.end()));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kIo;
  }
  std::cout << "wrote " << out << ": " << bytes.size() << " bytes, " << tables.tables().size() << " tables\n";
  std::cout << "alpha: " << amps::kAlphaCount << " values " << amps::alpha_at(0) << ".."
            << amps::alpha_at(amps::kAlphaCount - 1) << "\nframe sizes:";
  for (int b : amps::kRepFrameSizes) std::cout << " " << b;
  std::cout << "\nsegment counts:";
  for (int n : amps::kRepSegmentCounts) std::cout << " " << n;
  std::cout << "\nsample types (K x count):";
  for (const auto& s : amps::kSampleSpecs) std::cout << " " << s.K << "x" << s.count;
  std::cout << "\n";
  if (!spot_check) return kOk;

  std::mt19937_64 rng(seed);
  int bad = 0;
  const auto& all = tables.tables();
  for (int i = 0; i < 100; ++i) {
    const auto& t = all[rng() % all.size()];
    const int m = static_cast<int>(rng() % (t.S + 1));
    const int c = static_cast<int>(rng() % t.max_e.size());
    const int want_c = amps::map_estimate_c(m, amps::PriorModel{amps::alpha_at(t.alpha_index)}, t.B, t.K, t.S);
    const int want_e = amps::table_max_e(c, t.B, t.numB);
    if (want_c != t.map_c[m] || want_e != t.max_e[c]) {
      ++bad;
      std::cerr << "mismatch alpha=" << amps::alpha_at(t.alpha_index) << " B=" << t.B << " numB=" << t.numB
                << " K=" << t.K << " m=" << m << " c=" << c << "\n";
    }
  }
  std::cout << "spot check: " << 100 - bad << "/100 entries match direct computation\n";
  return bad ? kViolation : kOk;
}

int cmd_route(const std::string& path, const std::string& src_name, const std::string& dst_name, int w) {
  sim::Scenario sc;
  try {
    sc = io::load_scenario(path);
  } catch (const io::ScenarioError& e) {
    std::cerr << path << ": " << e.what() << "\n";
    return kSchema;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kIo;
  }
  const int src = io::node_index(sc, src_name), dst = io::node_index(sc, dst_name);
  if (src < 0 || dst < 0) {
    std::cerr << "unknown node " << (src < 0 ? src_name : dst_name) << "\n";
    return kSchema;
  }
  const auto links = io::declared_links(sc);
  const auto r = links.ratios();
  const auto best = routing::greedy_route(src, r, w, sc.crelay.check)[dst];
  std::cout << std::fixed << std::setprecision(4);
  if (!best.valid()) {
    std::cout << "crelay: unreachable\n";
  } else {
    std::cout << "crelay: " << join_path(sc, best.nodes) << "  metric " << best.metric << "\n";
    for (std::size_t i = 0; i < best.nodes.size(); ++i)
      std::cout << "  " << sc.names[best.nodes[i]] << "  load " << best.load[i] << "  overheard " << best.overheard[i]
                << "\n";
  }
  const auto etx = routing::etx_route(src, links)[dst];
  if (etx.nodes.empty() || !std::isfinite(etx.etx)) {
    std::cout << "etx: unreachable\n";
  } else {
    std::cout << "etx: " << join_path(sc, etx.nodes) << "  etx " << etx.etx;
    if (const auto m = routing::path_metric(etx.nodes, r, sc.crelay.check))
      std::cout << "  metric " << m->metric;
    else
      std::cout << "  metric invalid";
    std::cout << "\n";
  }
  return kOk;
}

int cmd_estimate(double ratio, bool sweep, int trials, std::uint64_t seed, const std::string& tables_path,
                 const std::string& out) {
  amps::AmpsTables tables;
  try {
    tables = amps::AmpsTables::load(tables_path);
  } catch (const std::exception& e) {
    std::cerr << "cannot load AMPS tables from " << tables_path << " (" << e.what()
              << ")\nrun `crelay gentables --out " << tables_path << "` or set CRELAY_TABLES\n";
    return kSchema;
  }
  std::vector<double> ratios;
  if (sweep)
    for (int i = 1; i <= 20; ++i) ratios.push_back(i / 100.0);
  else
    ratios.push_back(ratio);

  std::ostringstream csv;
  csv << "ratio,trials,mae_amps,mae_naive,ci95_amps,ci95_naive\n";
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const auto e = amps::compare_with_naive(ratios[i], trials, seed + i, tables);
    const double k = 1.96 / std::sqrt(static_cast<double>(trials));
    csv << ratios[i] << ',' << trials << ',' << e.mae_amps << ',' << e.mae_naive << ',' << k * e.sd_amps << ','
        << k * e.sd_naive << "\n";
  }
  if (trials < 100) std::cerr << "note: " << trials << " trials per ratio, confidence bands are wide\n";
  if (out.empty()) {
    std::cout << csv.str();
    return kOk;
  }
  try {
    io::write_file_atomic(out, csv.str());
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kIo;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crelay partial-packet relay simulator"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "simulate a scenario and write metrics.csv and amps_accuracy.csv");
  run->add_option("scenario", ra.scenario, "scenario JSON")->required();
  run->add_option("--protocol", ra.protocol)->check(CLI::IsMember({"crelay", "srcr", "both"}));
  run->add_option("--seed", ra.seed, "overrides sim.seed");
  run->add_option("--out", ra.out, "output directory");
  run->add_flag("--trace", ra.trace, "write one line per frame");
  run->add_flag("--trace-hex", ra.trace_hex, "trace with wire bytes");
  run->add_flag("--export-links", ra.export_links, "write the measured link state as a scenario");

  std::string tables_out = default_tables_path();
  bool spot = false;
  std::uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("gentables", "build the AMPS lookup tables");
  gen->add_option("--out", tables_out);
  gen->add_flag("--spot-check", spot, "recompute 100 random entries directly");
  gen->add_option("--seed", gen_seed, "spot-check sampling seed");

  std::string route_path, src, dst;
  int w = 4;
  auto* route = app.add_subcommand("route", "print crelay and etx paths");
  route->add_option("scenario", route_path)->required();
  route->add_option("--src", src)->required();
  route->add_option("--dst", dst)->required();
  route->add_option("--w", w)->check(CLI::Range(1, 64));

  double ratio = 0.05;
  bool sweep = false;
  int trials = 10000;
  std::uint64_t est_seed = 1;
  std::string tables_in = default_tables_path(), est_out;
  auto* est = app.add_subcommand("estimate", "AMPS against the naive sampler");
  est->add_flag("--ratio-sweep", sweep, "ratios 0.01..0.20");
  est->add_option("--ratio", ratio)->check(CLI::Range(0.0, 1.0));
  est->add_option("--trials", trials)->check(CLI::Range(1, 100000000));
  est->add_option("--seed", est_seed);
  est->add_option("--tables", tables_in);
  est->add_option("--out", est_out, "CSV path, stdout when absent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kSchema;
  }

  try {
    if (*run) return cmd_run(ra);
    if (*gen) return cmd_gentables(tables_out, spot, gen_seed);
    if (*route) return cmd_route(route_path, src, dst, w);
    if (*est) return cmd_estimate(ratio, sweep, trials, est_seed, tables_in, est_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
