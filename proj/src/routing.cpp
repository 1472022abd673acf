#include "crelay/routing.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <stdexcept>

namespace crelay::routing {

double receiving_ratio(const LinkState& ls) { return (1.0 - ls.erasure) * (1.0 - 2.0 * ls.error); }

RatioMatrix LinkTable::ratios() const {
  RatioMatrix r(n_, std::vector<double>(n_, 0.0));
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      if (i != j) r[i][j] = std::clamp(receiving_ratio(at(i, j)), 0.0, 1.0);
  return r;
}

std::optional<PathCandidate> path_metric(const std::vector<NodeId>& path, const RatioMatrix& r,
                                         OverhearingCheck check) {
  if (path.size() < 2) throw std::invalid_argument("path_metric: path needs at least two nodes");
  const int n = static_cast<int>(path.size()) - 1;
  PathCandidate out;
  out.nodes = path;
  out.load.assign(n + 1, 0.0);
  out.overheard.assign(n + 1, 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const NodeId a = path[i], b = path[i + 1];
    const double both = r[a][b] * r[b][a];
    if (both <= 0) return std::nullopt;
    out.load[i] = (1.0 - out.overheard[i + 1]) / both;
    total += out.load[i];
    for (int j = i + 2; j <= n; ++j) {
      const NodeId c = path[j];
      const double test = check == OverhearingCheck::Verbatim ? r[a][c] * r[c][a] : r[a][c];
      if (out.overheard[j] + out.load[i] * test > 1.0) return std::nullopt;
      out.overheard[j] += out.load[i] * r[a][c];
    }
  }
  out.metric = total;
  return out;
}

std::vector<PathCandidate> greedy_route(NodeId source, const RatioMatrix& r, int w, OverhearingCheck check) {
  if (w < 1) throw std::invalid_argument("greedy_route: w must be at least 1");
  const int N = static_cast<int>(r.size());
  std::vector<std::vector<PathCandidate>> cand(N, std::vector<PathCandidate>(w));
  for (int j = 0; j < N; ++j) {
    if (j == source) continue;
    // Single-hop seeds use the plain two-way ratio.
    const double both = r[source][j] * r[j][source];
    if (both > 0) {
      if (auto p = path_metric({source, j}, r, check)) cand[j][0] = *p;
    }
  }
  auto best_of = [&](int j) -> const PathCandidate& {
    const PathCandidate* best = &cand[j][0];
    for (const auto& c : cand[j])
      if (c.metric < best->metric) best = &c;
    return *best;
  };

  std::vector<bool> in_s(N, false);
  in_s[source] = true;
  for (int round = 1; round < N; ++round) {
    int u = -1;
    for (int j = 0; j < N; ++j) {
      if (in_s[j]) continue;
      if (u < 0 || best_of(j).metric < best_of(u).metric) u = j;
    }
    if (u < 0 || best_of(u).metric == kInf) break;
    in_s[u] = true;
    for (int j = 0; j < N; ++j) {
      if (in_s[j]) continue;
      for (int k = 0; k < w; ++k) {
        const auto& base = cand[u][k];
        if (!base.valid()) continue;
        auto nodes = base.nodes;
        nodes.push_back(j);
        const auto p = path_metric(nodes, r, check);
        if (!p) continue;
        int t = 0;
        for (int q = 1; q < w; ++q)
          if (cand[j][q].metric > cand[j][t].metric) t = q;
        if (cand[j][t].metric > p->metric) cand[j][t] = *p;
      }
    }
  }

  std::vector<PathCandidate> out(N);
  for (int j = 0; j < N; ++j) {
    if (j == source) {
      out[j].nodes = {source};
      out[j].metric = 0.0;
      out[j].load = {0.0};
      out[j].overheard = {0.0};
    } else {
      out[j] = best_of(j);
    }
  }
  return out;
}

double etx_link(const LinkTable& links, NodeId a, NodeId b) {
  const double d = (1.0 - links.at(a, b).erasure) * (1.0 - links.at(b, a).erasure);
  return d > 0 ? 1.0 / d : kInf;
}

std::vector<EtxPath> etx_route(NodeId source, const LinkTable& links) {
  const int N = links.size();
  std::vector<double> dist(N, kInf);
  std::vector<int> prev(N, -1);
  std::vector<bool> done(N, false);
  dist[source] = 0.0;
  for (int round = 0; round < N; ++round) {
    int u = -1;
    for (int j = 0; j < N; ++j)
      if (!done[j] && dist[j] < kInf && (u < 0 || dist[j] < dist[u])) u = j;
    if (u < 0) break;
    done[u] = true;
    for (int v = 0; v < N; ++v) {
      if (done[v] || v == u) continue;
      const double c = etx_link(links, u, v);
      if (c == kInf) continue;
      if (dist[u] + c < dist[v]) {
        dist[v] = dist[u] + c;
        prev[v] = u;
      }
    }
  }
  std::vector<EtxPath> out(N);
  for (int j = 0; j < N; ++j) {
    if (dist[j] == kInf) continue;
    out[j].etx = dist[j];
    for (int v = j; v != -1; v = prev[v]) out[j].nodes.push_back(v);
    std::reverse(out[j].nodes.begin(), out[j].nodes.end());
  }
  return out;
}

PathCandidate brute_force_best_path(NodeId source, NodeId dest, const RatioMatrix& r, OverhearingCheck check) {
  const int N = static_cast<int>(r.size());
  if (N > 9) throw std::invalid_argument("brute_force_best_path: at most 9 nodes");
  if (source == dest) throw std::invalid_argument("brute_force_best_path: source equals destination");
  PathCandidate best;
  std::vector<NodeId> path{source};
  std::vector<bool> used(N, false);
  used[source] = true;
  std::function<void()> walk = [&] {
    for (int v = 0; v < N; ++v) {
      if (used[v]) continue;
      path.push_back(v);
      if (v == dest) {
        if (auto p = path_metric(path, r, check); p && p->metric < best.metric) best = *p;
      } else {
        used[v] = true;
        walk();
        used[v] = false;
      }
      path.pop_back();
    }
  };
  walk();
  return best;
}

}  // namespace crelay::routing
