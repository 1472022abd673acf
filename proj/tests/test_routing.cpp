#include <cmath>
#include <stdexcept>

#include "crelay/routing.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace crelay;
using namespace crelay::routing;
using crelay::testing::five_node_ratios;
using crelay::testing::random_ratio_graph;

namespace {

RatioMatrix uniform(int n, double v) {
  RatioMatrix r(n, std::vector<double>(n, v));
  for (int i = 0; i < n; ++i) r[i][i] = 0;
  return r;
}

// Straight transcription of the metric pseudocode with the verbatim test.
double oracle_metric(const std::vector<int>& p, const RatioMatrix& r, bool verbatim) {
  const int n = static_cast<int>(p.size()) - 1;
  std::vector<double> O(n + 1, 0.0), L(n + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    if (r[p[i]][p[i + 1]] * r[p[i + 1]][p[i]] <= 0) return kInf;
    L[i] = (1 - O[i + 1]) / (r[p[i]][p[i + 1]] * r[p[i + 1]][p[i]]);
    for (int j = i + 2; j <= n; ++j) {
      const double t = verbatim ? r[p[i]][p[j]] * r[p[j]][p[i]] : r[p[i]][p[j]];
      if (O[j] + L[i] * t > 1) return kInf;
      O[j] += L[i] * r[p[i]][p[j]];
    }
  }
  double s = 0;
  for (int i = 0; i < n; ++i) s += L[i];
  return s;
}

double metric_or_inf(const std::vector<int>& p, const RatioMatrix& r, OverhearingCheck c) {
  const auto m = path_metric(p, r, c);
  return m ? m->metric : kInf;
}

}  // namespace

TEST_CASE("receiving ratio") {
  CHECK(receiving_ratio({0, 0}) == 1.0);
  CHECK(receiving_ratio({0.271, 0.02}) == doctest::Approx(0.69984));
  CHECK(receiving_ratio({1, 0.1}) == 0.0);
}

TEST_CASE("path_metric examples") {
  auto r = uniform(2, 1.0);
  CHECK(path_metric({0, 1}, r)->metric == doctest::Approx(1.0));

  r = uniform(3, 1.0);
  r[0][2] = r[2][0] = 0.0;
  auto m = path_metric({0, 1, 2}, r);
  REQUIRE(m);
  CHECK(m->load[0] == doctest::Approx(1.0));
  CHECK(m->load[1] == doctest::Approx(1.0));
  CHECK(m->metric == doctest::Approx(2.0));

  // Full overhearing at exactly O = 1 is still valid.
  for (auto check : {OverhearingCheck::Verbatim, OverhearingCheck::Consistent}) {
    r = uniform(3, 1.0);
    m = path_metric({0, 1, 2}, r, check);
    REQUIRE(m);
    CHECK(m->metric == doctest::Approx(1.0));
    CHECK(m->load[1] == doctest::Approx(0.0));

    r = uniform(3, 1.0);
    r[0][1] = 0.5;
    r[0][2] = r[2][0] = 0.8;
    CHECK_FALSE(path_metric({0, 1, 2}, r, check));
  }
  CHECK_THROWS_AS(path_metric({0}, r), std::invalid_argument);
}

TEST_CASE("path_metric: verbatim check lets overheard fraction exceed one") {
  // r_{2,0} small: the verbatim test passes while O[2] = 1.6.
  auto r = uniform(3, 1.0);
  r[0][1] = 0.5;
  r[0][2] = 0.8;
  r[2][0] = 0.1;
  const auto v = path_metric({0, 1, 2}, r, OverhearingCheck::Verbatim);
  REQUIRE(v);
  CHECK(v->overheard[2] == doctest::Approx(1.6));
  CHECK(v->load[1] < 0);
  CHECK_FALSE(path_metric({0, 1, 2}, r, OverhearingCheck::Consistent));
}

TEST_CASE("path_metric matches an independent transcription") {
  Rng rng(1);
  for (int t = 0; t < 2000; ++t) {
    const auto r = random_ratio_graph(rng, 7);
    std::vector<int> p{0, 1, 2, 3, 4, 5, 6};
    for (int i = 6; i > 0; --i) std::swap(p[i], p[uniform_below(rng, i + 1)]);
    p.resize(2 + uniform_below(rng, 6));
    for (bool verbatim : {true, false}) {
      const double want = oracle_metric(p, r, verbatim);
      const double got =
          metric_or_inf(p, r, verbatim ? OverhearingCheck::Verbatim : OverhearingCheck::Consistent);
      if (want == kInf)
        CHECK(got == kInf);
      else
        CHECK(got == doctest::Approx(want));
    }
  }
}

TEST_CASE("path_metric: consistent check keeps O in [0,1]; metric is order sensitive") {
  Rng rng(2);
  int reversed_differs = 0;
  for (int t = 0; t < 2000; ++t) {
    const auto r = random_ratio_graph(rng, 6);
    const std::vector<int> p{0, 2, 4, 1, 5};
    if (const auto m = path_metric(p, r)) {
      for (double o : m->overheard) {
        CHECK(o >= 0);
        CHECK(o <= 1 + 1e-12);
      }
      for (double l : m->load) CHECK(l >= -1e-12);
      std::vector<int> rev(p.rbegin(), p.rend());
      if (std::abs(metric_or_inf(rev, r, OverhearingCheck::Consistent) - m->metric) > 1e-9) ++reversed_differs;
    }
  }
  CHECK(reversed_differs > 0);
}

TEST_CASE("greedy_route: two nodes and the five-node example") {
  auto r = uniform(2, 1.0);
  auto g = greedy_route(0, r);
  CHECK(g[1].nodes == std::vector<int>{0, 1});
  CHECK(g[1].metric == doctest::Approx(1.0));
  CHECK(g[0].metric == 0.0);

  r = five_node_ratios();
  for (auto check : {OverhearingCheck::Verbatim, OverhearingCheck::Consistent}) {
    g = greedy_route(0, r, 4, check);
    CHECK(g[3].nodes == std::vector<int>{0, 1, 3});
    CHECK(g[4].nodes == std::vector<int>{0, 2, 3, 4});
    // The best path to E does not extend the best path to D.
    CHECK(brute_force_best_path(0, 3, r, check).nodes == std::vector<int>{0, 1, 3});
    CHECK(brute_force_best_path(0, 4, r, check).nodes == std::vector<int>{0, 2, 3, 4});
    CHECK(g[4].metric == doctest::Approx(brute_force_best_path(0, 4, r, check).metric));
  }
  // With a single candidate the search commits to A-B-D and extends it.
  g = greedy_route(0, r, 1);
  CHECK(g[4].nodes == std::vector<int>{0, 1, 3, 4});
  CHECK_THROWS_AS(greedy_route(0, r, 0), std::invalid_argument);
}

TEST_CASE("greedy_route: unreachable nodes keep an infinite metric") {
  RatioMatrix r(3, std::vector<double>(3, 0.0));
  r[0][1] = r[1][0] = 0.9;
  const auto g = greedy_route(0, r);
  CHECK(g[1].valid());
  CHECK_FALSE(g[2].valid());
  CHECK(g[2].metric == kInf);
}

TEST_CASE("greedy_route: more candidates never hurt on random 10-node graphs") {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto r = random_ratio_graph(rng, 10);
    const auto g1 = greedy_route(0, r, 1);
    const auto g4 = greedy_route(0, r, 4);
    for (int d = 1; d < 10; ++d) CHECK(g4[d].metric <= g1[d].metric + 1e-12);
  }
}

TEST_CASE("greedy_route: metric non-increasing in w, identical across invocations") {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto r = random_ratio_graph(rng, 8);
    std::vector<double> last(8, kInf);
    for (int w = 1; w <= 6; ++w) {
      const auto g = greedy_route(0, r, w);
      for (int d = 1; d < 8; ++d) {
        CHECK(g[d].metric <= last[d] + 1e-12);
        last[d] = g[d].metric;
      }
    }
    const auto a = greedy_route(0, r, 4), b = greedy_route(0, r, 4);
    for (int d = 0; d < 8; ++d) CHECK(a[d].nodes == b[d].nodes);
  }
}

TEST_CASE("greedy_route is never better than the brute-force optimum") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto r = random_ratio_graph(rng, 6);
    const auto g = greedy_route(0, r, 4);
    for (int d = 1; d < 6; ++d) {
      const auto b = brute_force_best_path(0, d, r);
      CHECK(g[d].metric >= b.metric - 1e-9);
      if (g[d].valid()) CHECK(g[d].metric == doctest::Approx(metric_or_inf(g[d].nodes, r, OverhearingCheck::Consistent)));
    }
  }
}

TEST_CASE("etx_route") {
  LinkTable chain(3);
  chain.set_symmetric(0, 1, {0, 0});
  chain.set_symmetric(1, 2, {0, 0});
  auto e = etx_route(0, chain);
  CHECK(e[2].nodes == std::vector<int>{0, 1, 2});
  CHECK(e[2].etx == doctest::Approx(2.0));

  LinkTable lossy(2);
  lossy.set_symmetric(0, 1, {0.5, 0.3});
  CHECK(etx_link(lossy, 0, 1) == doctest::Approx(4.0));

  LinkTable cut(3);
  cut.set_symmetric(0, 1, {0.1, 0});
  e = etx_route(0, cut);
  CHECK(e[2].nodes.empty());
  CHECK(e[2].etx == kInf);
}

TEST_CASE("etx paths are well-formed inputs to path_metric") {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    LinkTable links(7);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j)
        if (i != j && bernoulli(rng, 0.6)) links.at(i, j) = {0.6 * uniform01(rng), 0.1 * uniform01(rng)};
    const auto r = links.ratios();
    const auto e = etx_route(0, links);
    for (int d = 1; d < 7; ++d) {
      if (e[d].nodes.empty()) continue;
      CHECK(e[d].nodes.front() == 0);
      CHECK(e[d].nodes.back() == d);
      // Either a finite metric or INVALID, never a fault.
      const auto m = path_metric(e[d].nodes, r);
      if (m) CHECK(std::isfinite(m->metric));
    }
  }
}

TEST_CASE("brute force rejects large graphs") {
  RatioMatrix r(10, std::vector<double>(10, 0.5));
  CHECK_THROWS_AS(brute_force_best_path(0, 1, r), std::invalid_argument);
  RatioMatrix two = uniform(2, 0.5);
  CHECK(brute_force_best_path(0, 1, two).nodes == std::vector<int>{0, 1});
}
