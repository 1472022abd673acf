#include "crelay/amps.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

namespace crelay::amps {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int sample_type(int j) {
  if (j < kSampleSpecs[0].count) return 0;
  if (j < kSampleSpecs[0].count + kSampleSpecs[1].count) return 1;
  return 2;
}

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log of t*log(q) with the 0*log(0) = 0 convention.
double xlogy(double x, double y) {
  if (x == 0) return 0.0;
  if (y <= 0) return kNegInf;
  return x * std::log(y);
}

// Balls-in-bins split probabilities delta_t = C(c,t) q^t (1-q)^(c-t), t <= t_max.
void split_probs(int c, double q, int t_max, std::vector<double>& out) {
  out.assign(t_max + 1, 0.0);
  for (int t = 0; t <= std::min(c, t_max); ++t) {
    const double lg = log_choose(c, t) + xlogy(t, q) + xlogy(c - t, 1.0 - q);
    out[t] = std::exp(lg);
  }
}

}  // namespace

int alpha_index(double alpha) {
  const long i = std::lround(alpha / 0.02) - 1;
  return static_cast<int>(std::clamp<long>(i, 0, kAlphaCount - 1));
}

SampleBits compute_samples(std::span<const std::uint8_t> payload, std::uint16_t frame_seq) {
  if (payload.empty()) return 0;
  SampleBits bits = 0;
  for (int j = 0; j < kSampleBits; ++j) {
    SplitMixStream g(derive_seed({frame_seq, static_cast<std::uint64_t>(j)}));
    const int K = kSampleSpecs[sample_type(j)].K;
    unsigned x = 0;
    for (int k = 0; k < K; ++k) x ^= payload[uniform_below(g, payload.size())];
    if (std::popcount(x) & 1) bits |= SampleBits{1} << j;
  }
  return bits;
}

std::array<int, kNumTypes> mismatches(SampleBits sent, SampleBits recomputed) {
  const SampleBits diff = sent ^ recomputed;
  std::array<int, kNumTypes> m{};
  for (int j = 0; j < kSampleBits; ++j)
    if ((diff >> j) & 1) ++m[sample_type(j)];
  return m;
}

double p_sample_error(int B, int c, int K) {
  if (B < 1 || K < 1 || c < 0 || c > B) throw std::invalid_argument("p_sample_error: need 0 <= c <= B, K >= 1");
  if (c == 0) return 0.0;
  if (K > B) {
    // Frames shorter than K: fall back to drawing with replacement.
    return (1.0 - std::pow(1.0 - static_cast<double>(c) / B, K)) / 2.0;
  }
  if (B - c < K) return 0.5;
  // C(B-c,K)/C(B,K) = prod_{j<K} (B-c-j)/(B-j)
  double lr = 0.0;
  for (int j = 0; j < K; ++j) lr += std::log(static_cast<double>(B - c - j) / (B - j));
  return (1.0 - std::exp(lr)) / 2.0;
}

double likelihood_m_given_c(int m, int c, int S, int B, int K) {
  if (m < 0 || m > S) return 0.0;
  const double p = p_sample_error(B, c, K);
  const double lg = log_choose(S, m) + xlogy(m, p) + xlogy(S - m, 1.0 - p);
  return std::exp(lg);
}

double pareto_cdf(double x, const PriorModel& prior) {
  if (x <= prior.gamma) return 0.0;
  if (x >= prior.nu) return 1.0;
  const double tail = std::pow(prior.gamma / prior.nu, prior.alpha);
  return (1.0 - std::pow(prior.gamma / x, prior.alpha)) / (1.0 - tail);
}

std::vector<double> prior_pmf(const PriorModel& prior, int B) {
  std::vector<double> pmf(B + 1);
  for (int c = 0; c <= B; ++c)
    pmf[c] = pareto_cdf(static_cast<double>(c + 1) / B, prior) - pareto_cdf(static_cast<double>(c) / B, prior);
  return pmf;
}

std::vector<int> map_curve(const PriorModel& prior, int B, int K, int S) {
  const auto pmf = prior_pmf(prior, B);
  std::vector<double> lp(B + 1), lq(B + 1), lprior(B + 1);
  for (int c = 0; c <= B; ++c) {
    const double p = p_sample_error(B, c, K);
    lp[c] = p > 0 ? std::log(p) : kNegInf;
    lq[c] = std::log1p(-p);
    lprior[c] = pmf[c] > 0 ? std::log(pmf[c]) : kNegInf;
  }
  // The binomial coefficient is common to every c, so it drops out.
  std::vector<int> out(S + 1, 0);
  for (int m = 0; m <= S; ++m) {
    double best = kNegInf;
    int arg = 0;
    for (int c = 0; c <= B; ++c) {
      if (lprior[c] == kNegInf) continue;
      const double a = m == 0 ? 0.0 : m * lp[c];
      if (a == kNegInf) continue;
      const double score = a + (S - m) * lq[c] + lprior[c];
      if (score >= best) {
        best = score;
        arg = c;
      }
    }
    out[m] = arg;
  }
  return out;
}

int map_estimate_c(int m, const PriorModel& prior, int B, int K, int S) {
  if (m < 0 || m > S) throw std::invalid_argument("map_estimate_c: m outside [0,S]");
  return map_curve(prior, B, K, S)[m];
}

std::vector<double> max_per_segment_dist(int c, int numB) {
  if (numB < 1 || c < 0) throw std::invalid_argument("max_per_segment_dist: need c >= 0, numB >= 1");
  // P[c'][e] for the current number of segments; one segment holds everything.
  std::vector<std::vector<double>> P(c + 1);
  for (int k = 0; k <= c; ++k) {
    P[k].assign(k + 1, 0.0);
    P[k][k] = 1.0;
  }
  std::vector<double> delta;
  for (int i = 1; i < numB; ++i) {
    // The tagged segment is one of i+1, so each error lands in it with 1/(i+1).
    const double q = 1.0 / (i + 1);
    std::vector<std::vector<double>> next(c + 1);
    for (int k = 0; k <= c; ++k) {
      split_probs(k, q, k, delta);
      next[k].assign(k + 1, 0.0);
      for (int e = 0; e <= k; ++e) {
        double v = 0.0;
        for (int t = 0; t < e; ++t)
          if (e <= k - t) v += delta[t] * P[k - t][e];
        double below = 0.0;
        for (int e2 = 0; e2 <= std::min(e, k - e); ++e2) below += P[k - e][e2];
        v += delta[e] * below;
        next[k][e] = v;
      }
    }
    P = std::move(next);
  }
  return P[c];
}

std::vector<std::vector<int>> bound_curves(int c_max, std::span<const int> numBs, double threshold) {
  int top = 1;
  for (int n : numBs) {
    if (n < 1) throw std::invalid_argument("bound_curves: numB must be >= 1");
    top = std::max(top, n);
  }
  if (c_max < 0) throw std::invalid_argument("bound_curves: c_max must be non-negative");
  constexpr int E = kMaxSegmentErrors;
  // G[c][e] = P(every segment holds <= e errors | c errors), e in [0, E].
  auto at = [](std::vector<double>& g, int c, int e) -> double& { return g[static_cast<std::size_t>(c) * (E + 1) + e]; };
  std::vector<double> G(static_cast<std::size_t>(c_max + 1) * (E + 1), 0.0), H(G.size());
  for (int c = 0; c <= c_max; ++c)
    for (int e = c; e <= E; ++e) at(G, c, e) = 1.0;

  std::vector<std::vector<int>> out(numBs.size());
  auto snapshot = [&](int level) {
    for (std::size_t k = 0; k < numBs.size(); ++k) {
      if (numBs[k] != level) continue;
      auto& curve = out[k];
      curve.assign(c_max + 1, E);
      for (int c = 0; c <= c_max; ++c) {
        for (int e = 0; e <= E; ++e) {
          if (at(G, c, e) > threshold) {
            curve[c] = e;
            break;
          }
        }
        curve[c] = std::clamp(curve[c], kMinSegmentErrors, kMaxSegmentErrors);
      }
    }
  };
  snapshot(1);

  std::vector<double> delta;
  for (int i = 1; i < top; ++i) {
    // Adding a segment: each error lands in the new tagged one with 1/(i+1).
    const double q = 1.0 / (i + 1);
    std::fill(H.begin(), H.end(), 0.0);
    for (int c = 0; c <= c_max; ++c) {
      split_probs(c, q, E, delta);
      for (int t = 0; t <= std::min(c, E); ++t) {
        const double d = delta[t];
        if (d == 0) continue;
        const double* src = &at(G, c - t, 0);
        double* dst = &at(H, c, 0);
        for (int e = t; e <= E; ++e) dst[e] += d * src[e];
      }
    }
    std::swap(G, H);
    snapshot(i + 1);
  }
  return out;
}

std::vector<int> bound_curve(int c_max, int numB, double threshold) {
  const int n[1] = {numB};
  return std::move(bound_curves(c_max, n, threshold)[0]);
}

int bound_e(int c, int numB, double threshold) {
  if (c < 0) throw std::invalid_argument("bound_e: c must be non-negative");
  if (threshold != kThreshold) return bound_curve(c, numB, threshold)[c];
  // Curves are shared process-wide; they only depend on (c, numB).
  static std::mutex mu;
  static std::map<int, std::vector<int>> cache;
  std::lock_guard lock(mu);
  auto& curve = cache[numB];
  if (static_cast<int>(curve.size()) <= c) curve = bound_curve(std::max(2 * c, 512), numB);
  return curve[c];
}

int combine_multi_resolution(std::span<const int> estimates) {
  int best = 0;
  for (int e : estimates) best = std::max(best, e);
  return best;
}

std::vector<int> apportion(int c_hat, std::span<const int> packet_sizes) {
  long total = 0;
  for (int s : packet_sizes) total += s;
  std::vector<int> out(packet_sizes.size(), 0);
  if (total <= 0) return out;
  for (std::size_t i = 0; i < packet_sizes.size(); ++i)
    out[i] = static_cast<int>((static_cast<long>(c_hat) * packet_sizes[i] + total - 1) / total);
  return out;
}

double fit_alpha(std::span<const double> ratios, double gamma, double nu) {
  if (ratios.empty()) return 1.0;
  const double n = static_cast<double>(ratios.size());
  double rhs = 0.0;
  for (double p : ratios) rhs += std::log(std::clamp(p, gamma, nu));
  const double r = gamma / nu;
  double best_alpha = alpha_at(0), best_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kAlphaCount; ++i) {
    const double a = alpha_at(i);
    const double ra = std::pow(r, a);
    const double lhs = n / a + n * ra * std::log(r) / (1.0 - ra) + n * std::log(gamma);
    const double gap = std::abs(lhs - rhs);
    if (gap < best_gap) {
      best_gap = gap;
      best_alpha = a;
    }
  }
  return best_alpha;
}

std::array<std::uint32_t, kNaiveSamples> naive_positions(std::size_t B, std::uint16_t frame_seq) {
  std::array<std::uint32_t, kNaiveSamples> pos{};
  if (B == 0) return pos;
  SplitMixStream g(derive_seed({frame_seq, 0x4E414956ull}));
  for (auto& p : pos) p = static_cast<std::uint32_t>(uniform_below(g, B));
  return pos;
}

NaiveSamples naive_samples(std::span<const std::uint8_t> payload, std::uint16_t frame_seq) {
  NaiveSamples out{};
  if (payload.empty()) return out;
  const auto pos = naive_positions(payload.size(), frame_seq);
  for (int i = 0; i < kNaiveSamples; ++i) out[i] = payload[pos[i]];
  return out;
}

int naive_estimate(std::span<const std::uint8_t> received, const NaiveSamples& sent, std::uint16_t frame_seq) {
  if (received.empty()) return 0;
  const auto pos = naive_positions(received.size(), frame_seq);
  int bad = 0;
  for (int i = 0; i < kNaiveSamples; ++i) bad += received[pos[i]] != sent[i];
  return static_cast<int>(std::lround(static_cast<double>(received.size()) * bad / kNaiveSamples));
}

}  // namespace crelay::amps
