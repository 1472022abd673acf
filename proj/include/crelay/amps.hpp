#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "crelay/rng.hpp"

namespace crelay::amps {

struct SampleSpec {
  int K;      // bytes folded into one parity bit
  int count;  // samples of this type per frame
  double ratio_lo, ratio_hi;
};

// Coarse to fine: long samples catch low error ratios, short ones high ratios.
inline constexpr std::array<SampleSpec, 3> kSampleSpecs{{
    {128, 8, 0.001, 0.01},
    {32, 16, 0.01, 0.03},
    {10, 40, 0.03, 0.2},
}};
inline constexpr int kSampleBits = 64;
inline constexpr int kNumTypes = 3;

inline constexpr double kGamma = 0.001;
inline constexpr double kNu = 0.999;
inline constexpr int kAlphaCount = 100;
inline constexpr double kThreshold = 0.95;
inline constexpr int kMinSegmentErrors = 3;
// Estimates are per codeword segment, which never exceeds 255 bytes.
inline constexpr int kMaxSegmentErrors = 255;

/// alpha grid: 0.02, 0.04, ..., 2.00
inline double alpha_at(int index) { return 0.02 * (index + 1); }
int alpha_index(double alpha);

struct PriorModel {
  double alpha = 1.0;
  double gamma = kGamma;
  double nu = kNu;
};

/// Bit j is sample j. Samples 0-7 use K=128, 8-23 K=32, 24-63 K=10.
using SampleBits = std::uint64_t;

SampleBits compute_samples(std::span<const std::uint8_t> payload, std::uint16_t frame_seq);

/// Number of mismatching samples per type.
std::array<int, kNumTypes> mismatches(SampleBits sent, SampleBits recomputed);

/// [1 - C(B-c, K) / C(B, K)] / 2, evaluated in log space.
double p_sample_error(int B, int c, int K);

/// Binomial(S, p_sample_error(B, c, K)) at m.
double likelihood_m_given_c(int m, int c, int S, int B, int K);

/// CDF of the truncated Pareto over the error ratio.
double pareto_cdf(double x, const PriorModel& prior);

/// P(C = c) for c in [0, B]: the ratio density integrated over [c/B, (c+1)/B).
std::vector<double> prior_pmf(const PriorModel& prior, int B);

/// Posterior mode of C given m mismatches; ties go to the larger c.
int map_estimate_c(int m, const PriorModel& prior, int B, int K, int S);

/// map_estimate_c for every m in [0, S].
std::vector<int> map_curve(const PriorModel& prior, int B, int K, int S);

/// P(E = e | C = c) for e in [0, c], E being the largest per-segment error
/// count when c errors fall uniformly into numB equal segments.
std::vector<double> max_per_segment_dist(int c, int numB);

/// Smallest e with P(E <= e | C = c) > threshold, floored at 3 and capped at 255.
int bound_e(int c, int numB, double threshold = kThreshold);

/// bound_e for every c in [0, c_max] at once.
std::vector<int> bound_curve(int c_max, int numB, double threshold = kThreshold);

/// One bound_curve per entry of numBs, sharing the recursion over segments.
std::vector<std::vector<int>> bound_curves(int c_max, std::span<const int> numBs, double threshold = kThreshold);

int combine_multi_resolution(std::span<const int> estimates);

/// Splits c_hat in proportion to packet sizes, each share rounded up.
std::vector<int> apportion(int c_hat, std::span<const int> packet_sizes);

/// Grid alpha whose moment equation is closest to the observed log-ratios.
double fit_alpha(std::span<const double> ratios, double gamma = kGamma, double nu = kNu);

/// Inverse-CDF draw from the truncated Pareto.
template <class Gen>
double sample_pareto(Gen& rng, const PriorModel& prior) {
  const double tail = std::pow(prior.gamma / prior.nu, prior.alpha);
  const double u = uniform01(rng);
  return prior.gamma / std::pow(1.0 - u * (1.0 - tail), 1.0 / prior.alpha);
}

// Naive baseline: 8 raw data bytes at pseudo-random positions.
inline constexpr int kNaiveSamples = 8;
using NaiveSamples = std::array<std::uint8_t, kNaiveSamples>;

std::array<std::uint32_t, kNaiveSamples> naive_positions(std::size_t B, std::uint16_t frame_seq);
NaiveSamples naive_samples(std::span<const std::uint8_t> payload, std::uint16_t frame_seq);
int naive_estimate(std::span<const std::uint8_t> received, const NaiveSamples& sent, std::uint16_t frame_seq);

}  // namespace crelay::amps
