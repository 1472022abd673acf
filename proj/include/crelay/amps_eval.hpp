#pragma once

#include <cstdint>

#include "crelay/amps_table.hpp"

namespace crelay::amps {

struct EstimatorError {
  double ratio = 0;
  int trials = 0;
  double mae_amps = 0;   // mean |c_hat - c| in bytes
  double mae_naive = 0;
  double sd_amps = 0;    // standard deviation of |c_hat - c|
  double sd_naive = 0;
};

/// Random 1500-byte packets with round(ratio * 1500) bytes replaced by
/// different values; AMPS (flattest prior) against the 8-byte naive sampler.
EstimatorError compare_with_naive(double ratio, int trials, std::uint64_t seed, const AmpsTables& tables,
                                  int packet_bytes = 1500, int alpha_index = 0);

}  // namespace crelay::amps
