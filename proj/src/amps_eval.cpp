#include "crelay/amps_eval.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "crelay/rng.hpp"

namespace crelay::amps {

EstimatorError compare_with_naive(double ratio, int trials, std::uint64_t seed, const AmpsTables& tables,
                                  int packet_bytes, int alpha_index) {
  if (trials < 1 || packet_bytes < 1 || ratio < 0 || ratio > 1)
    throw std::invalid_argument("compare_with_naive: bad arguments");
  EstimatorError out;
  out.ratio = ratio;
  out.trials = trials;
  const int c = static_cast<int>(std::lround(ratio * packet_bytes));
  const std::vector<PacketShape> one{{packet_bytes, (packet_bytes + 149) / 150}};
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(packet_bytes));
  std::vector<std::uint8_t> p(static_cast<std::size_t>(packet_bytes));
  double sa = 0, sn = 0, qa = 0, qn = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(t)}));
    for (auto& b : p) b = static_cast<std::uint8_t>(rng());
    const auto seq = static_cast<std::uint16_t>(rng());
    const auto bits = compute_samples(p, seq);
    const auto raw = naive_samples(p, seq);
    std::iota(idx.begin(), idx.end(), 0u);
    for (int i = 0; i < c; ++i) {
      const std::size_t j = i + uniform_below(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
      p[idx[i]] ^= static_cast<std::uint8_t>(1 + uniform_below(rng, 255));
    }
    const double ea = std::abs(tables.lookup(mismatches(bits, compute_samples(p, seq)), alpha_index, packet_bytes, one).c_hat - c);
    const double en = std::abs(naive_estimate(p, raw, seq) - c);
    sa += ea, qa += ea * ea, sn += en, qn += en * en;
  }
  out.mae_amps = sa / trials;
  out.mae_naive = sn / trials;
  out.sd_amps = std::sqrt(std::max(0.0, qa / trials - out.mae_amps * out.mae_amps));
  out.sd_naive = std::sqrt(std::max(0.0, qn / trials - out.mae_naive * out.mae_naive));
  return out;
}

}  // namespace crelay::amps
