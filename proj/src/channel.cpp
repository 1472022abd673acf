#include "crelay/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crelay::sim {

double truncated_pareto_mean(double alpha, double gamma, double nu) {
  if (alpha <= 0) throw std::invalid_argument("truncated_pareto_mean: alpha must be positive");
  const double norm = 1.0 - std::pow(gamma / nu, alpha);
  if (std::abs(alpha - 1.0) < 1e-9) return gamma * std::log(nu / gamma) / norm;
  return alpha * std::pow(gamma, alpha) * (std::pow(nu, 1 - alpha) - std::pow(gamma, 1 - alpha)) / ((1 - alpha) * norm);
}

double alpha_for_mean(double mean, double gamma, double nu) {
  double lo = 0.01, hi = 50.0;  // the mean decreases in alpha
  if (mean > truncated_pareto_mean(lo, gamma, nu) || mean < truncated_pareto_mean(hi, gamma, nu))
    throw std::invalid_argument("alpha_for_mean: mean outside the reachable range");
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (truncated_pareto_mean(mid, gamma, nu) > mean)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Channel::Channel(int num_nodes, std::uint64_t seed, bool burst, double burst_mean)
    : n_(num_nodes), rng_(seed), burst_(burst), burst_mean_(burst_mean),
      links_(static_cast<std::size_t>(num_nodes) * num_nodes) {
  if (num_nodes < 1) throw std::invalid_argument("Channel: need at least one node");
  if (burst_mean < 1) throw std::invalid_argument("Channel: burst mean below 1");
}

double Channel::draw_ratio(const LinkModel& l) {
  if (!l.errors || bernoulli(rng_, l.clean_fraction)) return 0.0;
  return amps::sample_pareto(rng_, amps::PriorModel{l.alpha, amps::kGamma, amps::kNu});
}

Reception Channel::transmit(std::span<const std::uint8_t> frame, NodeId from, NodeId to) {
  Reception r;
  const auto& l = link(from, to);
  if (from == to || bernoulli(rng_, l.erasure)) return r;
  r.erased = false;
  r.bytes.assign(frame.begin(), frame.end());
  const double x = draw_ratio(l);
  if (x <= 0 || frame.empty()) return r;

  // Stochastic rounding keeps the mean corrupted fraction equal to x.
  const double want = x * static_cast<double>(frame.size());
  std::size_t k = static_cast<std::size_t>(want);
  if (uniform01(rng_) < want - static_cast<double>(k)) ++k;
  k = std::min(k, frame.size());

  std::vector<bool> hit(frame.size(), false);
  auto flip = [&](std::size_t pos) {
    if (hit[pos]) return false;
    hit[pos] = true;
    r.bytes[pos] = static_cast<std::uint8_t>(frame[pos] ^ (1 + uniform_below(rng_, 255)));
    return true;
  };
  std::size_t done = 0;
  if (!burst_) {
    // Partial Fisher-Yates over positions.
    std::vector<std::uint32_t> idx(frame.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + uniform_below(rng_, idx.size() - i);
      std::swap(idx[i], idx[j]);
      flip(idx[i]);
    }
    done = k;
  } else {
    const double q = 1.0 / burst_mean_;
    while (done < k) {
      std::size_t pos = uniform_below(rng_, frame.size());
      do {
        done += flip(pos);
        pos = (pos + 1) % frame.size();
      } while (done < k && !bernoulli(rng_, q));
    }
  }
  r.corrupted = static_cast<int>(done);
  return r;
}

NodeId mac_pick(Rng& rng, std::span<const NodeId> backlogged) {
  if (backlogged.empty()) return -1;
  return backlogged[uniform_below(rng, backlogged.size())];
}

}  // namespace crelay::sim
