#include "crelay/reed_solomon.hpp"

#include <algorithm>
#include <stdexcept>

#include "crelay/gf256.hpp"

namespace crelay {

namespace {

using gf256::kOrder;
using gf256::kTables;

// poly[k] is the coefficient of x^k, given as logs (-1 for zero); x = alpha^lx.
std::uint8_t eval_log_poly(std::span<const int> log_poly, int lx) {
  std::uint8_t acc = 0;
  int step = 0;
  for (int lc : log_poly) {
    if (lc >= 0) acc ^= kTables.exp[(lc + step) % kOrder];
    step += lx;
    if (step >= kOrder) step -= kOrder;
  }
  return acc;
}

std::vector<int> logs(std::span<const std::uint8_t> poly) {
  std::vector<int> out(poly.size());
  for (std::size_t k = 0; k < poly.size(); ++k) out[k] = kTables.log[poly[k]];
  return out;
}

}  // namespace

ReedSolomon::ReedSolomon(int parity) : parity_(parity) {
  if (parity < 1 || parity > 254) throw std::invalid_argument("ReedSolomon: parity must be in [1,254]");
  generator_.assign(1, 1);
  for (int j = 1; j <= parity; ++j) {
    // multiply by (x + alpha^j)
    const std::uint8_t root = gf256::pow_alpha(j);
    std::vector<std::uint8_t> next(generator_.size() + 1, 0);
    for (std::size_t k = 0; k < generator_.size(); ++k) {
      next[k + 1] ^= generator_[k];
      next[k] ^= gf256::mul(generator_[k], root);
    }
    generator_ = std::move(next);
  }
}

void ReedSolomon::encode(std::span<const std::uint8_t> data, std::span<std::uint8_t> parity_out) const {
  if (data.size() + parity_ > static_cast<std::size_t>(kOrder))
    throw std::invalid_argument("ReedSolomon::encode: codeword longer than 255");
  if (parity_out.size() != static_cast<std::size_t>(parity_))
    throw std::invalid_argument("ReedSolomon::encode: parity buffer size mismatch");

  std::fill(parity_out.begin(), parity_out.end(), 0);
  const int p = parity_;
  for (std::uint8_t d : data) {
    const std::uint8_t fb = d ^ parity_out[0];
    if (fb != 0) {
      const int lfb = kTables.log[fb];
      for (int j = 0; j < p - 1; ++j) {
        const std::uint8_t g = generator_[p - 1 - j];
        parity_out[j] = parity_out[j + 1] ^ (g ? kTables.exp[lfb + kTables.log[g]] : 0);
      }
      parity_out[p - 1] = generator_[0] ? kTables.exp[lfb + kTables.log[generator_[0]]] : 0;
    } else {
      std::copy(parity_out.begin() + 1, parity_out.end(), parity_out.begin());
      parity_out[p - 1] = 0;
    }
  }
}

std::vector<std::uint8_t> ReedSolomon::encode(std::span<const std::uint8_t> data) const {
  std::vector<std::uint8_t> out(data.size() + parity_);
  std::copy(data.begin(), data.end(), out.begin());
  encode(data, std::span(out).subspan(data.size()));
  return out;
}

void ReedSolomon::syndromes(std::span<const std::uint8_t> cw, std::span<std::uint8_t> out) const {
  // S_j = sum_i r_i * alpha^(j * (n-1-i)), j = 1..parity
  std::fill(out.begin(), out.end(), 0);
  const int n = static_cast<int>(cw.size());
  for (int i = 0; i < n; ++i) {
    if (cw[i] == 0) continue;
    const int lr = kTables.log[cw[i]];
    const int step = (n - 1 - i) % kOrder;
    int idx = lr;
    for (int j = 0; j < parity_; ++j) {
      idx += step;
      if (idx >= kOrder) idx -= kOrder;
      out[j] ^= kTables.exp[idx];
    }
  }
}

std::optional<int> ReedSolomon::decode(std::span<std::uint8_t> cw, std::span<const int> erasures) const {
  const int n = static_cast<int>(cw.size());
  const int p = parity_;
  if (n > kOrder || n <= p) throw std::invalid_argument("ReedSolomon::decode: bad codeword length");
  const int s_count = static_cast<int>(erasures.size());
  if (s_count > p) return std::nullopt;

  for (int pos : erasures) {
    if (pos < 0 || pos >= n) throw std::invalid_argument("ReedSolomon::decode: erasure out of range");
    cw[pos] = 0;
  }

  std::vector<std::uint8_t> s(p);
  syndromes(cw, s);
  if (std::all_of(s.begin(), s.end(), [](std::uint8_t v) { return v == 0; })) return 0;

  // Erasure locator Gamma(x) = prod (1 + X_k x)
  std::vector<std::uint8_t> lambda(p + 1, 0);
  lambda[0] = 1;
  for (int k = 0; k < s_count; ++k) {
    const std::uint8_t xk = gf256::pow_alpha(n - 1 - erasures[k]);
    for (int d = k + 1; d > 0; --d) lambda[d] ^= gf256::mul(lambda[d - 1], xk);
  }

  // Berlekamp-Massey seeded with the erasure locator.
  std::vector<std::uint8_t> b = lambda;
  std::vector<std::uint8_t> t(p + 1);
  int el = s_count;
  for (int r = s_count + 1; r <= p; ++r) {
    std::uint8_t discr = 0;
    for (int i = 0; i < r; ++i) discr ^= gf256::mul(lambda[i], s[r - 1 - i]);
    if (discr == 0) {
      std::copy_backward(b.begin(), b.end() - 1, b.end());
      b[0] = 0;
      continue;
    }
    t[0] = lambda[0];
    for (int i = 1; i <= p; ++i) t[i] = lambda[i] ^ gf256::mul(discr, b[i - 1]);
    if (2 * el <= r + s_count - 1) {
      el = r + s_count - el;
      const std::uint8_t dinv = gf256::inv(discr);
      for (int i = 0; i <= p; ++i) b[i] = gf256::mul(lambda[i], dinv);
    } else {
      std::copy_backward(b.begin(), b.end() - 1, b.end());
      b[0] = 0;
    }
    lambda = t;
  }

  int deg = p;
  while (deg > 0 && lambda[deg] == 0) --deg;
  if (deg == 0 || 2 * (deg - s_count) + s_count > p) return std::nullopt;

  // Chien search restricted to the n transmitted positions. Position i is
  // x = alpha^-(n-1-i); term k's exponent grows by k per position.
  std::vector<int> roots;
  roots.reserve(deg);
  std::vector<int> term_k, term_exp;
  for (int k = 1; k <= deg; ++k) {
    if (lambda[k] == 0) continue;
    term_k.push_back(k);
    int e = (kTables.log[lambda[k]] - k * (n - 1)) % kOrder;
    if (e < 0) e += kOrder;
    term_exp.push_back(e);
  }
  const std::size_t terms = term_k.size();
  for (int i = 0; i < n; ++i) {
    std::uint8_t acc = lambda[0];
    for (std::size_t t = 0; t < terms; ++t) {
      acc ^= kTables.exp[term_exp[t]];
      term_exp[t] += term_k[t];
      if (term_exp[t] >= kOrder) term_exp[t] -= kOrder;
    }
    if (acc == 0) {
      roots.push_back(i);
      if (static_cast<int>(roots.size()) > deg) break;
    }
  }
  if (static_cast<int>(roots.size()) != deg) return std::nullopt;

  // Omega(x) = S(x) Lambda(x) mod x^p
  std::vector<std::uint8_t> omega(p, 0);
  for (int i = 0; i < p; ++i) {
    std::uint8_t acc = 0;
    for (int k = 0; k <= std::min(i, deg); ++k) acc ^= gf256::mul(lambda[k], s[i - k]);
    omega[i] = acc;
  }

  // Lambda'(x): odd-degree terms only in characteristic 2.
  std::vector<std::uint8_t> dlambda(deg, 0);
  for (int k = 1; k <= deg; k += 2) dlambda[k - 1] = lambda[k];

  const auto log_omega = logs(omega), log_dlambda = logs(dlambda);
  int corrected = 0;
  for (int pos : roots) {
    const int lx = ((-(n - 1 - pos)) % kOrder + kOrder) % kOrder;
    const std::uint8_t num = eval_log_poly(log_omega, lx);
    const std::uint8_t den = eval_log_poly(log_dlambda, lx);
    if (den == 0) return std::nullopt;
    const std::uint8_t mag = gf256::div(num, den);
    cw[pos] ^= mag;
    if (mag != 0 && std::find(erasures.begin(), erasures.end(), pos) == erasures.end()) ++corrected;
  }

  syndromes(cw, s);
  if (!std::all_of(s.begin(), s.end(), [](std::uint8_t v) { return v == 0; })) return std::nullopt;
  if (2 * corrected + s_count > p) return std::nullopt;
  return corrected;
}

}  // namespace crelay
