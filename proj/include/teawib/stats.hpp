#pragma once

// Null-hypothesis statistics for bit matching. Under H0 the k extracted bits
// are i.i.d. fair coins, so the matching count M ~ Binomial(k, 1/2) and
//   P(M > tau) = sum_{j=tau+1}^{k} C(k,j) / 2^k = I_{1/2}(tau+1, k-tau).
// Detection uses M >= tau, whose false-positive rate is P(M > tau-1).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "teawib/registry.hpp"
#include "teawib/rng.hpp"

namespace teawib {

inline int matching_bits(const WatermarkMessage& a, const WatermarkMessage& b) {
  if (a.length() != b.length())
    throw ShapeError("matching_bits: lengths " + std::to_string(a.length()) + " and " +
                     std::to_string(b.length()) + " differ");
  return a.length() - hamming_distance(a, b);
}

inline double bit_accuracy(const WatermarkMessage& a, const WatermarkMessage& b) {
  if (a.length() == 0) throw ShapeError("bit_accuracy: empty messages");
  return static_cast<double>(matching_bits(a, b)) / a.length();
}

inline double log_binomial(int n, int j) {
  return std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0);
}

/// P(M > tau) for M ~ Bin(k, 1/2), by log-space summation of the upper tail.
inline double fpr_closed_form(int tau, int k) {
  if (k < 1) throw Error("fpr_closed_form: k must be positive");
  if (tau < 0 || tau > k)
    throw Error("fpr_closed_form: tau=" + std::to_string(tau) + " outside [0, " + std::to_string(k) + "]");
  if (tau == k) return 0.0;
  const double log_half_k = -k * std::log(2.0);
  // Largest term first for a stable log-sum-exp.
  double peak = -std::numeric_limits<double>::infinity();
  for (int j = tau + 1; j <= k; ++j) peak = std::max(peak, log_binomial(k, j));
  double acc = 0;
  for (int j = tau + 1; j <= k; ++j) acc += std::exp(log_binomial(k, j) - peak);
  return std::min(1.0, std::exp(peak + log_half_k + std::log(acc)));
}

namespace detail {

/// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16, kTiny = 1e-300;
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1, d = 1 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0,1].
inline double incomplete_beta(double x, double a, double b) {
  if (!(a > 0) || !(b > 0)) throw Error("incomplete_beta: a and b must be positive");
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1) / (a + b + 2)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1 - front * detail::beta_continued_fraction(b, a, 1 - x) / b;
}

/// The same tail through I_{1/2}(tau+1, k-tau).
inline double fpr_incomplete_beta(int tau, int k) {
  if (tau < 0 || tau > k) throw Error("fpr_incomplete_beta: tau out of range");
  if (tau == k) return 0.0;
  return incomplete_beta(0.5, tau + 1.0, static_cast<double>(k - tau));
}

/// 1 - (1 - p)^N without cancellation.
inline double global_fpr_from(double p, long n) {
  if (n < 0) throw Error("global_fpr: N must be >= 0");
  if (n == 0 || p <= 0) return 0.0;
  if (p >= 1) return 1.0;
  return -std::expm1(static_cast<double>(n) * std::log1p(-p));
}

inline double global_fpr(int tau, int k, long n) { return global_fpr_from(fpr_closed_form(tau, k), n); }

/// P(M >= tau), the false-positive rate of the detection rule M >= tau.
inline double detection_fpr(int tau, int k) {
  if (tau < 0 || tau > k + 1) throw Error("detection_fpr: tau out of range");
  if (tau == 0) return 1.0;
  return fpr_closed_form(tau - 1, k);
}

/// Smallest tau with 1 - (1 - P(M > tau))^N <= target.
inline int choose_threshold(int k, double target_fpr, long n) {
  if (!(target_fpr > 0) || target_fpr > 1)
    throw Error("choose_threshold: target FPR must lie in (0, 1]");
  for (int tau = 0; tau <= k; ++tau)
    if (global_fpr(tau, k, n) <= target_fpr) return tau;
  throw Error("choose_threshold: unreachable");  // tau = k always qualifies
}

/// Smallest tau for the rule M >= tau whose global false-positive rate is at
/// most `target_fpr`; equals choose_threshold + 1.
inline int detection_threshold(int k, double target_fpr, long n) {
  const int tau = choose_threshold(k, target_fpr, n) + 1;
  if (tau > k) {
    throw Error("target FPR " + std::to_string(target_fpr) + " is unreachable with k=" + std::to_string(k) +
                " bits and N=" + std::to_string(n) + "; the minimum achievable global FPR is " +
                std::to_string(global_fpr_from(detection_fpr(k, k), n)));
  }
  return tau;
}

/// Empirical P(M > tau) with M the match count of k fair coin flips.
inline double fpr_monte_carlo(int tau, int k, long samples, Rng& rng) {
  if (k < 1 || k > 64) throw Error("fpr_monte_carlo: k must lie in [1, 64]");
  if (tau < 0 || tau > k) throw Error("fpr_monte_carlo: tau out of range");
  if (samples < 1) throw Error("fpr_monte_carlo: samples must be positive");
  const std::uint64_t mask = k == 64 ? ~0ull : ((1ull << k) - 1);
  long hits = 0;
  for (long s = 0; s < samples; ++s) hits += std::popcount(rng.next_u64() & mask) > tau;
  return static_cast<double>(hits) / static_cast<double>(samples);
}

}  // namespace teawib
