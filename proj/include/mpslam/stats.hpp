#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

// Scalar densities and special functions used by the measurement model and
// the filter. Everything likelihood-shaped is exposed in log form; the linear
// wrappers exist for the places where the contract wants a density value.

namespace mpslam {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = neg_inf;
  for (double x : xs) m = std::max(m, x);
  if (m == neg_inf) return neg_inf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline double log_normal_pdf(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) -
         0.5 * std::log(2.0 * std::numbers::pi);
}

// log I0(t). std handles moderate arguments; the asymptotic expansion takes
// over before cyl_bessel_i overflows (I0(t) ~ e^t/sqrt(2 pi t)).
inline double log_bessel_i0(double t) {
  t = std::abs(t);
  if (t < 20.0) return std::log(std::cyl_bessel_i(0.0, t));
  // I0(t) = e^t/sqrt(2 pi t) * sum_k a_k/t^k,  a_k = prod((2j-1)^2) / (8^k k!)
  double sum = 1.0;
  double ak = 1.0;
  for (int k = 1; k <= 10; ++k) {
    const double odd = 2.0 * k - 1.0;
    ak *= odd * odd / (8.0 * k);
    sum += ak / std::pow(t, k);
  }
  return t - 0.5 * std::log(2.0 * std::numbers::pi * t) + std::log(sum);
}

// Marcum Q1(a, b) = P(X > b) for X ~ Rice(a, 1), evaluated as a Poisson
// mixture of chi-square tail terms:
//   Q1 = sum_k Pois(k; a^2/2) * P(chi^2_{2k+2} > b^2)
// The Poisson pmf is evaluated through its log so large a stays finite, and
// the k-window covers +-12 sigma of the mixing distribution.
inline double marcum_q1(double a, double b) {
  if (a < 0.0 || b < 0.0) throw std::domain_error("marcum_q1: negative argument");
  if (a == 0.0) return std::exp(-0.5 * b * b);
  if (b == 0.0) return 1.0;

  const double lam = 0.5 * a * a;
  const double eta = 0.5 * b * b;
  const double half = 12.0 * std::sqrt(lam) + 30.0;
  const long k_lo = std::max(0L, static_cast<long>(std::floor(lam - half)));
  const long k_hi = static_cast<long>(std::ceil(lam + half));

  // chi-square tail S_k = e^-eta * sum_{j<=k} eta^j/j!, advanced in lockstep
  double chi_term = std::exp(-eta);
  double s = chi_term;
  for (long j = 1; j <= k_lo; ++j) {
    if (s >= 1.0 - 1e-18) {
      s = 1.0;
      chi_term = 0.0;
      break;
    }
    chi_term *= eta / static_cast<double>(j);
    s += chi_term;
  }

  // Poisson pmf advanced by recurrence from one log-domain anchor value;
  // the relative drift over the window is ~1e-14, far inside tolerance.
  double pmf = std::exp(-lam + static_cast<double>(k_lo) * std::log(lam) -
                        std::lgamma(static_cast<double>(k_lo) + 1.0));
  double acc = 0.0;
  double cum = 0.0;
  for (long k = k_lo; k <= k_hi; ++k) {
    acc += pmf * s;
    cum += pmf;
    chi_term *= eta / static_cast<double>(k + 1);
    s = std::min(1.0, s + chi_term);
    pmf *= lam / static_cast<double>(k + 1);
  }
  // beyond k_hi the tail term is 1 to machine precision
  acc += std::max(0.0, 1.0 - cum);
  return std::clamp(acc, 0.0, 1.0);
}

// Composite-Simpson tail integral of the Rician density. Deliberately naive
// and independent of marcum_q1 above; used as a cross-check oracle. Keep
// nu <= 8 or so: it calls cyl_bessel_i in linear space.
inline double marcum_q1_quadrature(double nu, double gamma, int panels = 20000) {
  const double hi = gamma + 60.0;
  const double h = (hi - gamma) / (2.0 * panels);
  auto f = [nu](double x) {
    return x * std::exp(-0.5 * (x * x + nu * nu)) * std::cyl_bessel_i(0.0, nu * x);
  };
  double acc = f(gamma) + f(hi);
  for (int i = 1; i < 2 * panels; ++i) {
    acc += f(gamma + i * h) * ((i % 2) ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}

// Rice(nu, 1) density, log form
inline double log_rician_pdf(double x, double nu) {
  if (x < 0.0) return neg_inf;
  if (x == 0.0) return neg_inf;
  return std::log(x) - 0.5 * (x * x + nu * nu) + log_bessel_i0(nu * x);
}

// Rice(nu, 1) renormalized to [gamma, inf); caller guarantees x >= gamma
inline double log_rician_truncated_pdf(double x, double nu, double gamma) {
  return log_rician_pdf(x, nu) - std::log(marcum_q1(nu, gamma));
}

// unit-scale Rayleigh renormalized to [gamma, inf)
inline double log_rayleigh_truncated_pdf(double x, double gamma) {
  if (x < gamma) return neg_inf;
  return std::log(x) - 0.5 * (x * x - gamma * gamma);
}

}  // namespace mpslam
