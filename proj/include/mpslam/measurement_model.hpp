#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mpslam/geometry.hpp"
#include "mpslam/stats.hpp"

// Single-path measurement model: each detected propagation path yields a
// (range, angle, normalized amplitude) triple. Amplitudes are Rician with
// unit scale, thresholded at gamma by the detector, and the range/angle
// noise scales inversely with the measured amplitude.

namespace mpslam {

struct Measurement {
  double range = 0.0;      // >= 0
  double aoa = 0.0;        // [-pi, pi)
  double amplitude = 0.0;  // >= gamma
};

struct NoiseParams {
  double sigma_d0 = 0.30;   // range std at unit amplitude, m
  double sigma_phi0 = 0.15; // aoa std at unit amplitude, rad
  double gamma = 2.0;       // detection threshold
};

struct FalseAlarmModel {
  double mean = 1.0;                       // Poisson rate per anchor per step
  double range_lo = 0.0;
  double range_hi = 30.0;
};

struct BirthModel {
  double mean = 0.05;          // expected new features per anchor per step
  Point2 region_center;        // axis-aligned square prior on position
  double region_half_width = 15.0;
  double amplitude_lo = 2.0;   // uniform prior on the amplitude state
  double amplitude_hi = 40.0;
};

// (position, amplitude) point in feature space; also the particle payload.
struct FeatureState {
  Point2 position;
  double amplitude = 0.0;
};

inline void validate_measurement(const Measurement& z, const NoiseParams& np) {
  if (z.range < 0.0) throw std::invalid_argument("measurement: negative range");
  if (z.amplitude < np.gamma) {
    throw std::invalid_argument("measurement: amplitude below threshold");
  }
}

// P(amplitude exceeds gamma | feature amplitude u)
inline double detection_probability(double u, double gamma) {
  if (u < 0.0) throw std::domain_error("detection_probability: negative amplitude");
  if (gamma < 0.0) throw std::domain_error("detection_probability: negative gamma");
  return marcum_q1(u, gamma);  // gamma = 0 degenerates to certain detection
}

// log f(z | d, phi, u): Gaussian range, wrapped-Gaussian angle, truncated
// Rician amplitude. Noise stds scale with the measured amplitude.
inline double log_mpc_likelihood(const Measurement& z, double d, double phi,
                                 double u, const NoiseParams& np) {
  if (z.amplitude < np.gamma) {
    throw std::domain_error("mpc_likelihood: amplitude below threshold");
  }
  const double sd = np.sigma_d0 / z.amplitude;
  const double sp = np.sigma_phi0 / z.amplitude;
  return log_normal_pdf(z.range, d, sd) +
         log_normal_pdf(wrap_angle(z.aoa - phi), 0.0, sp) +
         log_rician_truncated_pdf(z.amplitude, u, np.gamma);
}

inline double mpc_likelihood(const Measurement& z, double d, double phi,
                             double u, const NoiseParams& np) {
  return std::exp(log_mpc_likelihood(z, d, phi, u, np));
}

// log f_fa(z): uniform range on [lo, hi], uniform angle, truncated Rayleigh
// amplitude. Integrates to one over the measurement space.
inline double log_fa_density(const Measurement& z, const FalseAlarmModel& fa,
                             const NoiseParams& np) {
  if (z.range < fa.range_lo || z.range > fa.range_hi) return neg_inf;
  return -std::log(fa.range_hi - fa.range_lo) -
         std::log(2.0 * std::numbers::pi) +
         log_rayleigh_truncated_pdf(z.amplitude, np.gamma);
}

inline double fa_density(const Measurement& z, const FalseAlarmModel& fa,
                         const NoiseParams& np) {
  return std::exp(log_fa_density(z, fa, np));
}

// log [ P_d(u) f(z | agent, feature) / (mu_fa f_fa(z)) ], the association
// evidence ratio every legacy hypothesis is built from.
inline double log_association_ratio(Point2 agent, const FeatureState& feat,
                                    const Measurement& z, const NoiseParams& np,
                                    const FalseAlarmModel& fa) {
  const double log_den = std::log(fa.mean) + log_fa_density(z, fa, np);
  if (log_den == neg_inf) {
    throw std::domain_error("association ratio: false-alarm density vanishes at z");
  }
  const auto ra = range_aoa(agent, feat.position);
  return std::log(detection_probability(feat.amplitude, np.gamma)) +
         log_mpc_likelihood(z, ra.range, ra.aoa, feat.amplitude, np) - log_den;
}

// Legacy-feature pseudo likelihood. c indexes the measurement claimed by the
// feature (0 = none); a nonexistent feature is pinned to c = 0.
inline double g_legacy(Point2 agent, const FeatureState& feat, bool exists,
                       int c, const std::vector<Measurement>& zs,
                       const NoiseParams& np, const FalseAlarmModel& fa) {
  if (c < 0 || c > static_cast<int>(zs.size())) {
    throw std::invalid_argument("g_legacy: association index out of range");
  }
  if (!exists) return c == 0 ? 1.0 : 0.0;
  if (c == 0) return 1.0;
  return std::exp(log_association_ratio(agent, feat, zs[c - 1], np, fa));
}

// New-feature pseudo likelihood for the measurement-oriented variable b.
// A measurement claimed by any legacy feature cannot seed a new one; a
// nonexistent new feature contributes the dummy constant.
inline double h_new(Point2 agent, const FeatureState& feat, bool exists, int b,
                    std::size_t n_legacy, const Measurement& z,
                    const NoiseParams& np, const FalseAlarmModel& fa) {
  if (b < 0 || b > static_cast<int>(n_legacy)) {
    throw std::invalid_argument("h_new: association index out of range");
  }
  if (!exists) return 1.0;
  if (b != 0) return 0.0;
  const double log_den = std::log(fa.mean) + log_fa_density(z, fa, np);
  if (log_den == neg_inf) {
    throw std::domain_error("h_new: false-alarm density vanishes at z");
  }
  const auto ra = range_aoa(agent, feat.position);
  return std::exp(log_mpc_likelihood(z, ra.range, ra.aoa, feat.amplitude, np) -
                  log_den);
}

}  // namespace mpslam
