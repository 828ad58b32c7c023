#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace mpslam {

// Deterministic random source. The engine is xoshiro256++ seeded through
// splitmix64, and every sampler below is spelled out explicitly instead of
// going through <random>: the std distributions are implementation-defined,
// which would break bit-reproducibility across standard libraries. Each
// sampler consumes a fixed number of raw draws (except the rejection loops,
// which are still deterministic for a given seed).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) {
      // splitmix64
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      word = z ^ (z >> 31);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1], safe under log()
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, cosine branch only: exactly two raw draws per call, no
  // cached spare, so the draw sequence does not depend on call history.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // unbiased to 2^-53, one raw draw
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  // inversion; fine for the small rates used here
  int poisson(double mean) {
    if (mean < 0.0) throw std::domain_error("poisson: negative mean");
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    int k = 0;
    while (u >= cdf && k < 10000) {
      ++k;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }

  // Rice(nu, 1): envelope of a unit-variance complex Gaussian with mean nu
  double rician(double nu) {
    const double a = nu + normal();
    const double b = normal();
    return std::sqrt(a * a + b * b);
  }

  // Rice(nu, 1) conditioned on exceeding gamma; rejection, capped so a
  // pathological nu cannot stall the simulator
  double rician_truncated(double nu, double gamma) {
    for (int i = 0; i < 100000; ++i) {
      const double x = rician(nu);
      if (x >= gamma) return x;
    }
    return gamma;
  }

  // Rayleigh conditioned on exceeding gamma; exact inverse-CDF, one draw
  double rayleigh_truncated(double gamma) {
    return std::sqrt(gamma * gamma - 2.0 * std::log(uniform_pos()));
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4]{};
};

}  // namespace mpslam
