#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mpslam/geometry.hpp"

// Evaluation metrics: per-step RMSE aggregated over runs, and the OSPA set
// distance between estimated and true feature sets (cutoff-clipped optimal
// assignment plus cardinality penalty). The exact assignment runs through a
// Hungarian solver; a factorial brute-force twin is kept as a test oracle.

namespace mpslam {

struct OspaParams {
  double cutoff = 1.0;  // c > 0, meters
  double order = 1.0;   // p >= 1
};

namespace detail {

// Hungarian algorithm with potentials, O(n^3), exact minimum-cost perfect
// matching on a square matrix. Returns col_of_row.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
  }
  return col_of_row;
}

inline void validate_ospa_params(const OspaParams& par) {
  if (!(par.cutoff > 0.0)) throw std::invalid_argument("ospa: cutoff must be > 0");
  if (!(par.order >= 1.0)) throw std::invalid_argument("ospa: order must be >= 1");
}

// clipped pairwise cost to the p-th power; dummy slots cost c^p
inline std::vector<std::vector<double>> ospa_cost_matrix(
    const std::vector<Point2>& small, const std::vector<Point2>& large,
    const OspaParams& par) {
  const std::size_t n = large.size();
  const double cp = std::pow(par.cutoff, par.order);
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, cp));
  for (std::size_t i = 0; i < small.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cost[i][j] = std::pow(std::min(par.cutoff, distance(small[i], large[j])),
                            par.order);
    }
  }
  return cost;
}

}  // namespace detail

inline double ospa(const std::vector<Point2>& est,
                   const std::vector<Point2>& truth,
                   const OspaParams& par = {}) {
  detail::validate_ospa_params(par);
  if (est.empty() && truth.empty()) return 0.0;
  const auto& small = est.size() <= truth.size() ? est : truth;
  const auto& large = est.size() <= truth.size() ? truth : est;
  const auto cost = detail::ospa_cost_matrix(small, large, par);
  const auto assign = detail::hungarian(cost);
  double total = 0.0;
  for (std::size_t i = 0; i < large.size(); ++i) total += cost[i][assign[i]];
  return std::pow(total / static_cast<double>(large.size()), 1.0 / par.order);
}

// Same quantity by trying every injection of the smaller set into the
// larger. Factorial; test oracle only.
inline double ospa_brute_force(const std::vector<Point2>& est,
                               const std::vector<Point2>& truth,
                               const OspaParams& par = {}) {
  detail::validate_ospa_params(par);
  if (est.empty() && truth.empty()) return 0.0;
  const auto& small = est.size() <= truth.size() ? est : truth;
  const auto& large = est.size() <= truth.size() ? truth : est;
  if (large.size() > 8) {
    throw std::invalid_argument("ospa_brute_force: refusing sets larger than 8");
  }
  const double cp = std::pow(par.cutoff, par.order);
  std::vector<std::size_t> perm(large.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < small.size(); ++i) {
      s += std::pow(std::min(par.cutoff, distance(small[i], large[perm[i]])),
                    par.order);
    }
    best = std::min(best, s + cp * static_cast<double>(large.size() - small.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best / static_cast<double>(large.size()), 1.0 / par.order);
}

// Per-step Euclidean errors of one run.
inline std::vector<double> per_step_errors(const std::vector<Point2>& est,
                                           const std::vector<Point2>& truth) {
  if (est.size() != truth.size()) {
    throw std::invalid_argument("per_step_errors: track length mismatch");
  }
  std::vector<double> out(est.size());
  for (std::size_t n = 0; n < est.size(); ++n) out[n] = distance(est[n], truth[n]);
  return out;
}

// Root mean square across runs, per step: errs is runs x steps.
inline std::vector<double> rmse(const std::vector<std::vector<double>>& errs) {
  if (errs.empty()) throw std::invalid_argument("rmse: no runs");
  const std::size_t steps = errs[0].size();
  std::vector<double> out(steps, 0.0);
  for (const auto& run : errs) {
    if (run.size() != steps) throw std::invalid_argument("rmse: ragged runs");
    for (std::size_t n = 0; n < steps; ++n) out[n] += run[n] * run[n];
  }
  for (double& v : out) v = std::sqrt(v / static_cast<double>(errs.size()));
  return out;
}

// Mean OSPA across runs, per step: vals is runs x steps.
inline std::vector<double> mospa(const std::vector<std::vector<double>>& vals) {
  if (vals.empty()) throw std::invalid_argument("mospa: no runs");
  const std::size_t steps = vals[0].size();
  std::vector<double> out(steps, 0.0);
  for (const auto& run : vals) {
    if (run.size() != steps) throw std::invalid_argument("mospa: ragged runs");
    for (std::size_t n = 0; n < steps; ++n) out[n] += run[n];
  }
  for (double& v : out) v /= static_cast<double>(vals.size());
  return out;
}

// Mean mode belief across runs; beliefs is runs x steps x modes. Rows of the
// result remain probability vectors.
inline std::vector<std::vector<double>> average_mode_belief(
    const std::vector<std::vector<std::vector<double>>>& beliefs) {
  if (beliefs.empty()) throw std::invalid_argument("average_mode_belief: no runs");
  const std::size_t steps = beliefs[0].size();
  const std::size_t modes = steps ? beliefs[0][0].size() : 0;
  std::vector<std::vector<double>> out(steps, std::vector<double>(modes, 0.0));
  for (const auto& run : beliefs) {
    if (run.size() != steps) {
      throw std::invalid_argument("average_mode_belief: ragged runs");
    }
    for (std::size_t n = 0; n < steps; ++n) {
      if (run[n].size() != modes) {
        throw std::invalid_argument("average_mode_belief: ragged modes");
      }
      for (std::size_t q = 0; q < modes; ++q) out[n][q] += run[n][q];
    }
  }
  for (auto& row : out) {
    for (double& v : row) v /= static_cast<double>(beliefs.size());
  }
  return out;
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty");
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
  double hi = xs[mid];
  if (xs.size() % 2 == 0) {
    std::nth_element(xs.begin(), xs.begin() + mid - 1, xs.begin() + mid);
    return 0.5 * (xs[mid - 1] + hi);
  }
  return hi;
}

}  // namespace mpslam
