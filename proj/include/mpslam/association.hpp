#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mpslam/stats.hpp"

// Probabilistic data association between K legacy features and M
// measurements. The joint event weight for a one-to-one association map c
// (feature k claims measurement c_k, 0 = none) is
//
//   W(c) = prod_k beta[k][c_k] * prod_{m unclaimed} xi[m]
//
// enumerate_da_oracle sums this exactly; spa_da runs the scaled
// message-passing scheme on the equivalent bipartite graph, which is exact
// on trees and convergent in general. docs/association.md derives the
// messages and the folding of xi into the feature weights.

namespace mpslam {

struct AssociationWeights {
  std::vector<std::vector<double>> beta;  // K x (M+1); beta[k][0] > 0
  std::vector<double> xi;                 // M, all > 0
};

struct AssociationMarginals {
  std::vector<std::vector<double>> p_c;     // K x (M+1), rows sum to 1
  std::vector<std::vector<double>> p_b;     // M x (K+1), rows sum to 1
  std::vector<std::vector<double>> log_nu;  // M x K, measurement -> feature
  std::vector<std::vector<double>> log_mu;  // K x M, feature -> measurement
  bool converged = true;
  int iterations = 0;
};

struct SpaOptions {
  double tol = 1e-8;
  int max_iter = 10000;
  double damping = 0.0;  // 0 = undamped synchronous updates
};

// Pairwise consistency indicator between the feature-oriented variable c_k
// and the measurement-oriented variable b_m (both 1-based indices k, m):
// zero exactly when one side claims the pairing and the other denies it.
inline int consistency(int c_k, int b_m, int k, int m) {
  const bool feature_claims = c_k == m;
  const bool measurement_claims = b_m == k;
  return feature_claims == measurement_claims ? 1 : 0;
}

namespace detail {

inline void validate_weights(const AssociationWeights& w) {
  const std::size_t m_count = w.xi.size();
  for (const auto& row : w.beta) {
    if (row.size() != m_count + 1) {
      throw std::invalid_argument("association: beta row has wrong width");
    }
    if (!(row[0] > 0.0)) {
      throw std::invalid_argument("association: beta[k][0] must be positive");
    }
    for (double v : row) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("association: beta entries must be finite and >= 0");
      }
    }
  }
  for (double v : w.xi) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("association: xi entries must be positive");
    }
  }
}

}  // namespace detail

// Exact marginals by enumerating every one-to-one association event.
// Exponential in K; refused beyond 8x8. Test oracle, not a runtime path.
inline AssociationMarginals enumerate_da_oracle(const AssociationWeights& w) {
  detail::validate_weights(w);
  const std::size_t K = w.beta.size();
  const std::size_t M = w.xi.size();
  if (K > 8 || M > 8) {
    throw std::invalid_argument("enumerate_da_oracle: refusing K or M > 8");
  }

  AssociationMarginals out;
  out.p_c.assign(K, std::vector<double>(M + 1, 0.0));
  out.p_b.assign(M, std::vector<double>(K + 1, 0.0));
  out.iterations = 0;

  std::vector<int> c(K, 0);
  std::vector<bool> used(M + 1, false);
  double total = 0.0;

  auto visit = [&](auto&& self, std::size_t k, double weight) -> void {
    if (k == K) {
      double ev = weight;
      for (std::size_t m = 1; m <= M; ++m) {
        if (!used[m]) ev *= w.xi[m - 1];
      }
      total += ev;
      for (std::size_t kk = 0; kk < K; ++kk) out.p_c[kk][c[kk]] += ev;
      for (std::size_t m = 1; m <= M; ++m) {
        int claimant = 0;
        for (std::size_t kk = 0; kk < K; ++kk) {
          if (c[kk] == static_cast<int>(m)) claimant = static_cast<int>(kk) + 1;
        }
        out.p_b[m - 1][claimant] += ev;
      }
      return;
    }
    for (int m = 0; m <= static_cast<int>(M); ++m) {
      if (m > 0 && used[m]) continue;
      if (m > 0) used[m] = true;
      c[k] = m;
      self(self, k + 1, weight * w.beta[k][m]);
      if (m > 0) used[m] = false;
    }
  };
  visit(visit, 0, 1.0);

  if (!(total > 0.0)) {
    throw std::runtime_error("enumerate_da_oracle: all events have zero weight");
  }
  for (auto& row : out.p_c) {
    for (double& v : row) v /= total;
  }
  for (auto& row : out.p_b) {
    for (double& v : row) v /= total;
  }
  return out;
}

// Scaled BP on the log-domain weights. log_beta is K x (M+1), log_xi is M.
// xi is folded into the feature weights (divide column m by xi[m]); the
// folded system has the same joint, and the returned log_nu is mapped back
// to the unfolded convention so callers can use it directly.
inline AssociationMarginals spa_da_log(
    const std::vector<std::vector<double>>& log_beta,
    const std::vector<double>& log_xi, const SpaOptions& opt = {}) {
  const std::size_t K = log_beta.size();
  const std::size_t M = log_xi.size();

  AssociationMarginals out;
  out.p_c.assign(K, std::vector<double>(M + 1, 0.0));
  out.p_b.assign(M, std::vector<double>(K + 1, 0.0));
  out.log_nu.assign(M, std::vector<double>(K, 0.0));
  out.log_mu.assign(K, std::vector<double>(M, neg_inf));

  // fold and shift each feature row so the largest entry is O(1)
  std::vector<std::vector<double>> B(K, std::vector<double>(M + 1));
  for (std::size_t k = 0; k < K; ++k) {
    double shift = log_beta[k][0];
    for (std::size_t m = 1; m <= M; ++m) {
      shift = std::max(shift, log_beta[k][m] - log_xi[m - 1]);
    }
    B[k][0] = std::exp(log_beta[k][0] - shift);
    for (std::size_t m = 1; m <= M; ++m) {
      B[k][m] = std::exp(log_beta[k][m] - log_xi[m - 1] - shift);
    }
  }

  std::vector<std::vector<double>> mu(K, std::vector<double>(M, 0.0));
  std::vector<std::vector<double>> nu(M, std::vector<double>(K, 1.0));

  int it = 0;
  bool converged = M == 0 || K == 0;
  // The exclusive sums are accumulated directly rather than as total minus
  // excluded term: once one feature owns a measurement its mu dwarfs the
  // rest of the sum and the subtraction cancels to zero, turning the next
  // quotient into inf and the iteration after that into NaN.
  while (!converged && it < opt.max_iter) {
    ++it;
    double change = 0.0;
    // measurement side: nu[m][k] = 1 / (1 + sum_{k' != k} mu[k'][m])
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t k = 0; k < K; ++k) {
        double s = 1.0;
        for (std::size_t k2 = 0; k2 < K; ++k2) {
          if (k2 != k) s += mu[k2][m];
        }
        double fresh = 1.0 / s;
        fresh = opt.damping * nu[m][k] + (1.0 - opt.damping) * fresh;
        change = std::max(change, std::abs(fresh - nu[m][k]) /
                                      std::max(nu[m][k], 1e-300));
        nu[m][k] = fresh;
      }
    }
    // feature side: mu[k][m] = B[k][m] / (B[k][0] + sum_{m' != m} B nu)
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t m = 0; m < M; ++m) {
        double s = B[k][0];
        for (std::size_t m2 = 0; m2 < M; ++m2) {
          if (m2 != m) s += B[k][m2 + 1] * nu[m2][k];
        }
        double fresh = B[k][m + 1] / std::max(s, 1e-300);
        fresh = opt.damping * mu[k][m] + (1.0 - opt.damping) * fresh;
        change = std::max(change, std::abs(fresh - mu[k][m]) /
                                      std::max(mu[k][m], 1e-300));
        mu[k][m] = fresh;
      }
    }
    converged = change < opt.tol;
  }
  out.converged = converged;
  out.iterations = it;

  for (std::size_t k = 0; k < K; ++k) {
    double norm = B[k][0];
    for (std::size_t m = 0; m < M; ++m) norm += B[k][m + 1] * nu[m][k];
    out.p_c[k][0] = B[k][0] / norm;
    for (std::size_t m = 0; m < M; ++m) {
      out.p_c[k][m + 1] = B[k][m + 1] * nu[m][k] / norm;
    }
  }
  for (std::size_t m = 0; m < M; ++m) {
    double norm = 1.0;
    for (std::size_t k = 0; k < K; ++k) norm += mu[k][m];
    out.p_b[m][0] = 1.0 / norm;
    for (std::size_t k = 0; k < K; ++k) out.p_b[m][k + 1] = mu[k][m] / norm;
  }
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = 0; k < K; ++k) {
      out.log_nu[m][k] = std::log(nu[m][k]) - log_xi[m];
      out.log_mu[k][m] = std::log(mu[k][m]);
    }
  }
  return out;
}

inline AssociationMarginals spa_da(const AssociationWeights& w,
                                   const SpaOptions& opt = {}) {
  detail::validate_weights(w);
  std::vector<std::vector<double>> log_beta(w.beta.size());
  for (std::size_t k = 0; k < w.beta.size(); ++k) {
    log_beta[k].resize(w.beta[k].size());
    for (std::size_t j = 0; j < w.beta[k].size(); ++j) {
      log_beta[k][j] = std::log(w.beta[k][j]);
    }
  }
  std::vector<double> log_xi(w.xi.size());
  for (std::size_t m = 0; m < w.xi.size(); ++m) log_xi[m] = std::log(w.xi[m]);
  return spa_da_log(log_beta, log_xi, opt);
}

}  // namespace mpslam
