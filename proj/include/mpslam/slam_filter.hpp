#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mpslam/association.hpp"
#include "mpslam/measurement_model.hpp"
#include "mpslam/rng.hpp"
#include "mpslam/scenario.hpp"
#include "mpslam/stats.hpp"

// Particle filter over the joint agent / feature-map posterior, one belief
// propagation sweep per step. The agent carries a per-particle motion mode
// sampled from a Markov chain (the multi-model part); features are per-anchor
// Bernoulli components with particle clouds over (position, amplitude).
//
// Monte Carlo pairing: agent particle i is paired with feature particle
// i % n_feature wherever an expectation over the product of the two beliefs
// is needed. Agent weights stay in log domain with max-shift normalization.
//
// Weight bookkeeping per anchor update (docs/association.md for the messages):
//   beta[k][m] = r * < P_d(u) f(z_m | agent, feat) / (mu_fa f_fa) >
//   beta[k][0] = (1 - r) + r * < 1 - P_d(u) >
//   xi[m]      = 1 + mu_n < f(z_m | agent, birth prior) / (mu_fa f_fa) >
// so the missed-detection and existence terms ride in column 0 and the
// birth/false-alarm split rides in xi.

namespace mpslam {

struct AgentParticle {
  Point2 position;
  Point2 velocity;
  int mode = 1;  // 1-based
};

struct PvaBelief {
  int anchor_id = 0;
  int label = 0;
  std::vector<FeatureState> particles;
  std::vector<double> weights;  // normalized, linear
  double existence = 0.0;
  // Physical anchors enter the map as features of known position: their
  // particles never receive regularization noise, they are never pruned,
  // and they are not reported as detections. Amplitude is still learned.
  bool known_position = false;
};

struct FilterState {
  std::vector<AgentParticle> agent;
  std::vector<double> agent_log_w;
  std::vector<std::vector<PvaBelief>> features;  // per anchor
  std::vector<int> labels_assigned;              // per anchor, cumulative
  // configuration snapshot
  std::vector<Anchor> anchors;
  ModeModel modes;
  NoiseParams noise;
  FalseAlarmModel fa;
  BirthModel birth;
  FilterParams params;
};

struct FeatureEstimate {
  int label = 0;
  Point2 position;
  double amplitude = 0.0;
  double existence = 0.0;
};

struct StateEstimate {
  Point2 position;
  Point2 velocity;
  std::vector<double> mode_pmf;
  double mmse_mode = 1.0;  // sum_q q * pmf[q]
  int map_mode = 1;
  std::vector<std::vector<FeatureEstimate>> features;  // per anchor, existence > p_de
};

inline double effective_sample_size(const std::vector<double>& weights) {
  double sum = 0.0;
  double sum2 = 0.0;
  for (double w : weights) {
    sum += w;
    sum2 += w * w;
  }
  if (!(sum2 > 0.0)) {
    throw std::runtime_error("filter divergence: all weights are zero");
  }
  return sum * sum / sum2;
}

inline int sample_next_mode(const ModeModel& modes, int mode, Rng& rng) {
  const std::size_t q_count = modes.transition.size();
  if (q_count == 1) return 1;  // no draw: single-mode runs are plain PF runs
  const double u = rng.uniform();
  double cum = 0.0;
  const auto& row = modes.transition[mode - 1];
  for (std::size_t q = 0; q < q_count; ++q) {
    cum += row[q];
    if (u < cum) return static_cast<int>(q) + 1;
  }
  return static_cast<int>(q_count);
}

namespace detail {

inline std::vector<double> normalized_agent_weights(const FilterState& st) {
  double mx = neg_inf;
  for (double lw : st.agent_log_w) mx = std::max(mx, lw);
  if (mx == neg_inf) {
    throw std::runtime_error("filter divergence: all agent weights vanished");
  }
  std::vector<double> w(st.agent_log_w.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(st.agent_log_w[i] - mx);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

inline std::vector<std::size_t> systematic_indices(
    const std::vector<double>& weights, std::size_t n_out, Rng& rng) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (!(sum > 0.0)) {
    throw std::runtime_error("filter divergence: all weights are zero");
  }
  const double u0 = rng.uniform();
  std::vector<std::size_t> idx(n_out);
  double cum = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double target = sum * (static_cast<double>(i) + u0) /
                          static_cast<double>(n_out);
    while (cum < target && j + 1 < weights.size()) cum += weights[++j];
    idx[i] = j;
  }
  return idx;
}

inline double log1p_exp(double x) {
  if (x > 50.0) return x;
  return std::log1p(std::exp(x));
}

// Weighted position moments of a particle cloud. The per-particle messages
// integrate the opposite belief through this Gaussian projection instead of
// pairing random samples: paired estimates inject sampling noise into every
// log-weight, which swamps the small per-step likelihood contrasts the mode
// posterior feeds on.
struct CloudGauss {
  Point2 mean{};
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
};

template <class GetPos>
inline CloudGauss moment_match(std::size_t n, const GetPos& pos,
                               const std::vector<double>& w) {
  CloudGauss g;
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 p = pos(i);
    g.mean.x += w[i] * p.x;
    g.mean.y += w[i] * p.y;
    wsum += w[i];
  }
  g.mean.x /= wsum;
  g.mean.y /= wsum;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 p = pos(i);
    const double dx = p.x - g.mean.x;
    const double dy = p.y - g.mean.y;
    g.sxx += w[i] * dx * dx;
    g.sxy += w[i] * dx * dy;
    g.syy += w[i] * dy * dy;
  }
  g.sxx /= wsum;
  g.sxy /= wsum;
  g.syy /= wsum;
  return g;
}

// Range/bearing likelihood of one measurement seen from `from`, with the
// opposite cloud's spread folded into the noise variances: its along-range
// component widens the range channel, the cross component widens bearing by
// 1/d. Exact for a Gaussian cloud, cheap everywhere else.
inline double log_projected_pos_likelihood(const Point2& from,
                                           const CloudGauss& g,
                                           const Measurement& z, double sd2,
                                           double sp2) {
  const double dx = g.mean.x - from.x;
  const double dy = g.mean.y - from.y;
  double d = std::hypot(dx, dy);
  if (d < 1e-9) d = 1e-9;
  const double ex = dx / d;
  const double ey = dy / d;
  double var_al = ex * ex * g.sxx + 2.0 * ex * ey * g.sxy + ey * ey * g.syy;
  if (var_al < 0.0) var_al = 0.0;
  double var_cr = g.sxx + g.syy - var_al;
  if (var_cr < 0.0) var_cr = 0.0;
  const double var_d = sd2 + var_al;
  const double var_p = sp2 + var_cr / (d * d);
  const double zd = z.range - d;
  const double za = wrap_angle(z.aoa - std::atan2(dy, dx));
  return -0.5 * (zd * zd / var_d + za * za / var_p) -
         0.5 * std::log(var_d) - 0.5 * std::log(var_p) -
         std::log(2.0 * std::numbers::pi);
}

// Birth-prior integral of the position likelihood: integrating the range and
// angle Gaussians over a uniform square prior collapses to the polar
// Jacobian d_hat / area as long as the range annulus around the agent stays
// inside the prior region (true for every scenario here). The amplitude
// factor is a 1-D integral over the uniform amplitude prior, done by
// midpoint rule.
inline double log_birth_likelihood(const Measurement& z, const BirthModel& birth,
                                   const NoiseParams& np) {
  const double area = 4.0 * birth.region_half_width * birth.region_half_width;
  const double log_pos = std::log(z.range) - std::log(area);
  const int n_grid = 128;
  const double width = birth.amplitude_hi - birth.amplitude_lo;
  const double h = width / n_grid;
  double acc = neg_inf;
  for (int i = 0; i < n_grid; ++i) {
    const double u = birth.amplitude_lo + (i + 0.5) * h;
    acc = log_sum_exp(acc, log_rician_truncated_pdf(z.amplitude, u, np.gamma));
  }
  const double log_amp = acc + std::log(h) - std::log(width);
  return log_pos + log_amp;
}

}  // namespace detail

inline FilterState init_filter(const Scenario& sc, Rng& rng) {
  FilterState st;
  st.anchors = sc.anchors;
  st.modes = sc.modes;
  st.noise = sc.noise;
  st.fa = sc.false_alarms;
  st.birth = sc.birth;
  st.params = sc.filter;
  const Point2 p0 = sc.track.at(0);
  const std::size_t q_count = sc.modes.transition.size();
  st.agent.resize(sc.filter.n_agent);
  st.agent_log_w.assign(sc.filter.n_agent, 0.0);
  for (auto& p : st.agent) {
    p.position.x = p0.x + rng.uniform(-sc.filter.init_pos_half_width,
                                      sc.filter.init_pos_half_width);
    p.position.y = p0.y + rng.uniform(-sc.filter.init_pos_half_width,
                                      sc.filter.init_pos_half_width);
    p.velocity.x = rng.uniform(-sc.filter.init_vel_half_width,
                               sc.filter.init_vel_half_width);
    p.velocity.y = rng.uniform(-sc.filter.init_vel_half_width,
                               sc.filter.init_vel_half_width);
    p.mode = q_count == 1 ? 1 : static_cast<int>(rng.index(q_count)) + 1;
  }
  st.features.assign(sc.anchors.size(), {});
  st.labels_assigned.assign(sc.anchors.size(), 0);
  // the transmitters themselves: position known exactly, amplitude unknown
  for (std::size_t a = 0; a < sc.anchors.size(); ++a) {
    PvaBelief pa;
    pa.anchor_id = sc.anchors[a].id;
    pa.label = 0;
    pa.known_position = true;
    pa.existence = 1.0 - 1e-12;
    pa.particles.resize(sc.filter.n_feature);
    pa.weights.assign(sc.filter.n_feature,
                      1.0 / static_cast<double>(sc.filter.n_feature));
    for (auto& part : pa.particles) {
      part.position = sc.anchors[a].position;
      part.amplitude =
          rng.uniform(sc.birth.amplitude_lo, sc.birth.amplitude_hi);
    }
    st.features[a].push_back(std::move(pa));
  }
  return st;
}

// Mode-conditioned near-constant-velocity transition for the agent, survival
// decay plus regularization noise for the features. Draw order: agent
// particles first, then anchors, features, particles in index order.
inline void predict(FilterState& st, Rng& rng) {
  const double dt = st.modes.dt;
  for (auto& p : st.agent) {
    p.mode = sample_next_mode(st.modes, p.mode, rng);
    const double sw = st.modes.sigma_w.at(p.mode - 1);
    const double wx = sw * rng.normal();
    const double wy = sw * rng.normal();
    p.position.x += p.velocity.x * dt + 0.5 * wx * dt * dt;
    p.position.y += p.velocity.y * dt + 0.5 * wy * dt * dt;
    p.velocity.x += wx * dt;
    p.velocity.y += wy * dt;
  }
  for (auto& anchor_feats : st.features) {
    for (auto& f : anchor_feats) {
      for (auto& part : f.particles) {
        if (!f.known_position) {
          part.position.x += st.params.position_jitter * rng.normal();
          part.position.y += st.params.position_jitter * rng.normal();
        }
        part.amplitude =
            std::abs(part.amplitude + st.params.amplitude_walk * rng.normal());
      }
      if (!f.known_position) f.existence *= st.params.survival;
    }
  }
}

// One belief-propagation measurement update for a single anchor.
inline void update_anchor(FilterState& st, std::size_t anchor_idx,
                          const std::vector<Measurement>& zs, Rng& rng) {
  auto& feats = st.features.at(anchor_idx);
  const std::size_t n_agent = st.agent.size();
  const std::size_t n_feat = static_cast<std::size_t>(st.params.n_feature);
  const std::size_t K = feats.size();
  const std::size_t M = zs.size();
  for (const auto& z : zs) validate_measurement(z, st.noise);

  const std::vector<double> v = detail::normalized_agent_weights(st);
  std::vector<double> log_v(n_agent);
  for (std::size_t i = 0; i < n_agent; ++i) {
    log_v[i] = v[i] > 0.0 ? std::log(v[i]) : neg_inf;
  }

  std::vector<double> log_fa_term(M);
  for (std::size_t m = 0; m < M; ++m) {
    const double lfa = log_fa_density(zs[m], st.fa, st.noise);
    if (lfa == neg_inf) {
      throw std::domain_error("update_anchor: measurement outside false-alarm support");
    }
    log_fa_term[m] = std::log(st.fa.mean) + lfa;
  }

  // per-measurement Gaussian normalizers for the position factor, hoisted
  // out of the particle loops
  std::vector<double> inv_sd(M), inv_sp(M), log_pos_norm(M);
  for (std::size_t m = 0; m < M; ++m) {
    const double sd = st.noise.sigma_d0 / zs[m].amplitude;
    const double sp = st.noise.sigma_phi0 / zs[m].amplitude;
    inv_sd[m] = 1.0 / sd;
    inv_sp[m] = 1.0 / sp;
    log_pos_norm[m] =
        -std::log(sd) - std::log(sp) - std::log(2.0 * std::numbers::pi);
  }

  // per-feature caches: detection terms per feature particle, paired
  // position likelihoods for the joint association-weight integrals,
  // amplitude likelihoods per feature particle (the amplitude factor does
  // not involve the agent)
  std::vector<std::vector<double>> log_pd(K), log_miss(K), log_q(K);
  std::vector<std::vector<double>> ll_pos(K);  // n_agent x M, flattened
  std::vector<std::vector<double>> ll_amp(K);  // n_feat x M, flattened
  for (std::size_t k = 0; k < K; ++k) {
    const auto& f = feats[k];
    log_pd[k].resize(n_feat);
    log_miss[k].resize(n_feat);
    log_q[k].resize(n_feat);
    ll_amp[k].assign(n_feat * M, 0.0);
    for (std::size_t j = 0; j < n_feat; ++j) {
      const double pd = std::min(
          detection_probability(f.particles[j].amplitude, st.noise.gamma),
          1.0 - 1e-15);
      log_pd[k][j] = std::log(pd);
      log_miss[k][j] = std::log1p(-pd);
      log_q[k][j] = f.weights[j] > 0.0
                        ? std::log(f.weights[j] * static_cast<double>(n_feat))
                        : neg_inf;
      for (std::size_t m = 0; m < M; ++m) {
        // truncated Rician; the truncation normalizer is log_pd
        ll_amp[k][j * M + m] =
            log_rician_pdf(zs[m].amplitude, f.particles[j].amplitude) -
            log_pd[k][j];
      }
    }
    ll_pos[k].assign(n_agent * M, 0.0);
    for (std::size_t i = 0; i < n_agent; ++i) {
      const std::size_t j = i % n_feat;
      const auto ra = range_aoa(st.agent[i].position, f.particles[j].position);
      for (std::size_t m = 0; m < M; ++m) {
        const double zd = (zs[m].range - ra.range) * inv_sd[m];
        const double za = wrap_angle(zs[m].aoa - ra.aoa) * inv_sp[m];
        ll_pos[k][i * M + m] = -0.5 * (zd * zd + za * za) + log_pos_norm[m];
      }
    }
  }

  // association weights
  std::vector<std::vector<double>> log_beta(K, std::vector<double>(M + 1));
  std::vector<double> scratch(n_agent);
  for (std::size_t k = 0; k < K; ++k) {
    const double r = feats[k].existence;
    const double log_r = std::log(r);
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t i = 0; i < n_agent; ++i) {
        const std::size_t j = i % n_feat;
        scratch[i] = log_v[i] + log_q[k][j] + log_pd[k][j] +
                     ll_pos[k][i * M + m] + ll_amp[k][j * M + m];
      }
      log_beta[k][m + 1] = log_r + log_sum_exp(scratch) - log_fa_term[m];
    }
    for (std::size_t i = 0; i < n_agent; ++i) {
      const std::size_t j = i % n_feat;
      scratch[i] = log_v[i] + log_q[k][j] + log_miss[k][j];
    }
    log_beta[k][0] = log_sum_exp(std::log1p(-r), log_r + log_sum_exp(scratch));
  }

  std::vector<double> log_birth(M), log_xi(M);
  for (std::size_t m = 0; m < M; ++m) {
    log_birth[m] = std::log(st.birth.mean) +
                   detail::log_birth_likelihood(zs[m], st.birth, st.noise) -
                   log_fa_term[m];
    log_xi[m] = detail::log1p_exp(log_birth[m]);
  }

  const AssociationMarginals da = spa_da_log(log_beta, log_xi);

  // agent reweight: product over features of the DA-marginalized message,
  // with each feature belief integrated out through its moment-matched
  // Gaussian. The amplitude and miss factors do not involve the agent, so
  // they marginalize once per feature; note pd cancels against the truncated
  // Rician normalizer inside the detection branch.
  std::vector<double> sd2(M), sp2(M);
  for (std::size_t m = 0; m < M; ++m) {
    sd2[m] = 1.0 / (inv_sd[m] * inv_sd[m]);
    sp2[m] = 1.0 / (inv_sp[m] * inv_sp[m]);
  }
  const double log_nf = std::log(static_cast<double>(n_feat));
  std::vector<detail::CloudGauss> fg(K);
  std::vector<double> miss_msg(K);
  std::vector<std::vector<double>> amp_msg(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& f = feats[k];
    fg[k] = detail::moment_match(
        n_feat, [&](std::size_t j) { return f.particles[j].position; },
        f.weights);
    double acc = neg_inf;
    for (std::size_t j = 0; j < n_feat; ++j) {
      acc = log_sum_exp(acc, log_q[k][j] + log_miss[k][j]);
    }
    miss_msg[k] = acc - log_nf;
    amp_msg[k].assign(M, neg_inf);
    for (std::size_t j = 0; j < n_feat; ++j) {
      for (std::size_t m = 0; m < M; ++m) {
        amp_msg[k][m] = log_sum_exp(
            amp_msg[k][m], log_q[k][j] + log_pd[k][j] + ll_amp[k][j * M + m]);
      }
    }
    for (std::size_t m = 0; m < M; ++m) amp_msg[k][m] -= log_nf;
  }
  std::vector<double> inner(M);
  for (std::size_t i = 0; i < n_agent; ++i) {
    double add = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double r = feats[k].existence;
      double assoc = miss_msg[k];
      for (std::size_t m = 0; m < M; ++m) {
        inner[m] = da.log_nu[m][k] + amp_msg[k][m] +
                   detail::log_projected_pos_likelihood(
                       st.agent[i].position, fg[k], zs[m], sd2[m], sp2[m]) -
                   log_fa_term[m];
      }
      if (M > 0) assoc = log_sum_exp(assoc, log_sum_exp(inner));
      add += log_sum_exp(std::log1p(-r), std::log(r) + assoc);
    }
    st.agent_log_w[i] += add;
  }
  double shift = neg_inf;
  for (double lw : st.agent_log_w) shift = std::max(shift, lw);
  for (double& lw : st.agent_log_w) lw -= shift;

  // feature reweight and existence update; the agent belief enters through
  // its own moment-matched Gaussian, under the pre-update weights v (the
  // update above is this anchor's own message)
  const detail::CloudGauss ag = detail::moment_match(
      n_agent, [&](std::size_t i) { return st.agent[i].position; }, v);
  for (std::size_t k = 0; k < K; ++k) {
    auto& f = feats[k];
    const double r = f.existence;
    std::vector<double> log_a(n_feat, neg_inf);
    for (std::size_t j = 0; j < n_feat; ++j) {
      double assoc = log_miss[k][j];
      for (std::size_t m = 0; m < M; ++m) {
        // relative-vector distribution: feature particle fixed, agent spread
        const detail::CloudGauss rel{f.particles[j].position, ag.sxx, ag.sxy,
                                     ag.syy};
        const double avg = detail::log_projected_pos_likelihood(
            ag.mean, rel, zs[m], sd2[m], sp2[m]);
        assoc = log_sum_exp(assoc, da.log_nu[m][k] + log_pd[k][j] + avg +
                                       ll_amp[k][j * M + m] - log_fa_term[m]);
      }
      log_a[j] = assoc;
    }
    double log_mass = neg_inf;
    for (std::size_t j = 0; j < n_feat; ++j) {
      const double lw = (f.weights[j] > 0.0 ? std::log(f.weights[j]) : neg_inf) +
                        log_a[j];
      log_mass = log_sum_exp(log_mass, lw);
      log_a[j] = lw;
    }
    const double log_exist = std::log(r) + log_mass;
    if (!f.known_position) {
      f.existence = std::min(1.0 / (1.0 + std::exp(std::log1p(-r) - log_exist)),
                             1.0 - 1e-12);
    }
    double mx = neg_inf;
    for (double lw : log_a) mx = std::max(mx, lw);
    if (mx == neg_inf) {
      throw std::runtime_error("filter divergence: feature weights vanished");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n_feat; ++j) {
      f.weights[j] = std::exp(log_a[j] - mx);
      sum += f.weights[j];
    }
    for (double& w : f.weights) w /= sum;
  }

  // one new feature per measurement, positions drawn by pushing agent
  // particles through the measurement, amplitudes proposed around the
  // measured one and reweighted against the truncated Rician
  std::vector<double> agent_cum(n_agent);
  double cum = 0.0;
  for (std::size_t i = 0; i < n_agent; ++i) {
    cum += v[i];
    agent_cum[i] = cum;
  }
  for (std::size_t m = 0; m < M; ++m) {
    PvaBelief nf;
    nf.anchor_id = st.anchors[anchor_idx].id;
    nf.label = ++st.labels_assigned[anchor_idx];
    nf.particles.resize(n_feat);
    nf.weights.assign(n_feat, 0.0);
    const double sd = st.noise.sigma_d0 / zs[m].amplitude;
    const double sp = st.noise.sigma_phi0 / zs[m].amplitude;
    double wsum = 0.0;
    for (std::size_t t = 0; t < n_feat; ++t) {
      const double u = rng.uniform();
      const std::size_t ai =
          std::lower_bound(agent_cum.begin(), agent_cum.end(),
                           u * agent_cum.back()) -
          agent_cum.begin();
      const double d = zs[m].range + sd * rng.normal();
      const double phi = zs[m].aoa + sp * rng.normal();
      const double amp = zs[m].amplitude + rng.normal();
      auto& part = nf.particles[t];
      part.position.x = st.agent[ai].position.x + d * std::cos(phi);
      part.position.y = st.agent[ai].position.y + d * std::sin(phi);
      part.amplitude = amp;
      const bool in_region =
          std::abs(part.position.x - st.birth.region_center.x) <=
              st.birth.region_half_width &&
          std::abs(part.position.y - st.birth.region_center.y) <=
              st.birth.region_half_width;
      const bool in_amp =
          amp >= st.birth.amplitude_lo && amp <= st.birth.amplitude_hi;
      if (in_region && in_amp && d > 0.0) {
        // target RiceTrunc(z_amp; amp) over proposal N(amp; z_amp, 1),
        // plus the polar Jacobian from the position transform
        const double lw = std::log(d) +
                          log_rician_truncated_pdf(zs[m].amplitude, amp,
                                                   st.noise.gamma) -
                          log_normal_pdf(amp, zs[m].amplitude, 1.0);
        nf.weights[t] = std::exp(lw - std::log(zs[m].range));
      }
      wsum += nf.weights[t];
    }
    if (wsum > 0.0) {
      for (double& w : nf.weights) w /= wsum;
      nf.existence = std::min(
          da.p_b[m][0] * std::exp(log_birth[m] - log_xi[m]), 1.0 - 1e-12);
    } else {
      nf.weights.assign(n_feat, 1.0 / static_cast<double>(n_feat));
      nf.existence = 0.0;
    }
    feats.push_back(std::move(nf));
  }

  // prune; known-position features stay regardless of existence
  std::erase_if(feats, [&](const PvaBelief& f) {
    return !f.known_position && f.existence < st.params.prune_threshold;
  });
}

// Agent particles resample every step; feature clouds only when depleted.
inline void resample(FilterState& st, Rng& rng) {
  const std::vector<double> v = detail::normalized_agent_weights(st);
  const auto idx = detail::systematic_indices(v, st.agent.size(), rng);
  std::vector<AgentParticle> fresh(st.agent.size());
  for (std::size_t i = 0; i < idx.size(); ++i) fresh[i] = st.agent[idx[i]];
  st.agent = std::move(fresh);
  std::fill(st.agent_log_w.begin(), st.agent_log_w.end(), 0.0);

  for (auto& anchor_feats : st.features) {
    for (auto& f : anchor_feats) {
      if (effective_sample_size(f.weights) >=
          static_cast<double>(f.weights.size()) / 2.0) {
        continue;
      }
      const auto fidx = detail::systematic_indices(f.weights, f.weights.size(), rng);
      std::vector<FeatureState> fp(f.particles.size());
      for (std::size_t t = 0; t < fidx.size(); ++t) fp[t] = f.particles[fidx[t]];
      f.particles = std::move(fp);
      f.weights.assign(f.weights.size(), 1.0 / static_cast<double>(f.weights.size()));
    }
  }
}

inline StateEstimate estimate(const FilterState& st) {
  const std::vector<double> v = detail::normalized_agent_weights(st);
  StateEstimate est;
  est.mode_pmf.assign(st.modes.transition.size(), 0.0);
  for (std::size_t i = 0; i < st.agent.size(); ++i) {
    est.position.x += v[i] * st.agent[i].position.x;
    est.position.y += v[i] * st.agent[i].position.y;
    est.velocity.x += v[i] * st.agent[i].velocity.x;
    est.velocity.y += v[i] * st.agent[i].velocity.y;
    est.mode_pmf[st.agent[i].mode - 1] += v[i];
  }
  est.mmse_mode = 0.0;
  for (std::size_t q = 0; q < est.mode_pmf.size(); ++q) {
    est.mmse_mode += static_cast<double>(q + 1) * est.mode_pmf[q];
    if (est.mode_pmf[q] > est.mode_pmf[est.map_mode - 1]) {
      est.map_mode = static_cast<int>(q) + 1;
    }
  }
  est.features.resize(st.features.size());
  for (std::size_t a = 0; a < st.features.size(); ++a) {
    for (const auto& f : st.features[a]) {
      if (f.known_position) continue;
      if (f.existence <= st.params.detect_threshold) continue;
      FeatureEstimate fe;
      fe.label = f.label;
      fe.existence = f.existence;
      for (std::size_t j = 0; j < f.particles.size(); ++j) {
        fe.position.x += f.weights[j] * f.particles[j].position.x;
        fe.position.y += f.weights[j] * f.particles[j].position.y;
        fe.amplitude += f.weights[j] * f.particles[j].amplitude;
      }
      est.features[a].push_back(fe);
    }
  }
  return est;
}

// predict -> per-anchor updates in index order -> resample -> estimate
inline StateEstimate filter_step(FilterState& st,
                                 const std::vector<std::vector<Measurement>>& zs,
                                 Rng& rng) {
  if (zs.size() != st.anchors.size()) {
    throw std::invalid_argument("filter_step: one measurement set per anchor required");
  }
  predict(st, rng);
  for (std::size_t a = 0; a < st.anchors.size(); ++a) {
    update_anchor(st, a, zs[a], rng);
  }
  resample(st, rng);
  return estimate(st);
}

}  // namespace mpslam
