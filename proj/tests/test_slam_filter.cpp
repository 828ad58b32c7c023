#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mpslam/simulator.hpp"
#include "mpslam/slam_filter.hpp"

using namespace mpslam;
using Catch::Approx;

namespace {

Scenario small_default(int n_agent, int n_feature) {
  Scenario sc = build_default_scenario();
  sc.filter.n_agent = n_agent;
  sc.filter.n_feature = n_feature;
  return sc;
}

// feature cloud clustered around a point, uniform weights
PvaBelief make_feature(int label, Point2 center, double amp, double existence,
                       std::size_t n, Rng& rng, double spread = 1e-3) {
  PvaBelief f;
  f.label = label;
  f.existence = existence;
  f.particles.resize(n);
  f.weights.assign(n, 1.0 / static_cast<double>(n));
  for (auto& p : f.particles) {
    p.position.x = center.x + spread * rng.normal();
    p.position.y = center.y + spread * rng.normal();
    p.amplitude = amp + 0.01 * rng.normal();
  }
  return f;
}

}  // namespace

TEST_CASE("effective sample size closed forms") {
  CHECK(effective_sample_size({0.5, 0.25, 0.25}) == Approx(8.0 / 3.0).epsilon(1e-12));
  // scale invariance
  CHECK(effective_sample_size({2.0, 1.0, 1.0}) == Approx(8.0 / 3.0).epsilon(1e-12));
  CHECK(effective_sample_size(std::vector<double>(64, 1.0 / 64.0)) ==
        Approx(64.0).epsilon(1e-12));
  CHECK(effective_sample_size({0.0, 1.0, 0.0}) == Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(effective_sample_size({0.0, 0.0}), std::runtime_error);
}

TEST_CASE("single-mode chain consumes no randomness") {
  ModeModel single;
  single.transition = {{1.0}};
  single.sigma_w = {0.01};
  Rng a(11), b(11);
  CHECK(sample_next_mode(single, 1, a) == 1);
  CHECK(a.next_u64() == b.next_u64());  // the call drew nothing
}

TEST_CASE("mode transitions follow the chain") {
  ModeModel identity;
  identity.transition = {{1.0, 0.0}, {0.0, 1.0}};
  identity.sigma_w = {0.01, 0.02};
  Rng rng(3);
  int m = 2;
  for (int i = 0; i < 200; ++i) {
    m = sample_next_mode(identity, m, rng);
    REQUIRE(m == 2);
  }

  ModeModel flip;
  flip.transition = {{0.0, 1.0}, {1.0, 0.0}};
  flip.sigma_w = {0.01, 0.02};
  m = 1;
  for (int i = 0; i < 10; ++i) {
    const int next = sample_next_mode(flip, m, rng);
    REQUIRE(next == 3 - m);
    m = next;
  }

  ModeModel soft;
  soft.transition = {{0.3, 0.7}, {0.5, 0.5}};
  soft.sigma_w = {0.01, 0.02};
  int stay = 0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    if (sample_next_mode(soft, 1, rng) == 1) ++stay;
  }
  CHECK(std::abs(static_cast<double>(stay) / draws - 0.3) < 0.02);
}

TEST_CASE("initial state is a uniform cloud around the track start") {
  const Scenario sc = small_default(2000, 100);
  Rng rng(77);
  const FilterState st = init_filter(sc, rng);

  REQUIRE(st.agent.size() == 2000);
  REQUIRE(st.agent_log_w.size() == 2000);
  const Point2 p0 = sc.track[0];
  double mean_x = 0.0;
  int mode2 = 0;
  for (std::size_t i = 0; i < st.agent.size(); ++i) {
    CHECK(st.agent_log_w[i] == 0.0);
    const auto& p = st.agent[i];
    CHECK(std::abs(p.position.x - p0.x) <= sc.filter.init_pos_half_width);
    CHECK(std::abs(p.position.y - p0.y) <= sc.filter.init_pos_half_width);
    CHECK(std::abs(p.velocity.x) <= sc.filter.init_vel_half_width);
    CHECK(std::abs(p.velocity.y) <= sc.filter.init_vel_half_width);
    REQUIRE((p.mode == 1 || p.mode == 2));
    if (p.mode == 2) ++mode2;
    mean_x += p.position.x;
  }
  mean_x /= static_cast<double>(st.agent.size());
  CHECK(std::abs(mean_x - p0.x) < 0.01);
  CHECK(std::abs(mode2 / 2000.0 - 0.5) < 0.05);

  // each anchor starts with its own transmitter as a known-position feature
  for (std::size_t a = 0; a < st.features.size(); ++a) {
    REQUIRE(st.features[a].size() == 1);
    const auto& pa = st.features[a][0];
    CHECK(pa.known_position);
    CHECK(pa.label == 0);
    CHECK(pa.existence == 1.0 - 1e-12);
    REQUIRE(pa.particles.size() == 100);
    for (const auto& part : pa.particles) {
      CHECK(part.position.x == sc.anchors[a].position.x);
      CHECK(part.position.y == sc.anchors[a].position.y);
      CHECK(part.amplitude >= sc.birth.amplitude_lo);
      CHECK(part.amplitude <= sc.birth.amplitude_hi);
    }
  }
  for (int l : st.labels_assigned) CHECK(l == 0);

  // single-mode variant pins every particle to mode 1
  Rng rng2(77);
  const FilterState st1 = init_filter(single_mode_variant(sc), rng2);
  for (const auto& p : st1.agent) REQUIRE(p.mode == 1);
}

TEST_CASE("prediction drifts particles by their velocity") {
  Scenario sc = small_default(50, 10);
  sc.modes.sigma_w = {1e-12, 1e-12};
  Rng rng(5);
  FilterState st = init_filter(sc, rng);
  const FilterState before = st;
  predict(st, rng);
  for (std::size_t i = 0; i < st.agent.size(); ++i) {
    const auto& b = before.agent[i];
    CHECK(st.agent[i].position.x ==
          Approx(b.position.x + b.velocity.x * sc.modes.dt).margin(1e-9));
    CHECK(st.agent[i].position.y ==
          Approx(b.position.y + b.velocity.y * sc.modes.dt).margin(1e-9));
    CHECK(st.agent[i].velocity.x == Approx(b.velocity.x).margin(1e-9));
  }
}

TEST_CASE("identity transition matrix freezes modes") {
  Scenario sc = small_default(200, 10);
  sc.modes.transition = {{1.0, 0.0}, {0.0, 1.0}};
  Rng rng(6);
  FilterState st = init_filter(sc, rng);
  const std::vector<AgentParticle> before = st.agent;
  predict(st, rng);
  for (std::size_t i = 0; i < st.agent.size(); ++i) {
    CHECK(st.agent[i].mode == before[i].mode);
  }
}

TEST_CASE("prediction decays feature existence by the survival factor") {
  Scenario sc = small_default(20, 10);
  Rng rng(9);
  FilterState st = init_filter(sc, rng);
  st.features[0].push_back(make_feature(1, {1.0, 2.0}, 5.0, 0.8, 4, rng));
  predict(st, rng);
  CHECK(st.features[0][1].existence == 0.8 * sc.filter.survival);
  // the known transmitter neither decays nor picks up position noise
  CHECK(st.features[0][0].existence == 1.0 - 1e-12);
  CHECK(st.features[0][0].particles[0].position.x == sc.anchors[0].position.x);
}

TEST_CASE("single-mode prediction is a plain constant-velocity particle sweep") {
  const Scenario sc = single_mode_variant(small_default(150, 10));
  Rng ra(123), rb(123);
  FilterState st = init_filter(sc, ra);
  FilterState hand = init_filter(sc, rb);
  predict(st, ra);
  // same draws, by hand: two noise draws per particle, no mode draw
  const double dt = sc.modes.dt;
  const double sw = sc.modes.sigma_w[0];
  for (auto& p : hand.agent) {
    const double wx = sw * rb.normal();
    const double wy = sw * rb.normal();
    p.position.x += p.velocity.x * dt + 0.5 * wx * dt * dt;
    p.position.y += p.velocity.y * dt + 0.5 * wy * dt * dt;
    p.velocity.x += wx * dt;
    p.velocity.y += wy * dt;
  }
  for (std::size_t i = 0; i < st.agent.size(); ++i) {
    REQUIRE(st.agent[i].position.x == hand.agent[i].position.x);
    REQUIRE(st.agent[i].position.y == hand.agent[i].position.y);
    REQUIRE(st.agent[i].velocity.x == hand.agent[i].velocity.x);
    REQUIRE(st.agent[i].velocity.y == hand.agent[i].velocity.y);
    REQUIRE(st.agent[i].mode == 1);
  }
}

TEST_CASE("empty measurement set reduces to the analytic miss update") {
  const std::size_t n_feat = 60;
  Scenario sc = small_default(180, static_cast<int>(n_feat));
  Rng rng(31);
  FilterState st = init_filter(sc, rng);

  PvaBelief f;
  f.label = 1;
  f.existence = 0.6;
  f.particles.resize(n_feat);
  f.weights.resize(n_feat);
  double wsum = 0.0;
  for (std::size_t j = 0; j < n_feat; ++j) {
    f.particles[j].position = {3.0 + 0.1 * rng.normal(), 4.0 + 0.1 * rng.normal()};
    f.particles[j].amplitude = rng.uniform(2.5, 12.0);
    f.weights[j] = rng.uniform(0.1, 1.0);
    wsum += f.weights[j];
  }
  for (double& w : f.weights) w /= wsum;
  const PvaBelief saved = f;
  st.features[0].push_back(f);

  update_anchor(st, 0, {}, rng);
  REQUIRE(st.features[0].size() == 2);
  const PvaBelief& g = st.features[0][1];

  // Bernoulli miss update: r' = r S / (1 - r + r S), S = sum_j w_j (1 - pd_j)
  double S = 0.0;
  std::vector<double> expect_w(n_feat);
  for (std::size_t j = 0; j < n_feat; ++j) {
    const double pd =
        std::min(detection_probability(saved.particles[j].amplitude, sc.noise.gamma),
                 1.0 - 1e-15);
    expect_w[j] = saved.weights[j] * (1.0 - pd);
    S += expect_w[j];
  }
  CHECK(g.existence == Approx(0.6 * S / (0.4 + 0.6 * S)).epsilon(1e-12));
  for (std::size_t j = 0; j < n_feat; ++j) {
    CHECK(g.weights[j] == Approx(expect_w[j] / S).epsilon(1e-10));
  }

  // the miss message does not involve the agent position, so every agent
  // particle receives the same factor and the shifted log-weights vanish
  for (std::size_t i = 0; i < st.agent.size(); ++i) {
    CHECK(st.agent_log_w[i] == Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("a matching measurement drives existence toward one") {
  Scenario sc = small_default(300, 100);
  Rng rng(55);
  FilterState st = init_filter(sc, rng);

  // a mirror-like point well separated from the transmitter, so the known
  // feature sees the measurement as a pure miss
  const Point2 feat_pos{3.2, 2.6};
  const Point2 agent_true = sc.track[0];
  const auto ra = range_aoa(agent_true, feat_pos);
  const double u_true =
      amplitude_from_distance(ra.range, sc.amplitude.u_ref, sc.amplitude.d_ref);

  st.features[0].push_back(make_feature(1, feat_pos, u_true, 0.5, 100, rng));
  // far-away low-amplitude component that explains nothing
  const PvaBelief junk_before = make_feature(2, {-10.0, -10.0}, 2.2, 0.5, 100, rng);
  st.features[0].push_back(junk_before);

  const Measurement z{ra.range, ra.aoa, u_true};
  update_anchor(st, 0, {z}, rng);

  // newborn duplicate gets a near-zero birth share and is pruned
  REQUIRE(st.features[0].size() == 3);
  const PvaBelief& strong = st.features[0][1];
  const PvaBelief& junk = st.features[0][2];
  CHECK(strong.label == 1);
  CHECK(strong.existence > 0.99);

  // the junk component sees a pure miss: its measurement likelihood
  // underflows, so the Bernoulli miss update is exact to rounding
  double S = 0.0;
  for (std::size_t j = 0; j < junk_before.particles.size(); ++j) {
    const double pd = std::min(
        detection_probability(junk_before.particles[j].amplitude, sc.noise.gamma),
        1.0 - 1e-15);
    S += junk_before.weights[j] * (1.0 - pd);
  }
  CHECK(junk.existence == Approx(0.5 * S / (0.5 + 0.5 * S)).epsilon(1e-6));

  double sum = 0.0;
  for (double w : strong.weights) {
    CHECK(w >= 0.0);
    sum += w;
  }
  CHECK(sum == Approx(1.0).epsilon(1e-12));

  double mx = neg_inf;
  for (double lw : st.agent_log_w) mx = std::max(mx, lw);
  CHECK(mx == 0.0);
}

TEST_CASE("births claim unexplained measurements") {
  Scenario sc = small_default(200, 50);
  sc.filter.prune_threshold = 0.0;
  Rng rng(21);
  FilterState st = init_filter(sc, rng);

  const std::vector<Measurement> zs{{5.0, 0.3, 6.0}, {7.0, -1.2, 4.0}};
  update_anchor(st, 0, zs, rng);

  REQUIRE(st.features[0].size() == 2);
  CHECK(st.labels_assigned[0] == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& f = st.features[0][k];
    CHECK(f.label == static_cast<int>(k) + 1);
    CHECK(f.existence >= 0.0);
    CHECK(f.existence < 1.0);
    REQUIRE(f.particles.size() == 50);
    double sum = 0.0;
    for (double w : f.weights) sum += w;
    CHECK(sum == Approx(1.0).epsilon(1e-12));
  }

  // zero birth rate: the newborn component carries no existence mass
  Rng rng2(21);
  FilterState st2 = init_filter(sc, rng2);
  st2.birth.mean = 0.0;
  update_anchor(st2, 0, zs, rng2);
  REQUIRE(st2.features[0].size() == 2);
  for (const auto& f : st2.features[0]) CHECK(f.existence == 0.0);

  // with the default prune threshold those zero-mass newborns disappear
  Rng rng3(21);
  Scenario sc3 = sc;
  sc3.filter.prune_threshold = 1e-3;
  FilterState st3 = init_filter(sc3, rng3);
  st3.birth.mean = 0.0;
  update_anchor(st3, 0, zs, rng3);
  CHECK(st3.features[0].empty());
}

TEST_CASE("update with nothing to do leaves the state alone") {
  Scenario sc = small_default(40, 10);
  Rng rng(2);
  FilterState st = init_filter(sc, rng);
  update_anchor(st, 0, {}, rng);
  for (double lw : st.agent_log_w) CHECK(lw == 0.0);
  CHECK(st.features[0].empty());
}

TEST_CASE("update rejects malformed measurements") {
  Scenario sc = small_default(40, 10);
  Rng rng(2);
  FilterState st = init_filter(sc, rng);
  // amplitude below the detection threshold
  CHECK_THROWS_AS(update_anchor(st, 0, {{5.0, 0.1, 1.0}}, rng),
                  std::invalid_argument);
  // range outside the false-alarm support
  CHECK_THROWS_AS(update_anchor(st, 0, {{31.0, 0.1, 5.0}}, rng),
                  std::domain_error);
}

TEST_CASE("vanished agent weights surface as divergence") {
  Scenario sc = small_default(10, 5);
  Rng rng(4);
  FilterState st = init_filter(sc, rng);
  std::fill(st.agent_log_w.begin(), st.agent_log_w.end(), neg_inf);
  CHECK_THROWS_AS(update_anchor(st, 0, {}, rng), std::runtime_error);
  CHECK_THROWS_AS(resample(st, rng), std::runtime_error);
}

TEST_CASE("resampling uniform weights is the identity") {
  Scenario sc = small_default(64, 10);
  Rng rng(13);
  FilterState st = init_filter(sc, rng);
  const std::vector<AgentParticle> before = st.agent;
  resample(st, rng);
  for (std::size_t i = 0; i < st.agent.size(); ++i) {
    REQUIRE(st.agent[i].position.x == before[i].position.x);
    REQUIRE(st.agent[i].position.y == before[i].position.y);
    REQUIRE(st.agent[i].mode == before[i].mode);
  }
  for (double lw : st.agent_log_w) CHECK(lw == 0.0);
}

TEST_CASE("resampling a degenerate weight vector clones the survivor") {
  Scenario sc = small_default(32, 10);
  Rng rng(14);
  FilterState st = init_filter(sc, rng);
  std::fill(st.agent_log_w.begin(), st.agent_log_w.end(), neg_inf);
  st.agent_log_w[7] = 0.0;
  const AgentParticle survivor = st.agent[7];
  resample(st, rng);
  for (const auto& p : st.agent) {
    REQUIRE(p.position.x == survivor.position.x);
    REQUIRE(p.position.y == survivor.position.y);
  }
}

TEST_CASE("feature clouds resample only when depleted") {
  Scenario sc = small_default(16, 8);
  Rng rng(15);
  FilterState st = init_filter(sc, rng);

  PvaBelief healthy = make_feature(1, {1.0, 1.0}, 5.0, 0.9, 8, rng);
  PvaBelief depleted = make_feature(2, {2.0, 2.0}, 5.0, 0.9, 8, rng);
  depleted.weights.assign(8, 0.0);
  depleted.weights[3] = 1.0;
  st.features[0] = {healthy, depleted};

  resample(st, rng);
  const auto& h = st.features[0][0];
  const auto& d = st.features[0][1];
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(h.weights[j] == healthy.weights[j]);
    CHECK(h.particles[j].position.x == healthy.particles[j].position.x);
    CHECK(d.weights[j] == 0.125);
    CHECK(d.particles[j].position.x == depleted.particles[3].position.x);
  }
}

TEST_CASE("estimates are weight-space expectations") {
  Scenario sc = small_default(10, 5);
  Rng rng(16);
  FilterState st = init_filter(sc, rng);

  for (std::size_t i = 0; i < 10; ++i) {
    st.agent[i].position = {1.5, -2.5};
    st.agent[i].velocity = {0.25, 0.0};
    st.agent[i].mode = i < 3 ? 1 : 2;
  }
  const StateEstimate est = estimate(st);
  CHECK(est.position.x == Approx(1.5).epsilon(1e-12));
  CHECK(est.position.y == Approx(-2.5).epsilon(1e-12));
  CHECK(est.velocity.x == Approx(0.25).epsilon(1e-12));
  CHECK(est.mode_pmf[0] == Approx(0.3).epsilon(1e-12));
  CHECK(est.mode_pmf[1] == Approx(0.7).epsilon(1e-12));
  CHECK(est.mmse_mode == Approx(1.7).epsilon(1e-12));
  CHECK(est.map_mode == 2);

  // tie goes to the lower mode index
  for (std::size_t i = 0; i < 10; ++i) st.agent[i].mode = i < 5 ? 1 : 2;
  CHECK(estimate(st).map_mode == 1);
}

TEST_CASE("detection threshold gates reported features") {
  Scenario sc = small_default(10, 5);
  Rng rng(17);
  FilterState st = init_filter(sc, rng);
  st.features[0].push_back(make_feature(1, {1.0, 1.0}, 5.0, 0.7, 5, rng));
  st.features[0].push_back(make_feature(2, {2.0, 2.0}, 5.0, 0.3, 5, rng));
  const StateEstimate est = estimate(st);
  REQUIRE(est.features[0].size() == 1);
  CHECK(est.features[0][0].label == 1);
  CHECK(est.features[0][0].existence == 0.7);
  CHECK(est.features[0][0].position.x == Approx(1.0).margin(0.01));
}

TEST_CASE("one measurement set per anchor is required") {
  Scenario sc = small_default(10, 5);
  Rng rng(18);
  FilterState st = init_filter(sc, rng);
  std::vector<std::vector<Measurement>> one_set(1);
  CHECK_THROWS_AS(filter_step(st, one_set, rng), std::invalid_argument);
}

TEST_CASE("full steps are reproducible draw for draw") {
  Scenario sc = small_default(200, 50);
  sc.track.resize(8);
  sc.mode_truth.assign(7, 1);
  sc.turn_windows.clear();

  auto run = [&sc]() {
    Rng sim(900);
    Rng flt(901);
    FilterState st = init_filter(sc, flt);
    StateEstimate last;
    for (std::size_t n = 1; n < sc.track.size(); ++n) {
      const auto [zs, truth] = simulate_epoch(sc, n, sim);
      last = filter_step(st, zs, flt);
    }
    return std::pair{st, last};
  };

  const auto [st1, est1] = run();
  const auto [st2, est2] = run();
  REQUIRE(est1.position.x == est2.position.x);
  REQUIRE(est1.position.y == est2.position.y);
  REQUIRE(est1.mmse_mode == est2.mmse_mode);
  REQUIRE(st1.agent.size() == st2.agent.size());
  for (std::size_t i = 0; i < st1.agent.size(); ++i) {
    REQUIRE(st1.agent[i].position.x == st2.agent[i].position.x);
    REQUIRE(st1.agent[i].velocity.y == st2.agent[i].velocity.y);
  }
  REQUIRE(st1.features[0].size() == st2.features[0].size());
  for (std::size_t k = 0; k < st1.features[0].size(); ++k) {
    REQUIRE(st1.features[0][k].existence == st2.features[0][k].existence);
    REQUIRE(st1.features[0][k].label == st2.features[0][k].label);
  }
}
