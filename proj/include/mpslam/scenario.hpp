#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpslam/geometry.hpp"
#include "mpslam/measurement_model.hpp"

// Experiment configuration: floorplan, anchors, agent track, all model
// parameters, and the filter knobs. Serializes to JSON; doubles survive the
// round trip exactly (shortest-round-trip formatting on dump).

namespace mpslam {

struct ModeModel {
  std::vector<std::vector<double>> transition;  // row-stochastic, Q x Q
  std::vector<double> sigma_w;                  // per-mode driving noise std
  double dt = 1.0;
};

struct AmplitudeModel {
  double u_ref = 30.0;  // normalized amplitude at reference distance
  double d_ref = 1.0;
};

struct FilterParams {
  int n_agent = 3000;
  int n_feature = 1000;
  double survival = 0.999;
  double prune_threshold = 1e-3;
  double detect_threshold = 0.5;
  double position_jitter = 3e-3;   // per-step feature regularization std
  double amplitude_walk = 0.05;    // per-step amplitude random-walk std
  double init_pos_half_width = 0.1;
  double init_vel_half_width = 0.05;
};

struct Scenario {
  Floorplan floorplan;
  std::vector<Anchor> anchors;
  std::vector<Point2> track;                     // true position per step
  std::vector<int> mode_truth;                   // per displacement, 1-based
  std::vector<std::array<int, 2>> turn_windows;  // half-open step ranges
  NoiseParams noise;
  AmplitudeModel amplitude;
  FalseAlarmModel false_alarms;
  BirthModel birth;
  ModeModel modes;
  FilterParams filter;
  int va_max_order = 1;
  bool enforce_visibility = true;
  std::uint64_t base_seed = 1000;
};

inline void validate_scenario(const Scenario& sc) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("scenario: " + what);
  };
  if (sc.track.size() < 2) fail("track needs at least 2 positions");
  if (sc.floorplan.walls.empty()) fail("floorplan has no walls");
  if (sc.anchors.empty()) fail("no anchors");
  const std::size_t q_count = sc.modes.transition.size();
  if (q_count == 0) fail("empty mode transition matrix");
  if (sc.modes.sigma_w.size() != q_count) fail("sigma_w size != mode count");
  for (const auto& row : sc.modes.transition) {
    if (row.size() != q_count) fail("mode transition matrix not square");
    double sum = 0.0;
    for (double p : row) {
      if (p < 0.0) fail("negative mode transition probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) fail("mode transition row does not sum to 1");
  }
  for (double sw : sc.modes.sigma_w) {
    if (!(sw > 0.0)) fail("driving noise std must be positive");
  }
  if (!(sc.modes.dt > 0.0)) fail("step duration must be positive");
  if (!(sc.noise.sigma_d0 > 0.0) || !(sc.noise.sigma_phi0 > 0.0)) {
    fail("measurement noise stds must be positive");
  }
  if (!(sc.noise.gamma >= 0.0)) fail("detection threshold must be nonnegative");
  if (!(sc.amplitude.u_ref > 0.0) || !(sc.amplitude.d_ref > 0.0)) {
    fail("amplitude reference must be positive");
  }
  if (sc.false_alarms.mean < 0.0) fail("false-alarm mean must be nonnegative");
  if (!(sc.false_alarms.range_hi > sc.false_alarms.range_lo)) {
    fail("false-alarm range interval empty");
  }
  if (sc.birth.mean < 0.0) fail("birth mean must be nonnegative");
  if (!(sc.birth.region_half_width > 0.0)) fail("birth region empty");
  if (!(sc.birth.amplitude_hi > sc.birth.amplitude_lo)) {
    fail("birth amplitude interval empty");
  }
  if (sc.filter.n_agent < 1 || sc.filter.n_feature < 1) {
    fail("particle counts must be positive");
  }
  if (!(sc.filter.survival > 0.0 && sc.filter.survival <= 1.0)) {
    fail("survival probability outside (0,1]");
  }
  if (!(sc.filter.prune_threshold >= 0.0) ||
      !(sc.filter.detect_threshold >= 0.0)) {
    fail("thresholds must be nonnegative");
  }
  if (sc.va_max_order < 1) fail("va_max_order must be at least 1");
  if (!sc.mode_truth.empty() && sc.mode_truth.size() != sc.track.size() - 1) {
    fail("mode_truth must have one entry per displacement");
  }
  // mode_truth describes the simulated motion; it is not capped by the
  // filter's mode count (a single-mode filter still faces a turning track)
  for (int q : sc.mode_truth) {
    if (q < 1) fail("mode_truth entry out of range");
  }
  const int n_steps = static_cast<int>(sc.track.size()) - 1;
  for (const auto& w : sc.turn_windows) {
    if (w[0] < 0 || w[1] <= w[0] || w[1] > n_steps) fail("turn window out of range");
  }
}

// json mapping

inline void to_json(nlohmann::json& j, const Point2& p) { j = {p.x, p.y}; }
inline void from_json(const nlohmann::json& j, Point2& p) {
  p.x = j.at(0).get<double>();
  p.y = j.at(1).get<double>();
}
inline void to_json(nlohmann::json& j, const WallSegment& w) {
  j = {{"a", w.a}, {"b", w.b}};
}
inline void from_json(const nlohmann::json& j, WallSegment& w) {
  j.at("a").get_to(w.a);
  j.at("b").get_to(w.b);
}
inline void to_json(nlohmann::json& j, const Anchor& a) {
  j = {{"id", a.id}, {"position", a.position}};
}
inline void from_json(const nlohmann::json& j, Anchor& a) {
  j.at("id").get_to(a.id);
  j.at("position").get_to(a.position);
}

inline void to_json(nlohmann::json& j, const Scenario& sc) {
  j = nlohmann::json{
      {"floorplan", {{"walls", sc.floorplan.walls}}},
      {"anchors", sc.anchors},
      {"track", sc.track},
      {"mode_truth", sc.mode_truth},
      {"turn_windows", sc.turn_windows},
      {"noise",
       {{"sigma_d0", sc.noise.sigma_d0},
        {"sigma_phi0", sc.noise.sigma_phi0},
        {"gamma", sc.noise.gamma}}},
      {"amplitude", {{"u_ref", sc.amplitude.u_ref}, {"d_ref", sc.amplitude.d_ref}}},
      {"false_alarms",
       {{"mean", sc.false_alarms.mean},
        {"range_lo", sc.false_alarms.range_lo},
        {"range_hi", sc.false_alarms.range_hi}}},
      {"birth",
       {{"mean", sc.birth.mean},
        {"region_center", sc.birth.region_center},
        {"region_half_width", sc.birth.region_half_width},
        {"amplitude_lo", sc.birth.amplitude_lo},
        {"amplitude_hi", sc.birth.amplitude_hi}}},
      {"modes",
       {{"transition", sc.modes.transition},
        {"sigma_w", sc.modes.sigma_w},
        {"dt", sc.modes.dt}}},
      {"filter",
       {{"n_agent", sc.filter.n_agent},
        {"n_feature", sc.filter.n_feature},
        {"survival", sc.filter.survival},
        {"prune_threshold", sc.filter.prune_threshold},
        {"detect_threshold", sc.filter.detect_threshold},
        {"position_jitter", sc.filter.position_jitter},
        {"amplitude_walk", sc.filter.amplitude_walk},
        {"init_pos_half_width", sc.filter.init_pos_half_width},
        {"init_vel_half_width", sc.filter.init_vel_half_width}}},
      {"va_max_order", sc.va_max_order},
      {"enforce_visibility", sc.enforce_visibility},
      {"base_seed", sc.base_seed}};
}

inline void from_json(const nlohmann::json& j, Scenario& sc) {
  j.at("floorplan").at("walls").get_to(sc.floorplan.walls);
  j.at("anchors").get_to(sc.anchors);
  j.at("track").get_to(sc.track);
  j.at("mode_truth").get_to(sc.mode_truth);
  j.at("turn_windows").get_to(sc.turn_windows);
  const auto& n = j.at("noise");
  n.at("sigma_d0").get_to(sc.noise.sigma_d0);
  n.at("sigma_phi0").get_to(sc.noise.sigma_phi0);
  n.at("gamma").get_to(sc.noise.gamma);
  const auto& amp = j.at("amplitude");
  amp.at("u_ref").get_to(sc.amplitude.u_ref);
  amp.at("d_ref").get_to(sc.amplitude.d_ref);
  const auto& fa = j.at("false_alarms");
  fa.at("mean").get_to(sc.false_alarms.mean);
  fa.at("range_lo").get_to(sc.false_alarms.range_lo);
  fa.at("range_hi").get_to(sc.false_alarms.range_hi);
  const auto& b = j.at("birth");
  b.at("mean").get_to(sc.birth.mean);
  b.at("region_center").get_to(sc.birth.region_center);
  b.at("region_half_width").get_to(sc.birth.region_half_width);
  b.at("amplitude_lo").get_to(sc.birth.amplitude_lo);
  b.at("amplitude_hi").get_to(sc.birth.amplitude_hi);
  const auto& m = j.at("modes");
  m.at("transition").get_to(sc.modes.transition);
  m.at("sigma_w").get_to(sc.modes.sigma_w);
  m.at("dt").get_to(sc.modes.dt);
  const auto& f = j.at("filter");
  f.at("n_agent").get_to(sc.filter.n_agent);
  f.at("n_feature").get_to(sc.filter.n_feature);
  f.at("survival").get_to(sc.filter.survival);
  f.at("prune_threshold").get_to(sc.filter.prune_threshold);
  f.at("detect_threshold").get_to(sc.filter.detect_threshold);
  f.at("position_jitter").get_to(sc.filter.position_jitter);
  f.at("amplitude_walk").get_to(sc.filter.amplitude_walk);
  f.at("init_pos_half_width").get_to(sc.filter.init_pos_half_width);
  f.at("init_vel_half_width").get_to(sc.filter.init_vel_half_width);
  j.at("va_max_order").get_to(sc.va_max_order);
  j.at("enforce_visibility").get_to(sc.enforce_visibility);
  j.at("base_seed").get_to(sc.base_seed);
}

inline void save_scenario(const std::string& path, const Scenario& sc) {
  validate_scenario(sc);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open scenario file for writing: " + path);
  out << nlohmann::json(sc).dump(2) << "\n";
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("scenario parse error in " + path + ": " + e.what());
  }
  Scenario sc;
  try {
    j.get_to(sc);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("scenario schema error in " + path + ": " + e.what());
  }
  validate_scenario(sc);
  return sc;
}

// Corner-style room: an 8 m x 6 m rectangle plus a short interior wall
// stub near the top-left. The stub's mirror image of anchor 1 is visible
// from the whole track; anchor 2 never sees it, so the first-order visible
// VA counts are 5 and 4. The track is an L with two 90-degree turns; the
// inter-position spacing roughly triples inside the turns and the fast
// mode is active there.
inline Scenario build_default_scenario() {
  Scenario sc;
  // Room scale is deliberately tight: the effective measurement stds shrink
  // with distance (sigma/u, u = u_ref/d), and the per-mode driving noise is
  // an absolute quantity, so short anchor-agent paths are what make the two
  // dynamic modes distinguishable on straight segments.
  sc.floorplan.walls = {
      {{-8.0, 0.0}, {8.0, 0.0}},     // bottom
      {{4.4, -8.0}, {4.4, 8.0}},     // right
      {{-8.0, 2.7}, {8.0, 2.7}},     // top
      {{0.0, -8.0}, {0.0, 8.0}},     // left
      {{0.2, 1.95}, {0.2, 2.35}},    // interior stub
  };
  // The track wraps around the second anchor at roughly constant range, so
  // every straight passes abeam of it: there the bearing measurement senses
  // the along-track coordinate, which is where the two driving-noise modes
  // actually differ. The first anchor supplies the far map structure.
  sc.anchors = {{1, {0.35, 2.25}}, {2, {2.6, 1.3}}};

  // The turns demand per-step velocity changes of ~4-5x the slow mode's
  // driving noise and build up more lag than the measurement noise can
  // excuse: followable under mode 2, divergent under a single slow mode.
  const double slow = 0.026;
  const double bump = 0.052;  // extra speed inside turns, peak 3x slow
  const int turn_len = 10;
  struct Phase {
    int steps;
    double heading0, heading1;  // radians, interpolated across the phase
    bool turn;
  };
  const double pi = 3.14159265358979323846;
  const std::vector<Phase> phases = {
      {62, 0.0, 0.0, false},
      {turn_len, 0.0, pi / 2.0, true},
      {40, pi / 2.0, pi / 2.0, false},
      {turn_len, pi / 2.0, pi, true},
      {36, pi, pi, false},
  };
  sc.track.push_back({1.51, 0.4});
  int step = 0;
  for (const auto& ph : phases) {
    if (ph.turn) {
      sc.turn_windows.push_back({step, step + ph.steps});
    }
    for (int i = 0; i < ph.steps; ++i, ++step) {
      const double frac = (i + 0.5) / ph.steps;
      const double heading = ph.heading0 + frac * (ph.heading1 - ph.heading0);
      const double speed =
          ph.turn ? slow + bump * std::sin(pi * frac) : slow;
      const Point2 prev = sc.track.back();
      sc.track.push_back(
          {prev.x + speed * std::cos(heading), prev.y + speed * std::sin(heading)});
      sc.mode_truth.push_back(ph.turn ? 2 : 1);
    }
  }

  sc.noise = {0.30, 0.15, 2.0};
  sc.amplitude = {30.0, 1.0};
  sc.false_alarms = {1.0, 0.0, 30.0};
  sc.birth = {0.05, {0.0, 0.0}, 15.0, 2.0, 40.0};
  sc.modes.transition = {{0.99, 0.01}, {0.01, 0.99}};
  sc.modes.sigma_w = {0.0032, 0.01};
  sc.modes.dt = 1.0;
  sc.filter = FilterParams{};
  sc.va_max_order = 1;
  sc.enforce_visibility = true;
  sc.base_seed = 1000;
  return sc;
}

// Baseline for comparison: the filter gets one near-constant-velocity mode
// with the slow driving noise. The simulated track (and its mode truth) is
// unchanged, so paired runs see identical measurements.
inline Scenario single_mode_variant(const Scenario& sc) {
  Scenario out = sc;
  out.modes.transition = {{1.0}};
  out.modes.sigma_w = {sc.modes.sigma_w.at(0)};
  return out;
}

}  // namespace mpslam
