#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpslam/io.hpp"
#include "mpslam/metrics.hpp"
#include "mpslam/scenario.hpp"
#include "mpslam/simulator.hpp"
#include "mpslam/slam_filter.hpp"

// Multi-run orchestration. Run r uses seed base_seed + r; the simulator and
// the filter draw from separate streams (filter stream salted) so that two
// filter variants facing the same seed see identical measurements. Runs
// execute in parallel; every artifact is a pure function of (scenario, seed),
// so outputs are byte-identical across repetitions and thread schedules.

namespace mpslam {

inline constexpr std::uint64_t kFilterSeedSalt = 0x9e3779b97f4a7c15ull;

struct RunConfig {
  std::string scenario_path;      // empty: built-in default scenario
  int runs = 10;
  long long seed = -1;            // -1: use scenario base_seed
  std::string out_dir = "out";
  std::string variant = "imm";    // "imm" or "single"
  int n_agent = 0;                // 0: scenario default
  int n_feature = 0;
  std::string measurements_path;  // nonempty: replay this recording (runs=1)
};

struct EvaluationSummary {
  std::string variant;
  int runs = 0;
  double median_rmse = 0.0;
  std::vector<double> overall_rmse_per_run;
  std::vector<double> post_turn2_rmse_per_run;
  std::vector<double> final_mospa;                    // per anchor
  std::vector<std::vector<int>> detected_final_per_run;  // [run][anchor]
  std::vector<int> true_va_counts;                    // per anchor
  double avg_belief_turn_mode2 = 0.0;
  double avg_belief_straight_mode1 = 0.0;
};

namespace detail {

struct RunArtifacts {
  std::vector<AgentRow> agent;
  std::vector<FeatureRow> features;
  std::vector<MeasurementRow> measurements;
};

inline AgentRow make_agent_row(int step, const Point2& truth,
                               const StateEstimate& est) {
  AgentRow row;
  row.step = step;
  row.true_x = truth.x;
  row.true_y = truth.y;
  row.est_x = est.position.x;
  row.est_y = est.position.y;
  row.est_vx = est.velocity.x;
  row.est_vy = est.velocity.y;
  row.map_mode = est.map_mode;
  row.mmse_mode = est.mmse_mode;
  row.beliefs = est.mode_pmf;
  return row;
}

// replay table: [step][anchor] measurement sets reconstructed from a recording
inline std::vector<std::vector<std::vector<Measurement>>> replay_table(
    const Scenario& sc, const std::vector<MeasurementRow>& rows) {
  const std::size_t n_steps = sc.track.size();
  std::vector<std::vector<std::vector<Measurement>>> table(
      n_steps, std::vector<std::vector<Measurement>>(sc.anchors.size()));
  std::map<int, std::size_t> anchor_index;
  for (std::size_t a = 0; a < sc.anchors.size(); ++a) {
    anchor_index[sc.anchors[a].id] = a;
  }
  for (const auto& r : rows) {
    if (r.step < 1 || static_cast<std::size_t>(r.step) >= n_steps) {
      throw std::runtime_error("measurement recording: step outside scenario track");
    }
    const auto it = anchor_index.find(r.anchor_id);
    if (it == anchor_index.end()) {
      throw std::runtime_error("measurement recording: unknown anchor id " +
                               std::to_string(r.anchor_id));
    }
    auto& set = table[static_cast<std::size_t>(r.step)][it->second];
    if (static_cast<std::size_t>(r.meas_index) != set.size()) {
      throw std::runtime_error("measurement recording: non-contiguous meas_index");
    }
    set.push_back(r.z);
  }
  return table;
}

inline RunArtifacts run_single(const Scenario& sc, std::uint64_t seed,
                               const std::vector<MeasurementRow>* replay) {
  Rng sim_rng(seed);
  Rng filt_rng(seed ^ kFilterSeedSalt);
  std::vector<std::vector<std::vector<Measurement>>> replayed;
  if (replay != nullptr) replayed = replay_table(sc, *replay);

  FilterState state = init_filter(sc, filt_rng);
  RunArtifacts art;
  const StateEstimate init_est = estimate(state);
  art.agent.push_back(make_agent_row(0, sc.track[0], init_est));

  for (std::size_t n = 1; n < sc.track.size(); ++n) {
    std::vector<std::vector<Measurement>> zs;
    if (replay != nullptr) {
      zs = replayed[n];
    } else {
      auto [sets, truth] = simulate_epoch(sc, n, sim_rng);
      zs = std::move(sets);
      for (std::size_t a = 0; a < zs.size(); ++a) {
        for (std::size_t m = 0; m < zs[a].size(); ++m) {
          MeasurementRow mr;
          mr.step = static_cast<int>(n);
          mr.anchor_id = sc.anchors[a].id;
          mr.meas_index = static_cast<int>(m);
          mr.z = zs[a][m];
          mr.source_feature = truth.source[a][m];
          art.measurements.push_back(mr);
        }
      }
    }
    const StateEstimate est = filter_step(state, zs, filt_rng);
    art.agent.push_back(make_agent_row(static_cast<int>(n), sc.track[n], est));
    for (std::size_t a = 0; a < est.features.size(); ++a) {
      for (const auto& fe : est.features[a]) {
        FeatureRow fr;
        fr.step = static_cast<int>(n);
        fr.anchor_id = sc.anchors[a].id;
        fr.label = fe.label;
        fr.x = fe.position.x;
        fr.y = fe.position.y;
        fr.amplitude = fe.amplitude;
        fr.existence = fe.existence;
        art.features.push_back(fr);
      }
    }
  }
  if (replay != nullptr) {
    art.measurements = *replay;  // echo the consumed recording
  }
  return art;
}

inline std::string run_dir_name(int r) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "run_%03d", r);
  return buf;
}

}  // namespace detail

inline Scenario effective_scenario(const RunConfig& cfg) {
  Scenario sc = cfg.scenario_path.empty() ? build_default_scenario()
                                          : load_scenario(cfg.scenario_path);
  if (cfg.n_agent > 0) sc.filter.n_agent = cfg.n_agent;
  if (cfg.n_feature > 0) sc.filter.n_feature = cfg.n_feature;
  if (cfg.seed >= 0) sc.base_seed = static_cast<std::uint64_t>(cfg.seed);
  if (cfg.variant == "single" || cfg.variant == "single-mode") {
    sc = single_mode_variant(sc);
  } else if (cfg.variant != "imm") {
    throw std::invalid_argument("unknown variant: " + cfg.variant +
                                " (expected imm or single)");
  }
  validate_scenario(sc);
  return sc;
}

inline void run(const RunConfig& cfg) {
  if (cfg.runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (!cfg.measurements_path.empty() && cfg.runs != 1) {
    throw std::invalid_argument("replaying a recording implies exactly 1 run");
  }
  const Scenario sc = effective_scenario(cfg);

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  save_scenario((fs::path(cfg.out_dir) / "scenario.json").string(), sc);
  {
    nlohmann::json j{{"schema", "mpslam.run_config.v1"},
                     {"variant", (cfg.variant == "single-mode") ? "single" : cfg.variant},
                     {"runs", cfg.runs},
                     {"base_seed", sc.base_seed},
                     {"n_agent", sc.filter.n_agent},
                     {"n_feature", sc.filter.n_feature},
                     {"replayed", !cfg.measurements_path.empty()}};
    auto out = detail::open_for_write(
        (fs::path(cfg.out_dir) / "run_config.json").string());
    out << j.dump(2) << "\n";
  }

  std::vector<MeasurementRow> replay_rows;
  const std::vector<MeasurementRow>* replay = nullptr;
  if (!cfg.measurements_path.empty()) {
    replay_rows = read_measurements_csv(cfg.measurements_path);
    replay = &replay_rows;
  }

  std::vector<std::future<void>> jobs;
  for (int r = 0; r < cfg.runs; ++r) {
    jobs.push_back(std::async(std::launch::async, [&, r]() {
      const std::uint64_t seed = sc.base_seed + static_cast<std::uint64_t>(r);
      detail::RunArtifacts art;
      try {
        art = detail::run_single(sc, seed, replay);
      } catch (const std::exception& e) {
        throw std::runtime_error("run " + std::to_string(r) + " (seed " +
                                 std::to_string(seed) + "): " + e.what());
      }
      const fs::path dir = fs::path(cfg.out_dir) / detail::run_dir_name(r);
      fs::create_directories(dir);
      write_agent_csv((dir / "agent.csv").string(), art.agent);
      write_features_csv((dir / "features.csv").string(), art.features);
      write_measurements_csv((dir / "measurements.csv").string(), art.measurements);
    }));
  }
  // collect all failures, not just the first
  std::string errors;
  for (auto& j : jobs) {
    try {
      j.get();
    } catch (const std::exception& e) {
      errors += errors.empty() ? e.what() : std::string("; ") + e.what();
    }
  }
  if (!errors.empty()) throw std::runtime_error(errors);
}

inline EvaluationSummary evaluate(const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  if (!fs::exists(root / "scenario.json")) {
    throw std::runtime_error("evaluate: missing scenario.json in " + out_dir);
  }
  const Scenario sc = load_scenario((root / "scenario.json").string());

  std::string variant = "imm";
  {
    std::ifstream in(root / "run_config.json");
    if (!in) throw std::runtime_error("evaluate: missing run_config.json in " + out_dir);
    nlohmann::json j;
    in >> j;
    variant = j.value("variant", "imm");
  }

  std::vector<fs::path> run_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() &&
        entry.path().filename().string().rfind("run_", 0) == 0) {
      run_dirs.push_back(entry.path());
    }
  }
  std::sort(run_dirs.begin(), run_dirs.end());
  if (run_dirs.empty()) {
    throw std::runtime_error("evaluate: no run artifacts under " + out_dir);
  }

  const std::size_t n_rows = sc.track.size();
  const std::size_t n_anchors = sc.anchors.size();
  const std::size_t n_runs = run_dirs.size();
  const std::size_t q_count = sc.modes.transition.size();

  std::vector<std::vector<double>> errors(n_runs);
  std::vector<std::vector<std::vector<double>>> beliefs(n_runs);
  // ospa[anchor][run][row]
  std::vector<std::vector<std::vector<double>>> ospa_series(
      n_anchors, std::vector<std::vector<double>>(n_runs));
  std::vector<std::vector<int>> detected_final(n_runs,
                                               std::vector<int>(n_anchors, 0));

  // truth feature sets per anchor per row (visibility can vary along a track);
  // index 0 is the transmitter itself, which the filter holds as a known
  // feature and never reports, so truth covers the mirrored features only
  std::vector<std::vector<std::vector<Point2>>> truth_sets(n_anchors);
  for (std::size_t a = 0; a < n_anchors; ++a) {
    const auto positions = anchor_feature_positions(sc, a);
    truth_sets[a].resize(n_rows);
    for (std::size_t n = 0; n < n_rows; ++n) {
      for (std::size_t f = 1; f < positions.size(); ++f) {
        if (feature_visible(sc, a, static_cast<int>(f), sc.track[n])) {
          truth_sets[a][n].push_back(positions[f]);
        }
      }
    }
  }

  const OspaParams ospa_par{1.0, 1.0};
  for (std::size_t r = 0; r < n_runs; ++r) {
    const auto agent_rows = read_agent_csv((run_dirs[r] / "agent.csv").string());
    if (agent_rows.size() != n_rows) {
      throw std::runtime_error("evaluate: " + run_dirs[r].string() +
                               "/agent.csv row count mismatch");
    }
    errors[r].resize(n_rows);
    beliefs[r].assign(n_rows, std::vector<double>(q_count, 0.0));
    for (std::size_t n = 0; n < n_rows; ++n) {
      const auto& row = agent_rows[n];
      errors[r][n] = std::hypot(row.true_x - row.est_x, row.true_y - row.est_y);
      if (row.beliefs.size() != q_count) {
        throw std::runtime_error("evaluate: mode belief column count mismatch");
      }
      beliefs[r][n] = row.beliefs;
    }

    const auto feature_rows =
        read_features_csv((run_dirs[r] / "features.csv").string());
    // per row, per anchor estimated feature set
    std::vector<std::vector<std::vector<Point2>>> est_sets(
        n_anchors, std::vector<std::vector<Point2>>(n_rows));
    for (const auto& fr : feature_rows) {
      std::size_t a = n_anchors;
      for (std::size_t i = 0; i < n_anchors; ++i) {
        if (sc.anchors[i].id == fr.anchor_id) a = i;
      }
      if (a == n_anchors || fr.step < 0 ||
          static_cast<std::size_t>(fr.step) >= n_rows) {
        throw std::runtime_error("evaluate: bad feature row in " +
                                 run_dirs[r].string());
      }
      est_sets[a][static_cast<std::size_t>(fr.step)].push_back({fr.x, fr.y});
    }
    for (std::size_t a = 0; a < n_anchors; ++a) {
      ospa_series[a][r].resize(n_rows);
      for (std::size_t n = 0; n < n_rows; ++n) {
        ospa_series[a][r][n] = ospa(est_sets[a][n], truth_sets[a][n], ospa_par);
      }
      detected_final[r][a] = static_cast<int>(est_sets[a][n_rows - 1].size());
    }
  }

  const std::vector<double> rmse_rows = rmse(errors);

  EvaluationSummary summary;
  summary.variant = variant;
  summary.runs = static_cast<int>(n_runs);
  summary.median_rmse = median(rmse_rows);
  summary.detected_final_per_run = detected_final;

  for (std::size_t r = 0; r < n_runs; ++r) {
    double acc = 0.0;
    for (double e : errors[r]) acc += e * e;
    summary.overall_rmse_per_run.push_back(
        std::sqrt(acc / static_cast<double>(n_rows)));
  }
  if (sc.turn_windows.size() >= 2) {
    // displacement d lands on row d+1, so rows strictly after the second
    // turn start at its window end + 1
    const std::size_t first_row =
        static_cast<std::size_t>(sc.turn_windows[1][1]) + 1;
    for (std::size_t r = 0; r < n_runs; ++r) {
      double acc = 0.0;
      std::size_t count = 0;
      for (std::size_t n = first_row; n < n_rows; ++n, ++count) {
        acc += errors[r][n] * errors[r][n];
      }
      summary.post_turn2_rmse_per_run.push_back(
          count > 0 ? std::sqrt(acc / static_cast<double>(count)) : 0.0);
    }
  }

  for (std::size_t a = 0; a < n_anchors; ++a) {
    summary.final_mospa.push_back(mospa(ospa_series[a]).back());
    int visible_vas = 0;
    const auto positions = anchor_feature_positions(sc, a);
    for (std::size_t f = 1; f < positions.size(); ++f) {
      if (feature_visible(sc, a, static_cast<int>(f), sc.track.back())) {
        ++visible_vas;
      }
    }
    summary.true_va_counts.push_back(visible_vas);
  }

  const auto avg_beliefs = average_mode_belief(beliefs);
  double turn_acc = 0.0, straight_acc = 0.0;
  std::size_t turn_count = 0, straight_count = 0;
  for (std::size_t n = 1; n < n_rows && !sc.mode_truth.empty(); ++n) {
    const bool turning = sc.mode_truth[n - 1] == 2;
    const double b2 = q_count >= 2 ? avg_beliefs[n][1] : 0.0;
    if (turning) {
      turn_acc += b2;
      ++turn_count;
    } else {
      straight_acc += avg_beliefs[n][0];
      ++straight_count;
    }
  }
  summary.avg_belief_turn_mode2 = turn_count ? turn_acc / turn_count : 0.0;
  summary.avg_belief_straight_mode1 =
      straight_count ? straight_acc / straight_count : 0.0;

  // metric trace files
  {
    auto out = detail::open_for_write((root / "rmse.csv").string());
    out << "# mpslam.rmse.v1\nstep,rmse\n";
    for (std::size_t n = 0; n < n_rows; ++n) {
      out << n << ',' << format_double(rmse_rows[n]) << "\n";
    }
  }
  for (std::size_t a = 0; a < n_anchors; ++a) {
    const auto series = mospa(ospa_series[a]);
    auto out = detail::open_for_write(
        (root / ("mospa_pa" + std::to_string(sc.anchors[a].id) + ".csv")).string());
    out << "# mpslam.mospa.v1\nstep,mospa\n";
    for (std::size_t n = 0; n < n_rows; ++n) {
      out << n << ',' << format_double(series[n]) << "\n";
    }
  }
  {
    auto out = detail::open_for_write((root / "mode_belief.csv").string());
    out << "# mpslam.mode_belief.v1\nstep,true_mode";
    for (std::size_t q = 1; q <= q_count; ++q) out << ",belief_" << q;
    out << "\n";
    for (std::size_t n = 0; n < n_rows; ++n) {
      const int true_mode =
          (n == 0 || sc.mode_truth.empty()) ? 1 : sc.mode_truth[n - 1];
      out << n << ',' << true_mode;
      for (std::size_t q = 0; q < q_count; ++q) {
        out << ',' << format_double(avg_beliefs[n][q]);
      }
      out << "\n";
    }
  }
  {
    nlohmann::json j{
        {"schema", "mpslam.summary.v1"},
        {"variant", summary.variant},
        {"runs", summary.runs},
        {"median_rmse", summary.median_rmse},
        {"overall_rmse_per_run", summary.overall_rmse_per_run},
        {"post_turn2_rmse_per_run", summary.post_turn2_rmse_per_run},
        {"final_mospa", summary.final_mospa},
        {"detected_final_per_run", summary.detected_final_per_run},
        {"true_va_counts", summary.true_va_counts},
        {"avg_belief_turn_mode2", summary.avg_belief_turn_mode2},
        {"avg_belief_straight_mode1", summary.avg_belief_straight_mode1},
        {"turn_windows", sc.turn_windows}};
    auto out = detail::open_for_write((root / "summary.json").string());
    out << j.dump(2) << "\n";
  }
  return summary;
}

}  // namespace mpslam
