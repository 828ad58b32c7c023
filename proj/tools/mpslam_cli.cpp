// Command-line harness: simulate + filter runs, metric evaluation, scenario
// inspection, and a quick self-check of the numeric oracles.

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpslam/association.hpp"
#include "mpslam/harness.hpp"
#include "mpslam/metrics.hpp"
#include "mpslam/rng.hpp"
#include "mpslam/scenario.hpp"
#include "mpslam/stats.hpp"

namespace {

int run_oracles() {
  using namespace mpslam;
  int failures = 0;
  auto report = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "ok:   " : "FAIL: ") << what << "\n";
    if (!ok) ++failures;
  };

  {
    // Marcum Q special case and a frozen quadrature value
    bool ok = true;
    for (double g : {0.5, 1.0, 2.0, 3.0}) {
      ok = ok && std::abs(marcum_q1(0.0, g) - std::exp(-0.5 * g * g)) < 1e-12;
    }
    report(ok, "marcum_q1(0, gamma) equals exp(-gamma^2/2)");
    report(std::abs(marcum_q1(2.0, 2.0) - 0.60350096061199334895) < 1e-12,
           "marcum_q1(2, 2) matches quadrature constant");
  }

  {
    // tree-structured data association must match exact enumeration
    Rng rng(7);
    double max_dev = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const bool k_one = rng.bernoulli(0.5);
      const std::size_t K = k_one ? 1 : 1 + rng.index(4);
      const std::size_t M = k_one ? 1 + rng.index(4) : 1;
      AssociationWeights w;
      w.beta.assign(K, std::vector<double>(M + 1));
      w.xi.assign(M, 0.0);
      for (auto& row : w.beta) {
        for (auto& v : row) v = rng.uniform(0.1, 3.0);
      }
      for (auto& v : w.xi) v = rng.uniform(0.5, 2.0);
      const auto exact = enumerate_da_oracle(w);
      const auto approx = spa_da(w, SpaOptions{});
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t m = 0; m <= M; ++m) {
          max_dev = std::max(max_dev, std::abs(exact.p_c[k][m] - approx.p_c[k][m]));
        }
      }
    }
    report(max_dev < 1e-9, "tree-case association marginals match enumeration "
                           "(max dev " + format_double(max_dev) + ")");
  }

  {
    // matching-based OSPA against brute-force permutations
    Rng rng(11);
    double max_dev = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Point2> xs(rng.index(5)), ys(rng.index(5));
      for (auto& p : xs) p = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
      for (auto& p : ys) p = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
      const OspaParams par{1.0, 1.0};
      max_dev = std::max(max_dev, std::abs(ospa(xs, ys, par) -
                                           ospa_brute_force(xs, ys, par)));
    }
    report(max_dev < 1e-12, "ospa equals brute-force matching (max dev " +
                                format_double(max_dev) + ")");
  }

  std::cout << (failures == 0 ? "all oracles passed\n"
                              : std::to_string(failures) + " oracle(s) failed\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multipath-aided SLAM simulation harness"};
  app.require_subcommand(1);

  mpslam::RunConfig cfg;
  auto* run_cmd = app.add_subcommand("run", "simulate measurements and run the filter");
  run_cmd->add_option("--scenario", cfg.scenario_path,
                      "scenario JSON (omit for the built-in default)");
  run_cmd->add_option("--runs", cfg.runs, "number of Monte Carlo runs")
      ->capture_default_str();
  run_cmd->add_option("--seed", cfg.seed,
                      "base seed (run r uses seed+r); -1 takes the scenario's");
  run_cmd->add_option("--variant", cfg.variant, "filter variant: imm or single")
      ->check(CLI::IsMember({"imm", "single", "single-mode"}))
      ->capture_default_str();
  run_cmd->add_option("--out", cfg.out_dir, "output directory")
      ->envname("MPSLAM_OUT")
      ->capture_default_str();
  run_cmd->add_option("--particles", cfg.n_agent,
                      "agent particle count override (0 keeps the scenario's)");
  run_cmd->add_option("--feature-particles", cfg.n_feature,
                      "feature particle count override (0 keeps the scenario's)");
  run_cmd->add_option("--measurements", cfg.measurements_path,
                      "replay a recorded measurements.csv instead of simulating");

  std::string eval_dir = "out";
  auto* eval_cmd = app.add_subcommand("evaluate", "aggregate metrics from run artifacts");
  eval_cmd->add_option("--out", eval_dir, "directory holding run artifacts")
      ->envname("MPSLAM_OUT")
      ->capture_default_str();

  auto* dump_cmd = app.add_subcommand("scenario-dump", "print the built-in default scenario");

  auto* oracle_cmd = app.add_subcommand("oracle", "run the numeric test oracles");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      mpslam::run(cfg);
      std::cout << "wrote " << cfg.runs << " run(s) to " << cfg.out_dir << "\n";
    } else if (eval_cmd->parsed()) {
      const auto summary = mpslam::evaluate(eval_dir);
      std::cout << "variant " << summary.variant << ", " << summary.runs
                << " run(s): median RMSE " << summary.median_rmse << " m\n"
                << "summary written to " << eval_dir << "/summary.json\n";
    } else if (dump_cmd->parsed()) {
      nlohmann::json j(mpslam::build_default_scenario());
      std::cout << j.dump(2) << "\n";
    } else if (oracle_cmd->parsed()) {
      return run_oracles();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
