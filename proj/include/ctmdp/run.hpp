#pragma once

// Command dispatch. Every command writes DSV artifacts, a checks table and a
// manifest into the output directory; the exit status is 0 iff every row of
// checks.csv passed. Non-fatal findings go to diagnostics.csv.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "ctmdp/conditions.hpp"
#include "ctmdp/config.hpp"
#include "ctmdp/dsv.hpp"
#include "ctmdp/model_io.hpp"
#include "ctmdp/policy.hpp"
#include "ctmdp/queueing.hpp"
#include "ctmdp/residuals.hpp"
#include "ctmdp/simulator.hpp"
#include "ctmdp/solver.hpp"
#include "ctmdp/version.hpp"

namespace ctmdp {

struct CheckRow {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct RunResult {
  int exit_status = 0;
  std::vector<CheckRow> checks;
  std::vector<CheckRow> diagnostics;
  std::vector<std::string> artifacts;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckRow& c) { return c.passed; });
  }
};

/// Model named by the config: the file (missing constants fitted) or the
/// discretized queueing example.
inline CtmdpModel load_model(const RunConfig& cfg) {
  if (cfg.model_path) return with_fitted_constants(read_model_file(*cfg.model_path));
  return queueing::build_discrete_model(cfg.queue.params, cfg.queue.n_states, cfg.queue.discretization());
}

namespace detail {

class RunContext {
 public:
  RunContext(const RunConfig& cfg, RunResult& result) : cfg_(cfg), result_(result), dir_(cfg.out) {
    std::filesystem::create_directories(dir_);
  }

  std::ofstream open(const std::string& name) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw Error("cannot write '" + (dir_ / name).string() + "'");
    result_.artifacts.push_back(name);
    return f;
  }

  void check(std::string name, bool passed, double value, double threshold, std::string detail = {}) {
    result_.checks.push_back({std::move(name), passed, value, threshold, std::move(detail)});
  }

  void diagnostic(std::string name, bool passed, double value, double threshold, std::string detail = {}) {
    result_.diagnostics.push_back({std::move(name), passed, value, threshold, std::move(detail)});
  }

  /// Runs `body`, prefixing any error with the check name.
  template <typename F>
  void guarded(const std::string& name, F&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      throw Error(name + ": " + e.what());
    }
  }

  const RunConfig& cfg() const { return cfg_; }

 private:
  const RunConfig& cfg_;
  RunResult& result_;
  std::filesystem::path dir_;
};

inline void write_check_table(std::ostream& out, const std::vector<CheckRow>& rows) {
  DsvWriter dsv(out);
  dsv.header({"check", "status", "value", "threshold", "detail"});
  for (const auto& r : rows) dsv.row(r.name, r.passed ? "pass" : "fail", r.value, r.threshold, r.detail);
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex;
  o.width(16);
  o.fill('0');
  o << v;
  return o.str();
}

inline void solve_checks(RunContext& ctx, const CtmdpModel& m, const SolveReport& r) {
  ctx.check("solve.converged", r.converged, r.final_change, ctx.cfg().tol,
            std::to_string(r.iterations) + " iterations");
  ctx.check("solve.monotone", r.monotonicity_violations == 0, r.max_increase, kMonotoneTol,
            "max (u_next - u)/w over all sweeps");
  ctx.check("solve.bounded", r.bound_violations == 0, r.max_bound_excess, kMonotoneTol,
            "max (|u_n| - u_0)/w over all sweeps");
  double qbar = 0.0;
  for (std::size_t i = 0; i < m.num_states(); ++i) qbar = std::max(qbar, max_exit_rate(m, i));
  const double k = m.alpha + 1.0 + qbar;
  ctx.check("solve.bellman_residual", r.final_residual <= k * ctx.cfg().tol, r.final_residual, k * ctx.cfg().tol,
            "weighted by w_prime");
}

/// Simulation horizon from the config, or from the pilot-based tail rule.
inline double simulation_horizon(const RunConfig& cfg, const CtmdpModel& m, const PolicySpec& policy,
                                 std::size_t n) {
  if (cfg.horizon) return *cfg.horizon;
  return horizon_for_estimate(m, policy, n, cfg.seed);
}

inline void run_solve(RunContext& ctx, const CtmdpModel& m) {
  SolveReport r;
  ctx.guarded("solve", [&] { r = solve(m, ctx.cfg().tol, ctx.cfg().max_iter); });
  {
    auto f = ctx.open("convergence.csv");
    write_convergence_dsv(f, r);
  }
  {
    auto f = ctx.open("value_policy.csv");
    write_value_policy_dsv(f, m, r.value, r.policy);
  }
  solve_checks(ctx, m, r);
}

inline void run_simulate(RunContext& ctx, const CtmdpModel& m) {
  const auto& cfg = ctx.cfg();
  SolveReport sol;
  ctx.guarded("solve", [&] { sol = solve(m, cfg.tol, cfg.max_iter); });
  ctx.check("solve.converged", sol.converged, sol.final_change, cfg.tol);
  const PolicySpec policy = make_deterministic_policy(m, sol.policy);

  double horizon = 0.0;
  McEstimate est;
  ctx.guarded("simulate.estimate", [&] {
    horizon = simulation_horizon(cfg, m, policy, cfg.episodes);
    est = estimate_discounted_cost(m, policy, horizon, cfg.episodes, cfg.seed);
  });
  {
    auto f = ctx.open("trajectories.csv");
    write_trajectory_header(f);
    for (std::size_t e = 0; e < std::min(cfg.trajectories, cfg.episodes); ++e)
      write_trajectory_rows(f, e, simulate_episode(m, policy, horizon, cfg.seed, e));
  }
  {
    auto f = ctx.open("estimate.csv");
    write_estimate_dsv(f, est);
  }
  ctx.check("simulate.no_explosion", est.exploded_episodes == 0, static_cast<double>(est.exploded_episodes), 0.0,
            "episodes hitting the jump guard");
  if (!cfg.horizon)
    ctx.check("simulate.tail_below_tenth_half_width", est.tail_bound < 0.1 * est.half_width, est.tail_bound,
              0.1 * est.half_width);
  const double target = integrate_gamma(m, sol.value.values);
  const double gap = std::abs(est.mean - target);
  ctx.diagnostic("simulate.ci_contains_value", gap <= est.half_width + est.tail_bound, gap,
                 est.half_width + est.tail_bound, "|mean - sum gamma u*|");
}

/// Closed-form side of the queueing example: fixed point, u*(0), admissibility.
inline queueing::FixedPointReport queue_checks(RunContext& ctx, const queueing::QueueParams& p, double fp_tol,
                                               std::span<const double> grid) {
  queueing::FixedPointReport fp;
  ctx.guarded("queue.fixed_point", [&] { fp = queueing::fixed_point_z(p, fp_tol); });
  ctx.check("queue.fixed_point.converged", fp.converged, static_cast<double>(fp.iterations), 200.0,
            "iterations");
  ctx.check("queue.fixed_point.increasing", fp.increasing, fp.z_star, 0.0);
  ctx.check("queue.fixed_point.first_step", fp.first_step_ok, fp.z_history.size() > 1 ? fp.z_history[1] : 0.0,
            1.0 - p.C1 / (2.0 * p.alpha), "z1 > 1 - C1/(2 alpha)");
  ctx.check("queue.fixed_point.lambda_bound", fp.bound_check, fp.z_star, fp.lambda_bound,
            "z* < (10/7) C2 lambda + (alpha + lambda)/alpha");
  ctx.diagnostic("queue.fixed_point.alpha_bound", fp.alpha_bound_check, fp.z_star, fp.alpha_bound,
                 "z* < (10/7) C2 alpha + (alpha + lambda)/alpha");
  const double contraction = p.lambda / (p.alpha + p.lambda);
  ctx.diagnostic("queue.fixed_point.step_ratio", fp.max_step_ratio <= contraction + 1e-6, fp.max_step_ratio,
                 contraction, "largest |dz_{n+1}|/|dz_n|");

  const auto zero = queueing::check_u_star_at_zero(p, fp.z_star);
  ctx.check("queue.u_star_zero", zero.consistent, zero.gap, 1e-8, "|1 - z* - idle-state identity|");
  if (p.C2 > 0.0) {
    const auto phi = queueing::optimal_policy(p, fp.z_star);
    const auto adm = queueing::check_admissibility(phi, grid);
    ctx.check("queue.policy.nonnegative", adm.nonnegative, adm.min_required_abar, 0.0);
    ctx.check("queue.policy.admissible", adm.admissible, adm.min_required_abar, p.Abar,
              "max x phi*(x) against Abar; worst x = " + format_number(adm.worst_x));
  }
  return fp;
}

inline std::vector<double> example_grid() {
  std::vector<double> g(101);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i) / 100.0;
  return g;
}

inline void run_example(RunContext& ctx) {
  const auto& p = ctx.cfg().queue.params;
  const auto grid = example_grid();
  const auto fp = queue_checks(ctx, p, ctx.cfg().queue.fp_tol, grid);
  {
    auto f = ctx.open("fixed_point.csv");
    queueing::write_fixed_point_dsv(f, fp);
  }
  if (p.C2 > 0.0) {
    auto f = ctx.open("closed_form.csv");
    queueing::write_closed_form_dsv(f, queueing::optimal_policy(p, fp.z_star), grid);
  }
}

/// Start states for the residual battery: the gamma-heaviest state and the
/// first and last states.
inline std::vector<std::size_t> residual_starts(const CtmdpModel& m) {
  std::vector<std::size_t> s{0, m.num_states() - 1};
  s.push_back(static_cast<std::size_t>(std::max_element(m.gamma.begin(), m.gamma.end()) - m.gamma.begin()));
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

inline void run_verify(RunContext& ctx, const CtmdpModel& m) {
  const auto& cfg = ctx.cfg();
  const bool queue_source = !cfg.model_path;

  // Model
  const auto kv = validate_kernel(m);
  ctx.check("kernel.valid", kv.passed, kv.max_residual, kConservativeTol);
  {
    auto f = ctx.open("kernel.csv");
    write_dsv(f, kv);
  }
  std::vector<ConditionReport> conds;
  for (auto id : kAllConditions) {
    ctx.guarded(std::string("condition.") + std::string(to_string(id)), [&] { conds.push_back(check_condition(m, id)); });
    const auto& r = conds.back();
    ctx.check("condition." + std::string(to_string(id)), r.passed, r.relative_slack, 0.0,
              r.structural ? "structural" : r.detail);
  }
  {
    auto f = ctx.open("conditions.csv");
    write_dsv(f, std::span<const ConditionReport>(conds));
  }

  // Solver
  SolveReport sol;
  ctx.guarded("solve", [&] { sol = solve(m, cfg.tol, cfg.max_iter); });
  {
    auto f = ctx.open("convergence.csv");
    write_convergence_dsv(f, sol);
  }
  {
    auto f = ctx.open("value_policy.csv");
    write_value_policy_dsv(f, m, sol.value, sol.policy);
  }
  solve_checks(ctx, m, sol);

  double qbar = 0.0, wp_max = 0.0;
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    qbar = std::max(qbar, max_exit_rate(m, i));
    wp_max = std::max(wp_max, m.weights.w_prime[i]);
  }
  const double dlp_tol = (m.alpha + 1.0 + qbar) * cfg.tol * wp_max / m.alpha;
  const auto dlp = dlp_check(m, sol.value, dlp_tol);
  ctx.check("dlp.feasible", dlp.feasible, dlp.feasibility_slack, -dlp_tol);
  {
    const auto g = static_cast<std::size_t>(std::max_element(m.gamma.begin(), m.gamma.end()) - m.gamma.begin());
    ValueFunction bumped = sol.value;
    bumped.values[g] += 0.1;
    const auto pr = dlp_check(m, bumped, dlp_tol);
    ctx.check("dlp.perturbation_rejected", !pr.feasible || pr.objective < dlp.objective, pr.feasibility_slack,
              -dlp_tol, "u* + 0.1 at state " + std::to_string(g));
  }

  // Residuals
  const Eigen::MatrixXd Q = generator_matrix(m, sol.policy);
  const auto starts = residual_starts(m);
  const std::vector<double> ones(m.num_states(), 1.0);
  for (double t : {0.0, 0.5, 2.0}) {
    const std::string ts = format_number(t);
    double kol = 0.0, dyn = 0.0, dyn_disc = 0.0, dyn_const = 0.0, kol_single = 0.0;
    ctx.guarded("residual.t=" + ts, [&] {
      for (auto x : starts) {
        for (int l = 0; l <= m.states.max_level(); ++l) {
          std::vector<std::size_t> target;
          for (std::size_t i = 0; i < m.num_states(); ++i)
            if (m.states.in_level_set(i, l)) target.push_back(i);
          kol = std::max(kol, detail::kolmogorov_residual_q(Q, x, t, target, kResidualQuadratureTol));
          if (queue_source) break;
        }
        kol_single =
            std::max(kol_single, detail::kolmogorov_residual_q(Q, x, t, {m.num_states() - 1}, kResidualQuadratureTol));
        dyn = std::max(dyn, detail::dynkin_residual_q(Q, sol.value.values, x, t, false, m.alpha, kResidualQuadratureTol));
        dyn_disc =
            std::max(dyn_disc, detail::dynkin_residual_q(Q, sol.value.values, x, t, true, m.alpha, kResidualQuadratureTol));
        dyn_const = std::max(dyn_const, detail::dynkin_residual_q(Q, ones, x, t, false, m.alpha, kResidualQuadratureTol));
      }
    });
    ctx.check("residual.kolmogorov.t=" + ts, kol <= 1e-6, kol, 1e-6, "targets S_l");
    ctx.check("residual.dynkin.t=" + ts, dyn <= 1e-6, dyn, 1e-6, "u = u*");
    ctx.check("residual.dynkin_discounted.t=" + ts, dyn_disc <= 1e-6, dyn_disc, 1e-6, "u = u*");
    ctx.check("residual.dynkin_constant.t=" + ts, dyn_const <= 1e-6, dyn_const, 1e-6, "u = 1");
    ctx.diagnostic("residual.kolmogorov_any_target.t=" + ts, kol_single <= 1e-6, kol_single, 1e-6,
                   "target = last state");
  }

  // Simulator
  const PolicySpec policy = make_deterministic_policy(m, sol.policy);
  const std::size_t n = cfg.verify_episodes;
  std::vector<MomentReport> moments;
  for (double t : {0.5, 1.0, 2.0}) {
    const std::string name = "simulate.weight_moment.t=" + format_number(t);
    ctx.guarded(name, [&] { moments.push_back(weight_moment_check(m, policy, t, n, cfg.seed)); });
    const auto& r = moments.back();
    ctx.check(name, r.passed, r.mean - 3.0 * r.std_error, r.bound, "mean - 3 stderr against the drift bound");
  }
  {
    auto f = ctx.open("moments.csv");
    DsvWriter dsv(f);
    dsv.header({"t", "mean", "std_error", "bound", "exploded", "status"});
    for (const auto& r : moments)
      dsv.row(r.time, r.mean, r.std_error, r.bound, r.exploded_episodes, r.passed ? "pass" : "fail");
  }

  std::vector<int> levels;
  if (queue_source) {
    for (int l = 1; l <= 20; ++l) levels.push_back(l);
  } else {
    for (int l = 0; l <= m.states.max_level(); ++l) levels.push_back(l);
  }
  ProbeReport probe;
  ctx.guarded("simulate.explosion_probe", [&] { probe = explosion_probe(m, policy, 1.0, levels, n, cfg.seed); });
  {
    auto f = ctx.open("probe.csv");
    DsvWriter dsv(f);
    dsv.header({"level", "frequency", "half_width"});
    for (const auto& l : probe.levels) dsv.row(l.level, l.frequency, l.half_width);
  }
  const double last = probe.levels.empty() ? 0.0 : probe.levels.back().frequency;
  ctx.check("simulate.explosion_probe", probe.decreasing && last < 0.01 && probe.exploded_episodes == 0, last, 0.01,
            "frequency of leaving S_l at the last level");

  McEstimate est;
  ctx.guarded("simulate.estimate", [&] {
    const double horizon = simulation_horizon(cfg, m, policy, n);
    est = estimate_discounted_cost(m, policy, horizon, n, cfg.seed);
  });
  {
    auto f = ctx.open("estimate.csv");
    write_estimate_dsv(f, est);
  }
  const double target = integrate_gamma(m, sol.value.values);
  const double gap = std::abs(est.mean - target);
  ctx.check("simulate.no_explosion", est.exploded_episodes == 0 && probe.exploded_episodes == 0,
            static_cast<double>(est.exploded_episodes + probe.exploded_episodes), 0.0);
  ctx.diagnostic("simulate.ci_contains_value", gap <= est.half_width + est.tail_bound, gap,
                 est.half_width + est.tail_bound, "one 95% interval; misses 5% of the time");

  // Queueing closed form
  if (queue_source) {
    const auto fp = queue_checks(ctx, cfg.queue.params, cfg.queue.fp_tol, m.states.points);
    double err = 0.0;
    for (std::size_t i = 1; i < m.num_states(); ++i) {
      const double x = m.states.points[i];
      err = std::max(err, std::abs(sol.value.values[i] - queueing::u_closed_form(cfg.queue.params, x, fp.z_star)) /
                              m.weights.w_prime[i]);
    }
    ctx.check("queue.grid_vs_closed_form", err <= 5e-3, err, 5e-3, "sup |u_grid - u(x, z*)| / w_prime");
  }
}

inline void write_manifest(std::ostream& out, const RunConfig& cfg, double wall_seconds) {
  DsvWriter dsv(out);
  dsv.header({"key", "value"});
  dsv.row("command", std::string(to_string(cfg.command)));
  dsv.row("config_hash", hex64(config_hash(cfg)));
  dsv.row("seed", cfg.seed);
  dsv.row("version", std::string(kVersion));
  dsv.row("eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                       std::to_string(EIGEN_MINOR_VERSION));
  dsv.row("boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                       std::to_string(BOOST_VERSION % 100));
  // Last line; the only field that differs between equal-seed runs.
  dsv.row("wall_time_s", wall_seconds);
}

}  // namespace detail

/// Runs one command; module errors propagate as Error naming the failing check.
inline RunResult run(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  detail::RunContext ctx(cfg, result);
  {
    auto f = ctx.open("config.ini");
    f << serialize_config(cfg);
  }
  if (cfg.command == Command::example) {
    detail::run_example(ctx);
  } else {
    CtmdpModel m;
    ctx.guarded("model", [&] { m = load_model(cfg); });
    switch (cfg.command) {
      case Command::solve: detail::run_solve(ctx, m); break;
      case Command::simulate: detail::run_simulate(ctx, m); break;
      case Command::verify: detail::run_verify(ctx, m); break;
      case Command::example: break;
    }
  }
  {
    auto f = ctx.open("checks.csv");
    detail::write_check_table(f, result.checks);
  }
  if (!result.diagnostics.empty()) {
    auto f = ctx.open("diagnostics.csv");
    detail::write_check_table(f, result.diagnostics);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  {
    auto f = ctx.open("manifest.csv");
    detail::write_manifest(f, cfg, wall);
  }
  result.exit_status = result.all_passed() ? 0 : 1;
  return result;
}

}  // namespace ctmdp
