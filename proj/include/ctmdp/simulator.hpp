#pragma once

// Sampling of the controlled jump process. From the current history the
// sojourn is drawn with survival exp(-int_0^u Lambda(S|h,v) dv), where Lambda is
// the policy mixture of the exit rates, and the next state is drawn from the
// normalized mixed off-diagonal rates at the jump time.
//
// Three sojourn samplers are used:
//   * stationary policies: inverse CDF of a single exponential;
//   * policies with declared breakpoints: inverse CDF of the piecewise
//     constant cumulative hazard;
//   * otherwise: thinning against PolicySpec::rate_majorant.
//
// The sample path is taken right-continuous, xi_t = x_m on [T_m, T_{m+1}).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ctmdp/conditions.hpp"
#include "ctmdp/dsv.hpp"
#include "ctmdp/model.hpp"
#include "ctmdp/policy.hpp"
#include "ctmdp/quadrature.hpp"
#include "ctmdp/random.hpp"

namespace ctmdp {

inline constexpr std::size_t kDefaultExplosionGuard = 1'000'000;

struct Trajectory {
  std::vector<JumpRecord> jumps;
  /// Action sampled from pi(.|h_m, 0) at each decision epoch.
  std::vector<std::size_t> actions_log;
  double horizon = 0.0;  ///< simulated-until time
  bool exploded = false;
  bool absorbed = false;

  std::size_t jump_count() const { return jumps.empty() ? 0 : jumps.size() - 1; }

  /// xi_t for t in [0, horizon].
  std::size_t state_at(double t) const {
    auto it = std::upper_bound(jumps.begin(), jumps.end(), t,
                               [](double v, const JumpRecord& j) { return v < j.time; });
    return std::prev(it)->state;
  }
};

struct SimulationOptions {
  std::size_t explosion_guard = kDefaultExplosionGuard;
  /// Absolute tolerance for numerically integrated cost on thinned sojourns.
  double cost_quadrature_tol = 1e-10;
};

namespace detail {

inline std::size_t sample_index(std::span<const double> weights, double total, double u) {
  double target = u * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (target < acc) return i;
  }
  return last_positive;
}

inline double discount_integral(double alpha, double from, double to) {
  return (std::exp(-alpha * from) - std::exp(-alpha * to)) / alpha;
}

// Samples the post-jump state from the mixed rates, excluding the diagonal.
inline std::size_t sample_next_state(const CtmdpModel& m, std::size_t x, const ActionMixture& mix, double u) {
  double total = 0.0;
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (mix[k] <= 0.0) continue;
    for (const auto& e : m.kernel.row(x, k))
      if (e.to != x) total += mix[k] * e.rate;
  }
  const double target = u * total;
  double acc = 0.0;
  std::size_t last = x;
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (mix[k] <= 0.0) continue;
    for (const auto& e : m.kernel.row(x, k)) {
      if (e.to == x || e.rate <= 0.0) continue;
      acc += mix[k] * e.rate;
      last = e.to;
      if (target < acc) return e.to;
    }
  }
  return last;
}

struct EpisodeResult {
  Trajectory trajectory;
  double discounted_cost = 0.0;
};

inline EpisodeResult run_episode(const CtmdpModel& m, const PolicySpec& policy, double horizon, CounterRng& rng,
                                 CounterRng& log_rng, const SimulationOptions& opt, bool track_cost) {
  if (!(horizon > 0.0)) throw Error("simulation horizon must be positive");
  if (!policy.evaluator) throw Error("policy has no evaluator");
  const bool piecewise = !policy.constant_in_sojourn() && static_cast<bool>(policy.breakpoints);
  const bool thinning = !policy.constant_in_sojourn() && !piecewise;
  if (thinning) {
    if (!policy.rate_majorant || policy.rate_majorant->size() != m.num_states())
      throw Error("thinning requested without a valid rate majorant");
  }

  EpisodeResult out;
  Trajectory& traj = out.trajectory;
  const double alpha = m.alpha;
  const std::size_t x0 = sample_index(m.gamma, 1.0, rng.uniform());
  traj.jumps.push_back({0.0, x0, 0.0});
  traj.horizon = horizon;

  auto mixture_at = [&](const History& h, double elapsed) {
    ActionMixture mix = policy.evaluator(h, elapsed);
    check_mixture(m, h.state(), mix);
    return mix;
  };

  while (true) {
    const History h{traj.jumps};
    const std::size_t x = h.state();
    const double t = h.last_jump_time();

    ActionMixture mix0;
    if (policy.stationary_choice) {
      mix0.assign(m.num_actions(x), 0.0);
      mix0[(*policy.stationary_choice)(x)] = 1.0;
    } else {
      mix0 = mixture_at(h, 0.0);
    }
    traj.actions_log.push_back(sample_index(mix0, 1.0, log_rng.uniform()));

    double sojourn = std::numeric_limits<double>::infinity();
    ActionMixture jump_mix;

    if (!piecewise && !thinning) {
      const double rate = mixed_exit_rate(m, x, mix0);
      if (rate > 0.0)
        sojourn = rng.exponential() / rate;
      else
        traj.absorbed = true;
      if (track_cost)
        out.discounted_cost += mixed_cost(m, x, mix0) * discount_integral(alpha, t, std::min(t + sojourn, horizon));
      jump_mix = std::move(mix0);
    } else if (piecewise) {
      std::vector<double> bps = policy.breakpoints(h);
      bps.erase(std::remove_if(bps.begin(), bps.end(), [](double b) { return !(b > 0.0); }), bps.end());
      std::sort(bps.begin(), bps.end());
      const double target = rng.exponential();
      double hazard = 0.0;
      double start = 0.0;
      for (std::size_t piece = 0;; ++piece) {
        const double end = piece < bps.size() ? bps[piece] : std::numeric_limits<double>::infinity();
        ActionMixture mix = piece == 0 ? mix0 : mixture_at(h, start);
        const double rate = mixed_exit_rate(m, x, mix);
        const double len = end - start;
        double stop = end;
        bool jumped = false;
        if (rate > 0.0 && hazard + rate * len >= target) {
          stop = start + (target - hazard) / rate;
          jumped = true;
        }
        if (track_cost && t + start < horizon)
          out.discounted_cost += mixed_cost(m, x, mix) * discount_integral(alpha, t + start, std::min(t + stop, horizon));
        if (jumped) {
          sojourn = stop;
          jump_mix = std::move(mix);
          break;
        }
        if (std::isinf(end) || t + end >= horizon) {
          traj.absorbed = std::isinf(end) && rate == 0.0;
          jump_mix = std::move(mix);
          break;
        }
        hazard += rate * len;
        start = end;
      }
    } else {
      const double majorant = (*policy.rate_majorant)[x];
      double elapsed = 0.0;
      traj.absorbed = majorant == 0.0;
      if (majorant > 0.0) {
        while (t + elapsed < horizon) {
          elapsed += rng.exponential() / majorant;
          if (t + elapsed >= horizon) break;
          ActionMixture mix = mixture_at(h, elapsed);
          const double rate = mixed_exit_rate(m, x, mix);
          if (rate > majorant * (1.0 + 1e-12))
            throw Error("rate majorant violated at state " + std::to_string(x) + ": rate " + format_number(rate) +
                        " > " + format_number(majorant));
          if (rng.uniform() * majorant <= rate) {
            sojourn = elapsed;
            jump_mix = std::move(mix);
            break;
          }
        }
      }
      if (track_cost) {
        const double end = std::min(sojourn, horizon - t);
        auto integrand = [&](double u) { return mixed_cost(m, x, mixture_at(h, u)) * std::exp(-alpha * (t + u)); };
        out.discounted_cost += integrate_adaptive(integrand, 0.0, end, opt.cost_quadrature_tol).value;
      }
    }

    if (!(t + sojourn < horizon)) break;

    const std::size_t next = sample_next_state(m, x, jump_mix, rng.uniform());
    traj.jumps.push_back({t + sojourn, next, sojourn});
    if (traj.jump_count() >= opt.explosion_guard) {
      traj.exploded = true;
      traj.horizon = t + sojourn;
      break;
    }
  }
  return out;
}

inline CounterRng log_stream(std::uint64_t seed, std::uint64_t episode) {
  return CounterRng::derive(~seed, episode);
}

}  // namespace detail

inline Trajectory simulate_episode(const CtmdpModel& m, const PolicySpec& policy, double horizon, std::uint64_t seed,
                                   const SimulationOptions& opt = {}) {
  CounterRng rng(seed);
  CounterRng log_rng(~seed);
  return detail::run_episode(m, policy, horizon, rng, log_rng, opt, false).trajectory;
}

/// Trajectory of episode `index` under the stream derivation used by the estimators.
inline Trajectory simulate_episode(const CtmdpModel& m, const PolicySpec& policy, double horizon, std::uint64_t seed,
                                   std::uint64_t index, const SimulationOptions& opt = {}) {
  CounterRng rng = CounterRng::derive(seed, index);
  CounterRng log_rng = detail::log_stream(seed, index);
  return detail::run_episode(m, policy, horizon, rng, log_rng, opt, false).trajectory;
}

// ---------------------------------------------------------------------------
// Discounted cost
// ---------------------------------------------------------------------------

struct McEstimate {
  double mean = 0.0;
  double half_width = 0.0;  ///< 95% normal-approximation half-width
  double std_dev = 0.0;
  std::size_t n_episodes = 0;
  double tail_bound = 0.0;
  double horizon = 0.0;
  std::size_t exploded_episodes = 0;
};

inline constexpr double kNormalQuantile975 = 1.959963984540054;

/// Bound on |expected cost accrued after `horizon`| from the weight-moment
/// estimate E w(xi_t) <= e^{rho t} w(x) + (b/rho)(e^{rho t} - 1), integrated
/// against gamma.
inline double tail_bound(const CtmdpModel& m, double horizon) {
  const auto& W = m.weights;
  if (!W.M || !W.c || !W.rho || !W.b) throw Error("tail bound needs the constants M, c, rho, b");
  const double rho = detail::bumped_rho(*W.rho);
  const double alpha = m.alpha;
  if (!(alpha > rho)) throw Error("tail bound undefined: alpha must exceed rho");
  const double gw = integrate_gamma(m, W.w);
  const double M = *W.M, b = *W.b, c = *W.c;
  return M * (gw + b / rho) * std::exp(-(alpha - rho) * horizon) / (alpha - rho) -
         M * (b / rho) * std::exp(-alpha * horizon) / alpha + c * std::exp(-alpha * horizon) / alpha;
}

/// Smallest horizon (to 1e-9 relative) whose tail bound is at most `target`.
inline double horizon_for_tail(const CtmdpModel& m, double target) {
  if (!(target > 0.0)) throw Error("tail target must be positive");
  double hi = 1.0;
  while (tail_bound(m, hi) > target) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-9 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (tail_bound(m, mid) > target ? lo : hi) = mid;
  }
  return hi;
}

inline McEstimate estimate_discounted_cost(const CtmdpModel& m, const PolicySpec& policy, double horizon,
                                           std::size_t n, std::uint64_t seed, const SimulationOptions& opt = {}) {
  if (n < 2) throw Error("estimate_discounted_cost needs at least two episodes");
  McEstimate est;
  est.tail_bound = tail_bound(m, horizon);
  est.horizon = horizon;
  est.n_episodes = n;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = CounterRng::derive(seed, i);
    CounterRng log_rng = detail::log_stream(seed, i);
    const auto r = detail::run_episode(m, policy, horizon, rng, log_rng, opt, true);
    if (r.trajectory.exploded) ++est.exploded_episodes;
    const double delta = r.discounted_cost - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (r.discounted_cost - mean);
  }
  est.mean = mean;
  est.std_dev = std::sqrt(m2 / static_cast<double>(n - 1));
  est.half_width = kNormalQuantile975 * est.std_dev / std::sqrt(static_cast<double>(n));
  return est;
}

/// Horizon whose tail bound is at most `fraction` of the CI half-width that
/// `n` episodes are expected to give. The half-width is estimated from a pilot
/// run on a stream family disjoint from the main one.
inline double horizon_for_estimate(const CtmdpModel& m, const PolicySpec& policy, std::size_t n, std::uint64_t seed,
                                   double fraction = 0.1, std::size_t pilot = 500,
                                   const SimulationOptions& opt = {}) {
  if (n < 2 || pilot < 2) throw Error("horizon_for_estimate needs at least two episodes");
  const std::uint64_t pilot_seed = CounterRng::derive(seed, ~std::uint64_t{0}).next_u64();
  const double pilot_horizon = horizon_for_tail(m, 1e-3);
  const auto est = estimate_discounted_cost(m, policy, pilot_horizon, pilot, pilot_seed, opt);
  const double expected_hw = kNormalQuantile975 * est.std_dev / std::sqrt(static_cast<double>(n));
  // Half the allowance absorbs pilot noise in the spread estimate.
  const double target = 0.5 * fraction * expected_hw;
  return horizon_for_tail(m, target > 0.0 ? target : 1e-12);
}

// ---------------------------------------------------------------------------
// Regularity diagnostics
// ---------------------------------------------------------------------------

struct MomentReport {
  double time = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  double bound = 0.0;
  std::size_t n_episodes = 0;
  std::size_t exploded_episodes = 0;
  bool passed = false;
};

/// Monte Carlo E_gamma w(xi_t) against e^{rho t} int gamma w + (b/rho)(e^{rho t} - 1).
inline MomentReport weight_moment_check(const CtmdpModel& m, const PolicySpec& policy, double t, std::size_t n,
                                        std::uint64_t seed, const SimulationOptions& opt = {}) {
  if (n < 2) throw Error("weight_moment_check needs at least two episodes");
  if (!(t > 0.0)) throw Error("weight_moment_check needs t > 0");
  const auto& W = m.weights;
  if (!W.rho || !W.b) throw Error("weight_moment_check needs rho and b");
  const double rho = detail::bumped_rho(*W.rho);
  MomentReport r;
  r.time = t;
  r.n_episodes = n;
  r.bound = std::exp(rho * t) * integrate_gamma(m, W.w) + (*W.b / rho) * (std::exp(rho * t) - 1.0);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = CounterRng::derive(seed, i);
    CounterRng log_rng = detail::log_stream(seed, i);
    const auto ep = detail::run_episode(m, policy, t, rng, log_rng, opt, false);
    if (ep.trajectory.exploded) ++r.exploded_episodes;
    const double v = W.w[ep.trajectory.state_at(t)];
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  r.mean = mean;
  r.std_error = std::sqrt(m2 / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
  r.passed = r.mean - 3.0 * r.std_error <= r.bound && r.exploded_episodes == 0;
  return r;
}

struct ProbeLevel {
  int level = 0;
  double frequency = 0.0;
  double half_width = 0.0;
};

struct ProbeReport {
  std::vector<ProbeLevel> levels;
  std::size_t exploded_episodes = 0;
  /// Frequencies are non-increasing along the levels within their CIs.
  bool decreasing = true;
};

/// For each level l, simulates the model truncated outside S_l and records how
/// often xi_t lies in S \ S_l. Episode streams are shared across levels.
inline ProbeReport explosion_probe(const CtmdpModel& m, const PolicySpec& policy, double t,
                                   std::span<const int> levels, std::size_t n, std::uint64_t seed,
                                   const SimulationOptions& opt = {}) {
  if (n < 2) throw Error("explosion_probe needs at least two episodes");
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (!(levels[i] > levels[i - 1])) throw Error("explosion_probe levels must be increasing");
  ProbeReport report;
  for (int level : levels) {
    const CtmdpModel truncated = truncate_model(m, level);
    std::size_t outside = 0;
    for (std::size_t i = 0; i < n; ++i) {
      CounterRng rng = CounterRng::derive(seed, i);
      CounterRng log_rng = detail::log_stream(seed, i);
      const auto ep = detail::run_episode(truncated, policy, t, rng, log_rng, opt, false);
      if (ep.trajectory.exploded) ++report.exploded_episodes;
      if (!truncated.states.in_level_set(ep.trajectory.state_at(t), level)) ++outside;
    }
    const double f = static_cast<double>(outside) / static_cast<double>(n);
    const double hw = kNormalQuantile975 * std::sqrt(f * (1.0 - f) / static_cast<double>(n));
    report.levels.push_back({level, f, hw});
  }
  for (std::size_t i = 1; i < report.levels.size(); ++i) {
    const auto& a = report.levels[i - 1];
    const auto& b = report.levels[i];
    if (b.frequency > a.frequency + a.half_width + b.half_width) report.decreasing = false;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline void write_trajectory_header(std::ostream& out) {
  DsvWriter(out).header({"episode", "m", "T_m", "x_m", "action"});
}

inline void write_trajectory_rows(std::ostream& out, std::size_t episode, const Trajectory& traj) {
  DsvWriter dsv(out);
  for (std::size_t i = 0; i < traj.jumps.size(); ++i)
    dsv.row(episode, i, traj.jumps[i].time, traj.jumps[i].state, traj.actions_log[i]);
}

inline void write_estimate_dsv(std::ostream& out, const McEstimate& est) {
  DsvWriter dsv(out);
  dsv.header({"mean", "half_width", "n", "tail_bound", "horizon"});
  dsv.row(est.mean, est.half_width, est.n_episodes, est.tail_bound, est.horizon);
}

}  // namespace ctmdp
