#pragma once

// Policies for the simulator. Every policy is an evaluator mapping the jump
// history h_m and the time u elapsed since the last jump to a probability
// vector over A(x_m). Stationary kinds ignore both arguments beyond the
// current state; Markov policies see the absolute time T_m + u.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctmdp/model.hpp"
#include "ctmdp/solver.hpp"

namespace ctmdp {

enum class PolicyKind { deterministic_stationary, randomized_stationary, randomized_markov, history_dependent };

struct JumpRecord {
  double time = 0.0;       ///< T_m
  std::size_t state = 0;   ///< x_m
  double sojourn = 0.0;    ///< theta_m = T_m - T_{m-1}; zero for m = 0

  friend bool operator==(const JumpRecord&, const JumpRecord&) = default;
};

/// h_m = (x_0, theta_1, x_1, ..., theta_m, x_m), stored as jump records.
struct History {
  std::span<const JumpRecord> jumps;

  std::size_t state() const { return jumps.back().state; }
  double last_jump_time() const { return jumps.back().time; }
};

using ActionMixture = std::vector<double>;
using PolicyEvaluator = std::function<ActionMixture(const History&, double elapsed)>;
/// Elapsed-sojourn times (increasing, > 0) between which the evaluator is constant.
using BreakpointFn = std::function<std::vector<double>(const History&)>;

struct PolicySpec {
  PolicyKind kind = PolicyKind::deterministic_stationary;
  PolicyEvaluator evaluator;
  BreakpointFn breakpoints;
  /// Per-state bound on the mixed total rate, used for thinning.
  std::optional<std::vector<double>> rate_majorant;
  /// Set for deterministic stationary policies.
  std::optional<DeterministicPolicy> stationary_choice;

  bool constant_in_sojourn() const {
    return kind == PolicyKind::deterministic_stationary || kind == PolicyKind::randomized_stationary;
  }
};

inline PolicySpec make_deterministic_policy(const CtmdpModel& m, DeterministicPolicy choice) {
  for (std::size_t i = 0; i < m.num_states(); ++i)
    if (choice.choice.size() != m.num_states() || choice.choice[i] >= m.num_actions(i))
      throw Error("deterministic policy selects an action outside A(x) at state " + std::to_string(i));
  std::vector<std::size_t> sizes(m.num_states());
  for (std::size_t i = 0; i < sizes.size(); ++i) sizes[i] = m.num_actions(i);
  PolicySpec p;
  p.kind = PolicyKind::deterministic_stationary;
  p.stationary_choice = choice;
  p.evaluator = [choice = std::move(choice), sizes = std::move(sizes)](const History& h, double) {
    ActionMixture mix(sizes[h.state()], 0.0);
    mix[choice.choice[h.state()]] = 1.0;
    return mix;
  };
  return p;
}

inline PolicySpec make_randomized_stationary_policy(std::vector<ActionMixture> probabilities) {
  PolicySpec p;
  p.kind = PolicyKind::randomized_stationary;
  p.evaluator = [probs = std::move(probabilities)](const History& h, double) { return probs[h.state()]; };
  return p;
}

/// Markov policy pi(.|x, t). `time_breakpoints` are absolute times at which the
/// mixture may change; when empty, sampling falls back to thinning against
/// `rate_majorant`.
inline PolicySpec make_randomized_markov_policy(std::function<ActionMixture(std::size_t, double)> mixture,
                                                std::vector<double> time_breakpoints = {},
                                                std::optional<std::vector<double>> rate_majorant = std::nullopt) {
  PolicySpec p;
  p.kind = PolicyKind::randomized_markov;
  p.evaluator = [mixture](const History& h, double elapsed) {
    return mixture(h.state(), h.last_jump_time() + elapsed);
  };
  if (!time_breakpoints.empty()) {
    p.breakpoints = [bps = std::move(time_breakpoints)](const History& h) {
      std::vector<double> out;
      const double t0 = h.last_jump_time();
      for (double b : bps)
        if (b > t0) out.push_back(b - t0);
      return out;
    };
  }
  p.rate_majorant = std::move(rate_majorant);
  return p;
}

inline PolicySpec make_history_dependent_policy(PolicyEvaluator evaluator, BreakpointFn breakpoints = {},
                                                std::optional<std::vector<double>> rate_majorant = std::nullopt) {
  PolicySpec p;
  p.kind = PolicyKind::history_dependent;
  p.evaluator = std::move(evaluator);
  p.breakpoints = std::move(breakpoints);
  p.rate_majorant = std::move(rate_majorant);
  return p;
}

/// Throws unless `mix` is a probability vector over A(state).
inline void check_mixture(const CtmdpModel& m, std::size_t state, const ActionMixture& mix) {
  if (mix.size() != m.num_actions(state))
    throw Error("policy mixture has " + std::to_string(mix.size()) + " entries, A(x) has " +
                std::to_string(m.num_actions(state)) + " (state " + std::to_string(state) + ")");
  double s = 0.0;
  for (double p : mix) {
    if (!(p >= 0.0)) throw Error("policy mixture has a negative entry at state " + std::to_string(state));
    s += p;
  }
  if (std::abs(s - 1.0) > kConservativeTol)
    throw Error("policy mixture does not sum to one at state " + std::to_string(state));
}

/// Mixed total jump rate sum_a pi(a) q_x(a).
inline double mixed_exit_rate(const CtmdpModel& m, std::size_t state, const ActionMixture& mix) {
  double r = 0.0;
  for (std::size_t k = 0; k < mix.size(); ++k)
    if (mix[k] > 0.0) r += mix[k] * exit_rate(m.kernel.row(state, k), state);
  return r;
}

inline double mixed_cost(const CtmdpModel& m, std::size_t state, const ActionMixture& mix) {
  double c = 0.0;
  for (std::size_t k = 0; k < mix.size(); ++k)
    if (mix[k] > 0.0) c += mix[k] * m.cost.c0[state][k];
  return c;
}

}  // namespace ctmdp
