#pragma once

// Value iteration for the discounted Bellman equation
//
//     alpha u(x) = min_a { c0(x,a) + sum_y q(y|x,a) u(y) },
//
// started from the Lyapunov upper bound u0 = M(alpha w + b)/(alpha(alpha - rho)) + c/alpha.
// Each sweep applies the per-state uniformized operator
//
//     (T u)(x) = min_a { c0(x,a) + (1 + qbar_x) u(x) + sum_y q(y|x,a) u(y) } / (alpha + 1 + qbar_x),
//
// whose transition part is a probability row because qbar_x >= q_x(a). Started
// at u0 the iterates decrease monotonically to the Bellman function.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ctmdp/conditions.hpp"
#include "ctmdp/dsv.hpp"
#include "ctmdp/model.hpp"

namespace ctmdp {

struct ValueFunction {
  std::vector<double> values;
  WeightTag norm_tag = WeightTag::w_prime;

  double norm(const CtmdpModel& m) const { return weighted_norm(values, m.weights.weight(norm_tag)); }
  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

struct DeterministicPolicy {
  std::vector<std::size_t> choice;

  std::size_t operator()(std::size_t state) const { return choice[state]; }
  friend bool operator==(const DeterministicPolicy&, const DeterministicPolicy&) = default;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double sup_change = 0.0;  ///< ||u^(n) - u^(n-1)||_{w'}
  double residual = 0.0;    ///< Bellman residual of u^(n-1)
};

struct SolveReport {
  std::size_t iterations = 0;
  bool converged = false;
  double final_change = 0.0;
  double final_residual = 0.0;
  std::vector<IterationRecord> history;
  ValueFunction value;
  DeterministicPolicy policy;
  /// Largest observed u^(n+1) - u^(n) relative to w; positive means a
  /// monotonicity violation above rounding.
  double max_increase = -std::numeric_limits<double>::infinity();
  /// Largest observed (|u^(n)| - u^(0)) relative to w.
  double max_bound_excess = -std::numeric_limits<double>::infinity();
  std::size_t monotonicity_violations = 0;
  std::size_t bound_violations = 0;
};

/// Slack for the monotonicity and boundedness assertions, relative to w(x).
inline constexpr double kMonotoneTol = 1e-12;

inline ValueFunction initial_value(const CtmdpModel& m) {
  const auto& W = m.weights;
  if (!W.M || !W.c || !W.rho || !W.b)
    throw Error("initial_value needs the constants M, c, rho, b (see with_fitted_constants)");
  const double rho = detail::bumped_rho(*W.rho);
  const double alpha = m.alpha;
  if (!(alpha > rho)) throw Error("alpha must exceed rho for the initial bound to exist");
  ValueFunction u;
  u.values.resize(m.num_states());
  for (std::size_t i = 0; i < m.num_states(); ++i)
    u.values[i] = *W.M * (alpha * W.w[i] + *W.b) / (alpha * (alpha - rho)) + *W.c / alpha;
  return u;
}

/// Precomputed uniformization data for repeated sweeps over one model.
class BellmanOperator {
 public:
  explicit BellmanOperator(const CtmdpModel& m) : model_(m), qbar_(m.num_states()) {
    for (std::size_t i = 0; i < m.num_states(); ++i) {
      qbar_[i] = max_exit_rate(m, i);
      const double scale = 1.0 + qbar_[i];
      for (std::size_t k = 0; k < m.num_actions(i); ++k) {
        const auto& row = m.kernel.row(i, k);
        double self = 1.0;
        double total = 1.0;
        for (const auto& e : row) {
          const double p = e.rate / scale;
          total += p;
          if (e.to == i)
            self += p;
          else if (p < 0.0)
            throw Error("uniformized row is not a probability row: negative entry at state " +
                        std::to_string(i) + ", action " + std::to_string(k));
        }
        if (self < -kConservativeTol || std::abs(total - 1.0) > kConservativeTol)
          throw Error("uniformized row is not a probability row at state " + std::to_string(i) + ", action " +
                      std::to_string(k));
      }
    }
  }

  std::span<const double> qbar() const { return qbar_; }

  /// min_a { c0(x,a) + sum_y q(y|x,a) u(y) } and its smallest minimizing index.
  std::pair<double, std::size_t> q_min(std::size_t state, std::span<const double> u) const {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t k = 0; k < model_.num_actions(state); ++k) {
      const double v = model_.cost.c0[state][k] + apply_row(model_.kernel.row(state, k), u);
      if (v < best) {
        best = v;
        arg = k;
      }
    }
    return {best, arg};
  }

  /// One sweep; also returns the Bellman residual of the input in w'.
  double apply(std::span<const double> u, std::span<double> out) const {
    const auto wp = model_.weights.w_prime;
    double residual = 0.0;
    for (std::size_t i = 0; i < model_.num_states(); ++i) {
      const double m = q_min(i, u).first;
      residual = std::max(residual, std::abs(model_.alpha * u[i] - m) / wp[i]);
      out[i] = (m + (1.0 + qbar_[i]) * u[i]) / (model_.alpha + 1.0 + qbar_[i]);
    }
    return residual;
  }

 private:
  const CtmdpModel& model_;
  std::vector<double> qbar_;
};

inline ValueFunction bellman_iterate(const CtmdpModel& m, const ValueFunction& u) {
  BellmanOperator op(m);
  ValueFunction v{std::vector<double>(m.num_states()), u.norm_tag};
  op.apply(u.values, v.values);
  return v;
}

/// max_x |alpha u(x) - min_a {c0 + q u}| / w'(x)
inline double bellman_residual(const CtmdpModel& m, const ValueFunction& u) {
  double r = 0.0;
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.num_actions(i); ++k)
      best = std::min(best, m.cost.c0[i][k] + apply_row(m.kernel.row(i, k), u.values));
    r = std::max(r, std::abs(m.alpha * u.values[i] - best) / m.weights.w_prime[i]);
  }
  return r;
}

/// Smallest action index attaining min_a {c0(x,a) + sum_y q(y|x,a) u(y)}.
inline DeterministicPolicy extract_policy(const CtmdpModel& m, const ValueFunction& u) {
  DeterministicPolicy p;
  p.choice.resize(m.num_states());
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.num_actions(i); ++k) {
      const double v = m.cost.c0[i][k] + apply_row(m.kernel.row(i, k), u.values);
      if (v < best) {
        best = v;
        p.choice[i] = k;
      }
    }
  }
  return p;
}

/// Actions within `tol` of the minimum of c0 + q u at one state.
inline std::vector<std::size_t> argmin_set(const CtmdpModel& m, const ValueFunction& u, std::size_t state,
                                           double tol) {
  std::vector<double> v(m.num_actions(state));
  for (std::size_t k = 0; k < v.size(); ++k)
    v[k] = m.cost.c0[state][k] + apply_row(m.kernel.row(state, k), u.values);
  const double best = *std::min_element(v.begin(), v.end());
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < v.size(); ++k)
    if (v[k] <= best + tol) out.push_back(k);
  return out;
}

inline SolveReport solve(const CtmdpModel& m, double tol = 1e-9, std::size_t max_iter = 1000000) {
  if (!(tol > 0.0)) throw Error("solve: tol must be positive");
  BellmanOperator op(m);
  const std::size_t n = m.num_states();
  const auto w = std::span<const double>(m.weights.w);
  const auto wp = std::span<const double>(m.weights.w_prime);

  SolveReport report;
  const ValueFunction u0 = initial_value(m);
  std::vector<double> u = u0.values;
  std::vector<double> next(n);

  while (report.iterations < max_iter) {
    const double residual = op.apply(u, next);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      change = std::max(change, std::abs(next[i] - u[i]) / wp[i]);
      const double increase = (next[i] - u[i]) / w[i];
      report.max_increase = std::max(report.max_increase, increase);
      if (increase > kMonotoneTol) ++report.monotonicity_violations;
      const double excess = (std::abs(next[i]) - u0.values[i]) / w[i];
      report.max_bound_excess = std::max(report.max_bound_excess, excess);
      if (excess > kMonotoneTol) ++report.bound_violations;
    }
    ++report.iterations;
    report.history.push_back({report.iterations, change, residual});
    u.swap(next);
    report.final_change = change;
    if (change <= tol) {
      report.converged = true;
      break;
    }
  }
  report.value = ValueFunction{std::move(u), WeightTag::w_prime};
  report.final_residual = bellman_residual(m, report.value);
  report.policy = extract_policy(m, report.value);
  return report;
}

struct DlpReport {
  double feasibility_slack = 0.0;
  std::size_t worst_state = 0;
  std::size_t worst_action = 0;
  double objective = 0.0;
  bool feasible = false;
};

/// Evaluates a candidate v against the dual linear program
///   max sum_x gamma(x) v(x)  s.t.  c0/alpha - v + (q v)/alpha >= 0  for all (x,a).
inline DlpReport dlp_check(const CtmdpModel& m, const ValueFunction& v, double tol) {
  DlpReport r;
  r.feasibility_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    for (std::size_t k = 0; k < m.num_actions(i); ++k) {
      const double s =
          m.cost.c0[i][k] / m.alpha - v.values[i] + apply_row(m.kernel.row(i, k), v.values) / m.alpha;
      if (s < r.feasibility_slack) {
        r.feasibility_slack = s;
        r.worst_state = i;
        r.worst_action = k;
      }
    }
  }
  r.objective = integrate_gamma(m, v.values);
  r.feasible = r.feasibility_slack >= -tol;
  return r;
}

inline void write_convergence_dsv(std::ostream& out, const SolveReport& report) {
  DsvWriter dsv(out);
  dsv.header({"iteration", "sup_change", "residual"});
  for (const auto& h : report.history) dsv.row(h.iteration, h.sup_change, h.residual);
}

inline void write_value_policy_dsv(std::ostream& out, const CtmdpModel& m, const ValueFunction& u,
                                   const DeterministicPolicy& p) {
  DsvWriter dsv(out);
  dsv.header({"state", "point", "value", "action_index", "action"});
  for (std::size_t i = 0; i < m.num_states(); ++i)
    dsv.row(i, m.states.points[i], u.values[i], p.choice[i], m.actions.values[i][p.choice[i]]);
}

}  // namespace ctmdp
