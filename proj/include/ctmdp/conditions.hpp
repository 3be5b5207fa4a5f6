#pragma once

// Numerical verification of the kernel axioms and of the drift, rate and
// cost-growth conditions on a finite CTMDP instance, plus the helpers that
// fit the constants those conditions refer to.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctmdp/dsv.hpp"
#include "ctmdp/model.hpp"

namespace ctmdp {

// ---------------------------------------------------------------------------
// Kernel validation
// ---------------------------------------------------------------------------

struct KernelRowCheck {
  std::size_t state = 0;
  std::size_t action = 0;
  double residual = 0.0;          ///< |row sum|
  double min_off_diagonal = 0.0;  ///< smallest off-diagonal rate (0 if none)
  double exit_rate = 0.0;         ///< q_x(a)
  double qbar = 0.0;              ///< sup_a q_x(a) at this state
  bool ok = true;
};

struct ValidationReport {
  std::vector<KernelRowCheck> rows;
  std::vector<std::string> failures;
  double max_residual = 0.0;
  bool passed = true;
};

/// Checks every (state, action) row for conservativeness (|row sum| <= tol),
/// nonnegative off-diagonal mass and a nonpositive diagonal. Never throws on
/// a violation; violations are listed in the report.
inline ValidationReport validate_kernel(const CtmdpModel& model, double tol = kConservativeTol) {
  ValidationReport report;
  for (std::size_t i = 0; i < model.num_states(); ++i) {
    const double qbar = max_exit_rate(model, i);
    for (std::size_t k = 0; k < model.kernel.rows[i].size(); ++k) {
      const auto& row = model.kernel.row(i, k);
      KernelRowCheck check;
      check.state = i;
      check.action = k;
      check.residual = std::abs(row_sum(row));
      check.exit_rate = exit_rate(row, i);
      check.qbar = qbar;
      double min_off = std::numeric_limits<double>::infinity();
      for (const auto& e : row)
        if (e.to != i) min_off = std::min(min_off, e.rate);
      check.min_off_diagonal = std::isinf(min_off) ? 0.0 : min_off;

      auto where = [&] { return "(state " + std::to_string(i) + ", action " + std::to_string(k) + ")"; };
      if (check.min_off_diagonal < 0.0) {
        check.ok = false;
        report.failures.push_back("negative off-diagonal rate " + where());
      }
      if (check.exit_rate < 0.0) {
        check.ok = false;
        report.failures.push_back("positive diagonal " + where());
      }
      if (!(check.residual <= tol)) {
        check.ok = false;
        report.failures.push_back("non-conservative row " + where() + ", residual " +
                                  format_number(check.residual));
      }
      report.max_residual = std::max(report.max_residual, check.residual);
      report.passed = report.passed && check.ok;
      report.rows.push_back(check);
    }
  }
  return report;
}

inline void write_dsv(std::ostream& out, const ValidationReport& report) {
  DsvWriter dsv(out);
  dsv.header({"state", "action", "residual", "min_off_diagonal", "exit_rate", "qbar", "status"});
  for (const auto& r : report.rows)
    dsv.row(r.state, r.action, r.residual, r.min_off_diagonal, r.exit_rate, r.qbar, r.ok ? "pass" : "fail");
}

// ---------------------------------------------------------------------------
// Conditions
// ---------------------------------------------------------------------------

enum class ConditionId { C1a, C1b, C1c, C2, C3, C4, C5a, C5b, C5cd, C6 };

inline constexpr ConditionId kAllConditions[] = {ConditionId::C1a, ConditionId::C1b, ConditionId::C1c,
                                                 ConditionId::C2,  ConditionId::C3,  ConditionId::C4,
                                                 ConditionId::C5a, ConditionId::C5b, ConditionId::C5cd,
                                                 ConditionId::C6};

inline std::string_view to_string(ConditionId id) {
  switch (id) {
    case ConditionId::C1a: return "C1a";
    case ConditionId::C1b: return "C1b";
    case ConditionId::C1c: return "C1c";
    case ConditionId::C2: return "C2";
    case ConditionId::C3: return "C3";
    case ConditionId::C4: return "C4";
    case ConditionId::C5a: return "C5a";
    case ConditionId::C5b: return "C5b";
    case ConditionId::C5cd: return "C5cd";
    case ConditionId::C6: return "C6";
  }
  return "?";
}

inline ConditionId parse_condition_id(std::string_view name) {
  for (auto id : kAllConditions)
    if (to_string(id) == name) return id;
  throw Error("unknown condition id '" + std::string(name) + "'");
}

struct ConditionReport {
  ConditionId id{};
  bool passed = false;
  /// Worst-case absolute slack; negative means violated.
  double slack = 0.0;
  /// Worst-case slack divided by the weight at the offending state.
  double relative_slack = 0.0;
  std::size_t worst_state = 0;
  std::size_t worst_action = 0;
  /// Certified from the finite structure rather than computed.
  bool structural = false;
  std::string detail;
};

namespace detail {

inline double require(const std::optional<double>& value, std::string_view name, ConditionId id) {
  if (!value) throw Error("condition " + std::string(to_string(id)) + " needs constant '" + std::string(name) + "'");
  return *value;
}

// min over (x,a) of rho*weight(x) + b - sum_y q(y|x,a) weight(y)
inline ConditionReport drift_slack(const CtmdpModel& m, std::span<const double> weight, double rho, double b,
                                   ConditionId id) {
  ConditionReport r;
  r.id = id;
  r.slack = std::numeric_limits<double>::infinity();
  r.relative_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    for (std::size_t k = 0; k < m.num_actions(i); ++k) {
      const double s = rho * weight[i] + b - apply_row(m.kernel.row(i, k), weight);
      r.slack = std::min(r.slack, s);
      if (s / weight[i] < r.relative_slack) {
        r.relative_slack = s / weight[i];
        r.worst_state = i;
        r.worst_action = k;
      }
    }
  }
  r.passed = r.relative_slack >= -kDriftTol;
  return r;
}

// min over x of M*weight(x) + c - |min_a c0(x,a)|
inline ConditionReport cost_slack(const CtmdpModel& m, std::span<const double> weight, double M, double c,
                                  ConditionId id) {
  ConditionReport r;
  r.id = id;
  r.slack = std::numeric_limits<double>::infinity();
  r.relative_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    const double s = M * weight[i] + c - std::abs(min_cost(m, i));
    r.slack = std::min(r.slack, s);
    if (s / weight[i] < r.relative_slack) {
      r.relative_slack = s / weight[i];
      r.worst_state = i;
    }
  }
  r.passed = r.relative_slack >= -kDriftTol;
  return r;
}

inline double bumped_rho(double rho) { return rho > 0.0 ? rho : kRhoMin; }

}  // namespace detail

/// Evaluates one condition on the grid. Drift and bound clauses report the
/// worst slack; compactness/continuity clauses are certified structurally.
inline ConditionReport check_condition(const CtmdpModel& m, ConditionId id) {
  const auto& W = m.weights;
  switch (id) {
    case ConditionId::C1a: {
      // inf of w off S_l must grow strictly at every level that adds states.
      ConditionReport r;
      r.id = id;
      const int top = m.states.max_level();
      const auto nl = static_cast<std::size_t>(top) + 1;
      std::vector<double> inf_off(nl, std::numeric_limits<double>::infinity());
      std::vector<char> populated(nl, 0);
      for (std::size_t i = 0; i < m.num_states(); ++i) {
        populated[static_cast<std::size_t>(m.states.levels[i])] = 1;
        for (int l = 0; l < m.states.levels[i]; ++l)
          inf_off[static_cast<std::size_t>(l)] = std::min(inf_off[static_cast<std::size_t>(l)], W.w[i]);
      }
      r.slack = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l + 1 < nl; ++l) {
        if (!populated[l + 1] || std::isinf(inf_off[l + 1])) continue;
        const double gap = inf_off[l + 1] - inf_off[l];
        if (gap < r.slack) {
          r.slack = gap;
          r.worst_state = l;
        }
      }
      r.relative_slack = r.slack;
      r.passed = r.slack > 0.0;
      r.detail = "levels 0.." + std::to_string(top) + "; worst_state holds the level with the smallest growth";
      return r;
    }
    case ConditionId::C1b: {
      const double rho = detail::bumped_rho(detail::require(W.rho, "rho", id));
      const double b = detail::require(W.b, "b", id);
      return detail::drift_slack(m, W.w, rho, b, id);
    }
    case ConditionId::C1c: {
      ConditionReport r;
      r.id = id;
      double worst = 0.0;
      for (std::size_t i = 0; i < m.num_states(); ++i) {
        const double q = max_exit_rate(m, i);
        if (!(q <= worst)) {
          worst = q;
          r.worst_state = i;
        }
      }
      r.passed = std::isfinite(worst);
      r.slack = r.relative_slack = r.passed ? 0.0 : -std::numeric_limits<double>::infinity();
      r.detail = "max qbar over the grid = " + format_number(worst);
      return r;
    }
    case ConditionId::C2: {
      const double rho = detail::bumped_rho(detail::require(W.rho, "rho", id));
      const double M = detail::require(W.M, "M", id);
      const double c = detail::require(W.c, "c", id);
      auto r = detail::cost_slack(m, W.w, M, c, id);
      const double gap = m.alpha - rho;
      const double gamma_w = integrate_gamma(m, W.w);
      r.detail = "alpha - rho = " + format_number(gap) + "; integral of w against gamma = " + format_number(gamma_w);
      if (gap < r.slack) r.slack = gap;
      r.relative_slack = std::min(r.relative_slack, gap);
      r.passed = r.passed && gap > 0.0 && std::isfinite(gamma_w);
      return r;
    }
    case ConditionId::C4: {
      const double L = detail::require(W.L, "L", id);
      ConditionReport r;
      r.id = id;
      r.slack = r.relative_slack = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m.num_states(); ++i) {
        const double s = L * W.w[i] - max_exit_rate(m, i);
        r.slack = std::min(r.slack, s);
        if (s / W.w[i] < r.relative_slack) {
          r.relative_slack = s / W.w[i];
          r.worst_state = i;
        }
      }
      r.passed = r.relative_slack > 0.0;
      return r;
    }
    case ConditionId::C5a: {
      const double Lp = detail::require(W.L_prime, "L_prime", id);
      ConditionReport r;
      r.id = id;
      r.slack = r.relative_slack = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m.num_states(); ++i) {
        const double s = Lp * W.w[i] - (max_exit_rate(m, i) + 1.0) * W.w_prime[i];
        r.slack = std::min(r.slack, s);
        if (s / W.w[i] < r.relative_slack) {
          r.relative_slack = s / W.w[i];
          r.worst_state = i;
        }
      }
      r.passed = r.relative_slack >= -kDriftTol;
      return r;
    }
    case ConditionId::C5b: {
      const double rho = detail::bumped_rho(detail::require(W.rho_prime, "rho_prime", id));
      const double b = detail::require(W.b_prime, "b_prime", id);
      return detail::drift_slack(m, W.w_prime, rho, b, id);
    }
    case ConditionId::C5cd: {
      const double rho = detail::bumped_rho(detail::require(W.rho_prime, "rho_prime", id));
      const double M = detail::require(W.M_prime, "M_prime", id);
      const double c = detail::require(W.c_prime, "c_prime", id);
      auto r = detail::cost_slack(m, W.w_prime, M, c, id);
      const double gap = m.alpha - rho;
      r.detail = "alpha - rho_prime = " + format_number(gap);
      if (gap < r.slack) r.slack = gap;
      r.relative_slack = std::min(r.relative_slack, gap);
      r.passed = r.passed && gap > 0.0;
      return r;
    }
    case ConditionId::C3:
    case ConditionId::C6: {
      ConditionReport r;
      r.id = id;
      r.passed = true;
      r.structural = true;
      r.detail = "holds by discretization: finite action sets are compact and every map on them is continuous";
      return r;
    }
  }
  throw Error("unknown condition id");
}

/// Smallest rho making the drift inequality with the given b hold on the grid,
/// floored at rho_min.
inline double fit_drift_rho(const CtmdpModel& m, std::span<const double> weight, double b,
                            double rho_min = kRhoMin) {
  double rho = rho_min;
  for (std::size_t i = 0; i < m.num_states(); ++i)
    for (std::size_t k = 0; k < m.num_actions(i); ++k)
      rho = std::max(rho, (apply_row(m.kernel.row(i, k), weight) - b) / weight[i]);
  return rho;
}

/// Smallest M with |min_a c0(x,a)| <= M weight(x) + c on the grid.
inline double fit_cost_bound(const CtmdpModel& m, std::span<const double> weight, double c = 0.0) {
  double M = 0.0;
  for (std::size_t i = 0; i < m.num_states(); ++i)
    M = std::max(M, (std::abs(min_cost(m, i)) - c) / weight[i]);
  return M;
}

/// Fills every constant the user did not supply with its smallest grid-valid
/// value (b, b', c, c' default to zero).
inline CtmdpModel with_fitted_constants(CtmdpModel m) {
  auto& W = m.weights;
  if (!W.b) W.b = 0.0;
  if (!W.b_prime) W.b_prime = 0.0;
  if (!W.c) W.c = 0.0;
  if (!W.c_prime) W.c_prime = 0.0;
  if (!W.rho) W.rho = fit_drift_rho(m, W.w, *W.b);
  if (!W.rho_prime) W.rho_prime = fit_drift_rho(m, W.w_prime, *W.b_prime);
  W.rho = detail::bumped_rho(*W.rho);
  W.rho_prime = detail::bumped_rho(*W.rho_prime);
  if (!W.M) W.M = fit_cost_bound(m, W.w, *W.c);
  if (!W.M_prime) W.M_prime = fit_cost_bound(m, W.w_prime, *W.c_prime);
  if (!W.L || !W.L_prime) {
    double L = 0.0, Lp = 0.0;
    for (std::size_t i = 0; i < m.num_states(); ++i) {
      const double q = max_exit_rate(m, i);
      L = std::max(L, q / W.w[i]);
      Lp = std::max(Lp, (q + 1.0) * W.w_prime[i] / W.w[i]);
    }
    // C4 is strict, so leave headroom.
    if (!W.L) W.L = L * (1.0 + 1e-6) + 1e-6;
    if (!W.L_prime) W.L_prime = Lp;
  }
  return m;
}

/// Copy of the model whose rows are zeroed outside S_level.
inline CtmdpModel truncate_model(const CtmdpModel& m, int level) {
  CtmdpModel t = m;
  for (std::size_t i = 0; i < t.num_states(); ++i)
    if (!t.states.in_level_set(i, level))
      for (auto& row : t.kernel.rows[i]) row.clear();
  return t;
}

inline void write_dsv(std::ostream& out, std::span<const ConditionReport> reports) {
  DsvWriter dsv(out);
  dsv.header({"condition", "slack", "relative_slack", "worst_state", "worst_action", "structural", "status"});
  for (const auto& r : reports)
    dsv.row(to_string(r.id), r.slack, r.relative_slack, r.worst_state, r.worst_action, r.structural,
            r.passed ? "pass" : "fail");
}

}  // namespace ctmdp
