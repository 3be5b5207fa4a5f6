#pragma once

// One-channel loss queue with controlled service intensity.
//
// State x in [0, 1]: 0 = idle, x > 0 = a job of volume x in service. Jobs
// arrive at rate lambda with volume density 5 y^4 and are rejected while the
// server is busy. Serving at intensity a in [0, Abar/x] completes the job at
// rate a/x, pays one unit on completion (income rate a/x) and costs
// C1 x + C2 a^2 per unit time.
//
// The Bellman function has the closed form
//     u(x, z) = -2 alpha C2 x^2 - z + 2 sqrt(alpha^2 C2^2 x^4 + C1 C2 x^3 + alpha C2 x^2 z)
// at the fixed point z* of z -> 1 - 5 lambda/(alpha + lambda) int_0^1 u(y, z) y^4 dy,
// with u*(0) = 1 - z* and optimal service intensity (u*(x) + z*)/(2 x C2).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ctmdp/conditions.hpp"
#include "ctmdp/dsv.hpp"
#include "ctmdp/model.hpp"
#include "ctmdp/quadrature.hpp"

namespace ctmdp::queueing {

struct QueueParams {
  double lambda = 0.1;
  double C1 = 1.0;
  double C2 = 1.0;
  double Abar = 3.0;
  double alpha = 1.0;
  /// Initial law: atom at the idle state plus the remaining mass uniform on [gamma_lo, gamma_hi].
  double gamma_atom = 0.0;
  double gamma_lo = 0.5;
  double gamma_hi = 1.0;

  friend bool operator==(const QueueParams&, const QueueParams&) = default;
};

inline void validate(const QueueParams& p) {
  auto fail = [](const std::string& what) { throw Error("invalid queue parameters: " + what); };
  if (!(p.lambda > 0.0)) fail("lambda must be positive");
  if (!(p.C1 >= 0.0) || !(p.C2 >= 0.0)) fail("C1 and C2 must be nonnegative");
  if (!(p.Abar >= 0.0)) fail("Abar must be nonnegative");
  if (!(p.alpha > 4.0 * p.lambda)) fail("alpha must exceed 4 lambda");
  if (!(p.gamma_atom >= 0.0 && p.gamma_atom <= 1.0)) fail("gamma_atom must lie in [0, 1]");
  if (p.gamma_atom < 1.0 && !(p.gamma_lo > 0.0 && p.gamma_lo < p.gamma_hi && p.gamma_hi <= 1.0))
    fail("need 0 < gamma_lo < gamma_hi <= 1");
}

/// u(x, z), evaluated in the cancellation-free form
/// (4 C1 C2 x^3 - z^2) / (2 sqrt(D) + 2 alpha C2 x^2 + z).
inline double u_closed_form(const QueueParams& p, double x, double z) {
  if (!(x > 0.0 && x <= 1.0)) throw Error("u_closed_form: x must lie in (0, 1]");
  if (!(z >= 0.0)) throw Error("u_closed_form: z must be nonnegative");
  const double x2 = x * x;
  const double D = p.alpha * p.alpha * p.C2 * p.C2 * x2 * x2 + p.C1 * p.C2 * x2 * x + p.alpha * p.C2 * x2 * z;
  const double denom = 2.0 * std::sqrt(D) + 2.0 * p.alpha * p.C2 * x2 + z;
  if (denom == 0.0) return -z;
  return (4.0 * p.C1 * p.C2 * x2 * x - z * z) / denom;
}

/// 1 - 5 lambda/(alpha + lambda) int_0^1 u(y, z) y^4 dy
inline double fixed_point_map(const QueueParams& p, double z, double quad_tol) {
  auto integrand = [&](double y) {
    if (y <= 0.0) return 0.0;
    const double y2 = y * y;
    return u_closed_form(p, y, z) * y2 * y2;
  };
  const double integral = integrate_adaptive(integrand, 0.0, 1.0, quad_tol).value;
  return 1.0 - 5.0 * p.lambda / (p.alpha + p.lambda) * integral;
}

struct FixedPointReport {
  std::vector<double> z_history;  ///< z^(0) = 0, z^(1), ...
  double z_star = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool increasing = true;
  /// z^(1) > 1 - C1/(2 alpha), with equality allowed at C1 = 0
  bool first_step_ok = false;
  /// z* < (10/7) C2 lambda + (alpha + lambda)/alpha
  double lambda_bound = 0.0;
  bool bound_check = false;
  /// z* < (10/7) C2 alpha + (alpha + lambda)/alpha (the looser, alpha-scaled variant)
  double alpha_bound = 0.0;
  bool alpha_bound_check = false;
  double max_step_ratio = 0.0;  ///< largest |dz_{n+1}| / |dz_n| observed

  bool ok() const { return converged && increasing && first_step_ok && bound_check; }
};

inline FixedPointReport fixed_point_z(const QueueParams& p, double tol = 1e-10, std::size_t max_iter = 200) {
  validate(p);
  if (!(tol > 0.0)) throw Error("fixed_point_z: tol must be positive");
  if (p.C1 / (2.0 * p.alpha) > 1.0) throw Error("fixed_point_z requires C1/(2 alpha) <= 1");
  const double quad_tol = tol / 10.0;

  FixedPointReport r;
  r.z_history.push_back(0.0);
  double z = 0.0;
  double prev_step = 0.0;
  for (std::size_t n = 0; n < max_iter; ++n) {
    const double next = fixed_point_map(p, z, quad_tol);
    const double step = next - z;
    r.z_history.push_back(next);
    ++r.iterations;
    if (step < -quad_tol) r.increasing = false;
    if (n > 0 && std::abs(prev_step) > 10.0 * quad_tol)
      r.max_step_ratio = std::max(r.max_step_ratio, std::abs(step) / std::abs(prev_step));
    prev_step = step;
    z = next;
    if (std::abs(step) <= tol) {
      r.converged = true;
      break;
    }
  }
  if (!r.converged)
    throw Error("fixed_point_z did not converge in " + std::to_string(max_iter) +
                " iterations; the contraction argument needs alpha > 4 lambda and C1 <= 2 alpha");
  r.z_star = z;
  const double step_floor = 1.0 - p.C1 / (2.0 * p.alpha);
  // Strict only when C1 > 0; at C1 = 0 the first iterate is exactly 1.
  r.first_step_ok = r.z_history.size() > 1 &&
                    (p.C1 > 0.0 ? r.z_history[1] > step_floor : r.z_history[1] >= step_floor);
  r.lambda_bound = 10.0 / 7.0 * p.C2 * p.lambda + (p.alpha + p.lambda) / p.alpha;
  r.alpha_bound = 10.0 / 7.0 * p.C2 * p.alpha + (p.alpha + p.lambda) / p.alpha;
  r.bound_check = r.z_star < r.lambda_bound;
  r.alpha_bound_check = r.z_star < r.alpha_bound;
  return r;
}

inline double u_star_at_zero(double z_star) {
  if (!(z_star >= 0.0)) throw Error("u_star_at_zero: z must be nonnegative");
  return 1.0 - z_star;
}

struct ZeroStateCheck {
  double value = 0.0;         ///< 1 - z*
  double identity = 0.0;      ///< 5 lambda/(alpha + lambda) int u*(y) y^4 dy
  double gap = 0.0;
  bool consistent = false;
};

/// Compares u*(0) = 1 - z* with the balance identity at the idle state.
inline ZeroStateCheck check_u_star_at_zero(const QueueParams& p, double z_star, double tol = 1e-8) {
  ZeroStateCheck c;
  c.value = u_star_at_zero(z_star);
  c.identity = 1.0 - fixed_point_map(p, z_star, tol / 100.0);
  c.gap = std::abs(c.value - c.identity);
  c.consistent = c.gap <= tol;
  return c;
}

/// phi*(x) = (u*(x) + z*)/(2 x C2), phi*(0) = 0.
class OptimalPolicy {
 public:
  OptimalPolicy(QueueParams p, double z_star) : p_(p), z_star_(z_star) {
    if (!(p_.C2 > 0.0)) throw Error("optimal_policy requires C2 > 0");
  }

  double operator()(double x) const {
    if (x == 0.0) return 0.0;
    return (u_closed_form(p_, x, z_star_) + z_star_) / (2.0 * x * p_.C2);
  }

  double z_star() const { return z_star_; }
  const QueueParams& params() const { return p_; }

 private:
  QueueParams p_;
  double z_star_;
};

inline OptimalPolicy optimal_policy(const QueueParams& p, double z_star) { return OptimalPolicy(p, z_star); }

struct AdmissibilityReport {
  bool admissible = false;
  bool nonnegative = false;
  /// max over the grid of x phi*(x) = (u*(x) + z*)/(2 C2): the smallest Abar that works.
  double min_required_abar = 0.0;
  double worst_x = 0.0;
};

inline AdmissibilityReport check_admissibility(const OptimalPolicy& phi, std::span<const double> grid) {
  AdmissibilityReport r;
  r.nonnegative = true;
  for (double x : grid) {
    if (x <= 0.0) continue;
    const double a = phi(x);
    if (a < 0.0) r.nonnegative = false;
    if (x * a > r.min_required_abar) {
      r.min_required_abar = x * a;
      r.worst_x = x;
    }
  }
  r.admissible = r.min_required_abar <= phi.params().Abar;
  return r;
}

/// inf over a in [0, Abar/x] of C1 x + C2 a^2 - a/x.
inline double inf_cost_closed_form(const QueueParams& p, double x) {
  if (!(x > 0.0 && x <= 1.0)) throw Error("inf_cost_closed_form: x must lie in (0, 1]");
  if (p.C2 < 0.0) throw Error("inf_cost_closed_form: C2 must be nonnegative");
  // The unconstrained minimizer 1/(2 C2 x) is admissible iff 1/(2 C2) < Abar;
  // C2 = 0 always lands in the boundary branch.
  if (p.C2 > 0.0 && 1.0 / (2.0 * p.C2) < p.Abar) return p.C1 * x - 1.0 / (4.0 * p.C2 * x * x);
  return p.C1 * x + p.C2 * p.Abar * p.Abar / (x * x) - p.Abar / (x * x);
}

struct Discretization {
  /// Left edge of the geometric part of the volume grid; (0, x_min] is one cell.
  double x_min = 0.05;
  /// Uniform action points on [0, Abar/x], endpoints included.
  std::size_t action_points = 41;
  /// Extra points in the relative band around the closed-form minimizer.
  std::size_t band_points = 20;
  double band = 0.1;
  /// z used to centre the band; computed with fixed_point_z when unset.
  std::optional<double> z_center;
};

/// Cell edges 0 = e_0 < e_1 < ... < e_k = 1 with e_1..e_k geometric from x_min.
inline std::vector<double> volume_cell_edges(std::size_t cells, double x_min) {
  std::vector<double> e(cells + 1, 0.0);
  if (cells == 1) {
    e[1] = 1.0;
    return e;
  }
  for (std::size_t j = 1; j <= cells; ++j)
    e[j] = std::pow(x_min, 1.0 - static_cast<double>(j - 1) / static_cast<double>(cells - 1));
  e[cells] = 1.0;
  return e;
}

/// Nesting level of a volume: 0 for the idle state, else the smallest l >= 1
/// with x > 1/(l + 1).
inline int volume_level(double x) {
  if (x <= 0.0) return 0;
  int l = std::max(1, static_cast<int>(std::floor(1.0 / x)));
  while (l > 1 && x > 1.0 / static_cast<double>(l)) --l;
  while (!(x > 1.0 / static_cast<double>(l + 1))) ++l;
  return l;
}

/// Finite model on {0} U {x_1 < ... < x_{n-1}}. Volume cells carry their exact
/// arrival mass int 5 y^4 dy and are represented by their y^4-weighted centroid.
inline CtmdpModel build_discrete_model(const QueueParams& p, std::size_t n_states, const Discretization& disc = {}) {
  validate(p);
  if (n_states < 2) throw Error("build_discrete_model needs at least two states");
  if (!(disc.x_min > 0.0 && disc.x_min < 1.0)) throw Error("x_min must lie in (0, 1)");
  if (disc.action_points < 2) throw Error("need at least two uniform action points");

  const std::size_t cells = n_states - 1;
  const auto edges = volume_cell_edges(cells, disc.x_min);
  std::vector<double> mass(cells), point(cells);
  double total_mass = 0.0;
  for (std::size_t j = 0; j < cells; ++j) {
    const double lo = edges[j], hi = edges[j + 1];
    mass[j] = std::pow(hi, 5) - std::pow(lo, 5);
    point[j] = (5.0 / 6.0) * (std::pow(hi, 6) - std::pow(lo, 6)) / mass[j];
    total_mass += mass[j];
  }
  for (double& mj : mass) mj /= total_mass;

  std::optional<double> z_center = disc.z_center;
  if (!z_center && p.C2 > 0.0 && p.C1 / (2.0 * p.alpha) <= 1.0) z_center = fixed_point_z(p, 1e-12).z_star;

  CtmdpModel m;
  m.alpha = p.alpha;
  m.states.points.push_back(0.0);
  m.states.levels.push_back(0);
  m.actions.values.push_back({0.0});
  m.cost.c0.push_back({0.0});
  {
    KernelRow row;
    row.push_back({0, -p.lambda});
    for (std::size_t j = 0; j < cells; ++j) row.push_back({j + 1, p.lambda * mass[j]});
    m.kernel.rows.push_back({std::move(row)});
  }
  m.weights.w.push_back(1.0);
  m.weights.w_prime.push_back(1.0);

  for (std::size_t j = 0; j < cells; ++j) {
    const double x = point[j];
    const std::size_t self = j + 1;
    const double a_max = p.Abar / x;
    std::vector<double> acts;
    for (std::size_t k = 0; k < disc.action_points; ++k)
      acts.push_back(a_max * static_cast<double>(k) / static_cast<double>(disc.action_points - 1));
    if (z_center) {
      const double centre = (u_closed_form(p, x, *z_center) + *z_center) / (2.0 * x * p.C2);
      auto push_clipped = [&](double a) {
        if (a >= 0.0 && a <= a_max) acts.push_back(a);
      };
      push_clipped(centre);
      for (std::size_t k = 0; k < disc.band_points; ++k) {
        const double s = disc.band_points == 1
                             ? 0.0
                             : -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(disc.band_points - 1);
        push_clipped(centre * (1.0 + disc.band * s));
      }
    }
    std::sort(acts.begin(), acts.end());
    acts.erase(std::unique(acts.begin(), acts.end()), acts.end());

    std::vector<KernelRow> rows;
    std::vector<double> costs;
    for (double a : acts) {
      const double r = a / x;
      rows.push_back(KernelRow{{0, r}, {self, -r}});
      costs.push_back(p.C1 * x + p.C2 * a * a - a / x);
    }
    m.states.points.push_back(x);
    m.states.levels.push_back(volume_level(x));
    m.actions.values.push_back(std::move(acts));
    m.kernel.rows.push_back(std::move(rows));
    m.cost.c0.push_back(std::move(costs));
    m.weights.w.push_back(1.0 / std::pow(x, 4));
    m.weights.w_prime.push_back(1.0 / (x * x));
  }

  // Initial law: atom at 0, uniform remainder apportioned by cell overlap.
  m.gamma.assign(n_states, 0.0);
  m.gamma[0] = p.gamma_atom;
  if (p.gamma_atom < 1.0) {
    const double width = p.gamma_hi - p.gamma_lo;
    for (std::size_t j = 0; j < cells; ++j) {
      const double overlap = std::max(0.0, std::min(edges[j + 1], p.gamma_hi) - std::max(edges[j], p.gamma_lo));
      m.gamma[j + 1] = (1.0 - p.gamma_atom) * overlap / width;
    }
  }
  double gsum = 0.0;
  for (double g : m.gamma) gsum += g;
  for (double& g : m.gamma) g /= gsum;

  auto& W = m.weights;
  W.rho = 4.0 * p.lambda;
  W.b = 0.0;
  W.rho_prime = 2.0 * p.lambda / 3.0;
  W.b_prime = 0.0;
  W.L = std::max(p.Abar, p.lambda) + 1.0;
  W.L_prime = std::max(p.Abar, p.lambda) + 1.0;
  W.c = 0.0;
  W.c_prime = 0.0;
  W.M = fit_cost_bound(m, W.w, 0.0);
  W.M_prime = fit_cost_bound(m, W.w_prime, 0.0);
  return m;
}

/// Grid index whose action value is closest to `a` (ties toward the smaller index).
inline std::size_t nearest_action(const CtmdpModel& m, std::size_t state, double a) {
  const auto& acts = m.actions.values[state];
  std::size_t best = 0;
  for (std::size_t k = 1; k < acts.size(); ++k)
    if (std::abs(acts[k] - a) < std::abs(acts[best] - a)) best = k;
  return best;
}

inline void write_fixed_point_dsv(std::ostream& out, const FixedPointReport& r) {
  DsvWriter dsv(out);
  dsv.header({"n", "z"});
  for (std::size_t i = 0; i < r.z_history.size(); ++i) dsv.row(i, r.z_history[i]);
}

inline void write_closed_form_dsv(std::ostream& out, const OptimalPolicy& phi, std::span<const double> grid) {
  DsvWriter dsv(out);
  dsv.header({"x", "u_star", "phi_star"});
  for (double x : grid) {
    const double u = x == 0.0 ? u_star_at_zero(phi.z_star()) : u_closed_form(phi.params(), x, phi.z_star());
    dsv.row(x, u, phi(x));
  }
}

}  // namespace ctmdp::queueing
