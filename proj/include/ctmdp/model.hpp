#pragma once

// Finite CTMDP primitives: state grid, per-state action grids, the signed
// transition-rate kernel, cost rates, Lyapunov weights and the discount.
// Continuous state spaces enter through model builders that discretize onto
// a finite grid; everything in this library operates on finite instances.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctmdp {

/// Absolute tolerance for kernel row sums (conservativeness) and for
/// probability rows derived from the kernel.
inline constexpr double kConservativeTol = 1e-10;
/// Tolerance on drift/bound slacks, measured relative to w(x).
inline constexpr double kDriftTol = 1e-8;
/// Positive floor substituted for a zero drift constant.
inline constexpr double kRhoMin = 1e-6;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StateGrid {
  std::vector<double> points;
  /// Nesting level of each state: state i belongs to S_l for every l >= levels[i].
  std::vector<int> levels;

  std::size_t size() const { return points.size(); }
  int max_level() const {
    return levels.empty() ? 0 : *std::max_element(levels.begin(), levels.end());
  }
  bool in_level_set(std::size_t i, int level) const { return levels[i] <= level; }
};

struct ActionGrid {
  /// values[i] = admissible action values A(x_i).
  std::vector<std::vector<double>> values;

  std::size_t size(std::size_t state) const { return values[state].size(); }
};

struct RateEntry {
  std::size_t to;
  double rate;

  friend bool operator==(const RateEntry&, const RateEntry&) = default;
};

/// Sparse signed row q(.|x,a). The diagonal entry, when present, is -q_x(a).
using KernelRow = std::vector<RateEntry>;

inline double row_sum(const KernelRow& row) {
  double s = 0.0;
  for (const auto& e : row) s += e.rate;
  return s;
}

inline double diagonal(const KernelRow& row, std::size_t self) {
  double d = 0.0;
  for (const auto& e : row)
    if (e.to == self) d += e.rate;
  return d;
}

/// q_x(a) = -q({x}|x,a).
inline double exit_rate(const KernelRow& row, std::size_t self) { return -diagonal(row, self); }

/// Sum over y of q(y|x,a) * u(y).
inline double apply_row(const KernelRow& row, std::span<const double> u) {
  double s = 0.0;
  for (const auto& e : row) s += e.rate * u[e.to];
  return s;
}

struct SignedKernel {
  /// rows[i][k] is the row for state i under its k-th action.
  std::vector<std::vector<KernelRow>> rows;

  const KernelRow& row(std::size_t state, std::size_t action) const { return rows[state][action]; }
};

struct CostRate {
  /// c0[i][k] = cost rate at state i under its k-th action.
  std::vector<std::vector<double>> c0;
};

enum class WeightTag { w, w_prime };

struct WeightSystem {
  std::vector<double> w;
  std::vector<double> w_prime;
  std::optional<double> rho, b, rho_prime, b_prime;
  std::optional<double> L, L_prime;
  std::optional<double> M, c, M_prime, c_prime;

  std::span<const double> weight(WeightTag tag) const {
    return tag == WeightTag::w ? std::span<const double>(w) : std::span<const double>(w_prime);
  }
};

struct CtmdpModel {
  StateGrid states;
  ActionGrid actions;
  SignedKernel kernel;
  CostRate cost;
  WeightSystem weights;
  double alpha = 1.0;
  std::vector<double> gamma;

  std::size_t num_states() const { return states.size(); }
  std::size_t num_actions(std::size_t state) const { return actions.size(state); }
};

/// sup over actions of q_x(a).
inline double max_exit_rate(const CtmdpModel& model, std::size_t state) {
  double q = 0.0;
  for (const auto& row : model.kernel.rows[state]) q = std::max(q, exit_rate(row, state));
  return q;
}

inline double min_cost(const CtmdpModel& model, std::size_t state) {
  const auto& c = model.cost.c0[state];
  return *std::min_element(c.begin(), c.end());
}

/// Weighted sup-norm max_x |u(x)| / weight(x).
inline double weighted_norm(std::span<const double> u, std::span<const double> weight) {
  double n = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) n = std::max(n, std::abs(u[i]) / weight[i]);
  return n;
}

inline double integrate_gamma(const CtmdpModel& model, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += model.gamma[i] * f[i];
  return s;
}

/// Structural shape checks (sizes agree, action sets nonempty, values finite).
/// Throws Error on the first inconsistency; numerical properties of the
/// kernel are the business of validate_kernel.
inline void check_shape(const CtmdpModel& m) {
  const std::size_t n = m.num_states();
  auto fail = [](const std::string& what) { throw Error("malformed model: " + what); };
  if (n == 0) fail("no states");
  if (m.states.levels.size() != n) fail("levels size differs from number of states");
  if (m.actions.values.size() != n) fail("action grid size differs from number of states");
  if (m.kernel.rows.size() != n) fail("kernel size differs from number of states");
  if (m.cost.c0.size() != n) fail("cost size differs from number of states");
  if (m.weights.w.size() != n || m.weights.w_prime.size() != n) fail("weight arrays have wrong size");
  if (m.gamma.size() != n) fail("gamma has wrong size");
  if (!(m.alpha > 0.0)) fail("discount factor must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t na = m.actions.values[i].size();
    if (na == 0) fail("empty action set at state " + std::to_string(i));
    if (m.kernel.rows[i].size() != na || m.cost.c0[i].size() != na)
      fail("kernel/cost action count mismatch at state " + std::to_string(i));
    if (m.states.levels[i] < 0) fail("negative nesting level at state " + std::to_string(i));
    if (!(m.weights.w[i] >= 1.0) || !(m.weights.w_prime[i] >= 1.0))
      fail("weights must be >= 1 (state " + std::to_string(i) + ")");
    if (!(m.gamma[i] >= 0.0)) fail("gamma must be nonnegative");
    for (std::size_t k = 0; k < na; ++k) {
      if (!std::isfinite(m.actions.values[i][k])) fail("non-finite action value");
      if (!std::isfinite(m.cost.c0[i][k])) fail("non-finite cost");
      for (const auto& e : m.kernel.rows[i][k]) {
        if (e.to >= n) fail("kernel entry points outside the state grid");
        if (!std::isfinite(e.rate)) fail("non-finite rate");
      }
    }
  }
  double g = 0.0;
  for (double p : m.gamma) g += p;
  if (std::abs(g - 1.0) > kConservativeTol) fail("gamma does not sum to one");
}

}  // namespace ctmdp
