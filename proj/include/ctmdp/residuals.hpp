#pragma once

// Residuals of the integral Kolmogorov forward equation and of the plain and
// discounted Dynkin formulas for a finite model under a stationary policy.
// Transition probabilities come from exp(u Q) (Eigen's scaling-and-squaring
// Pade exponential), time integrals from adaptive Gauss-Kronrod.

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "ctmdp/model.hpp"
#include "ctmdp/policy.hpp"
#include "ctmdp/quadrature.hpp"
#include "ctmdp/solver.hpp"

namespace ctmdp {

inline constexpr double kResidualQuadratureTol = 1e-10;

/// Q^pi(i, j) = sum_a pi(a|i) q(j|i,a) for a stationary mixture.
inline Eigen::MatrixXd generator_matrix(const CtmdpModel& m, const std::vector<ActionMixture>& mixtures) {
  const auto n = static_cast<Eigen::Index>(m.num_states());
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < m.num_states(); ++i)
    for (std::size_t k = 0; k < mixtures[i].size(); ++k)
      if (mixtures[i][k] > 0.0)
        for (const auto& e : m.kernel.row(i, k))
          Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e.to)) += mixtures[i][k] * e.rate;
  return Q;
}

inline Eigen::MatrixXd generator_matrix(const CtmdpModel& m, const DeterministicPolicy& policy) {
  std::vector<ActionMixture> mix(m.num_states());
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    mix[i].assign(m.num_actions(i), 0.0);
    mix[i][policy(i)] = 1.0;
  }
  return generator_matrix(m, mix);
}

/// Stationary mixtures of a stationary PolicySpec; throws for time- or
/// history-dependent kinds, whose marginals have no matrix-exponential form.
inline std::vector<ActionMixture> stationary_mixtures(const CtmdpModel& m, const PolicySpec& policy) {
  if (!policy.constant_in_sojourn())
    throw Error("exact transition probabilities need a stationary policy");
  std::vector<ActionMixture> out(m.num_states());
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    const JumpRecord rec{0.0, i, 0.0};
    out[i] = policy.evaluator(History{std::span<const JumpRecord>(&rec, 1)}, 0.0);
    check_mixture(m, i, out[i]);
  }
  return out;
}

/// Row x of exp(u Q).
inline Eigen::RowVectorXd transition_row(const Eigen::MatrixXd& Q, std::size_t x, double u) {
  const Eigen::MatrixXd P = (Q * u).exp();
  return P.row(static_cast<Eigen::Index>(x));
}

namespace detail {

inline double kolmogorov_residual_q(const Eigen::MatrixXd& Q, std::size_t x, double t,
                                    const std::vector<std::size_t>& target, double quad_tol) {
  const auto n = Q.rows();
  std::vector<char> in_target(static_cast<std::size_t>(n), 0);
  for (auto s : target) in_target.at(s) = 1;
  // gain_y = q(Gamma \ {y} | y), loss_y = q_y I{y in Gamma}
  Eigen::VectorXd gain = Eigen::VectorXd::Zero(n), loss = Eigen::VectorXd::Zero(n);
  for (Eigen::Index y = 0; y < n; ++y) {
    for (Eigen::Index z = 0; z < n; ++z)
      if (z != y && in_target[static_cast<std::size_t>(z)]) gain(y) += Q(y, z);
    if (in_target[static_cast<std::size_t>(y)]) loss(y) = -Q(y, y);
  }
  double lhs = 0.0;
  if (t > 0.0) {
    const Eigen::RowVectorXd p = transition_row(Q, x, t);
    for (Eigen::Index y = 0; y < n; ++y)
      if (in_target[static_cast<std::size_t>(y)]) lhs += p(y);
  } else {
    lhs = in_target[x] ? 1.0 : 0.0;
  }
  auto integrand = [&](double u) {
    const Eigen::RowVectorXd p = transition_row(Q, x, u);
    return p.dot(gain) - p.dot(loss);
  };
  const double integral = t > 0.0 ? integrate_adaptive(integrand, 0.0, t, quad_tol).value : 0.0;
  return std::abs(lhs - (in_target[x] ? 1.0 : 0.0) - integral);
}

inline double dynkin_residual_q(const Eigen::MatrixXd& Q, std::span<const double> u, std::size_t x, double t,
                                bool discounted, double alpha, double quad_tol) {
  const auto n = Q.rows();
  const Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u.data(), n);
  const Eigen::VectorXd Qu = Q * uv;
  const double ex = t > 0.0 ? transition_row(Q, x, t).dot(uv) : uv(static_cast<Eigen::Index>(x));
  if (!discounted) {
    auto integrand = [&](double v) { return transition_row(Q, x, v).dot(Qu); };
    const double integral = t > 0.0 ? integrate_adaptive(integrand, 0.0, t, quad_tol).value : 0.0;
    return std::abs(ex - uv(static_cast<Eigen::Index>(x)) - integral);
  }
  const Eigen::VectorXd g = -alpha * uv + Qu;
  auto integrand = [&](double v) { return std::exp(-alpha * v) * transition_row(Q, x, v).dot(g); };
  const double integral = t > 0.0 ? integrate_adaptive(integrand, 0.0, t, quad_tol).value : 0.0;
  return std::abs(ex * std::exp(-alpha * t) - uv(static_cast<Eigen::Index>(x)) - integral);
}

}  // namespace detail

/// |P_x(xi_t in G) - I{x in G} - int_0^t E_x[q(G \ {xi_u}|xi_u) - q_{xi_u} I{xi_u in G}] du|
inline double kolmogorov_residual(const CtmdpModel& m, const DeterministicPolicy& policy, std::size_t x, double t,
                                  const std::vector<std::size_t>& target, double quad_tol = kResidualQuadratureTol) {
  return detail::kolmogorov_residual_q(generator_matrix(m, policy), x, t, target, quad_tol);
}

inline double kolmogorov_residual(const CtmdpModel& m, const PolicySpec& policy, std::size_t x, double t,
                                  const std::vector<std::size_t>& target, double quad_tol = kResidualQuadratureTol) {
  return detail::kolmogorov_residual_q(generator_matrix(m, stationary_mixtures(m, policy)), x, t, target, quad_tol);
}

/// Residual of E_x u(xi_t) - u(x) = int_0^t E_x[(Q u)(xi_v)] dv, or with
/// `discounted` of E_x u(xi_t) e^{-alpha t} - u(x) = int_0^t e^{-alpha v} E_x[-alpha u + Q u](xi_v) dv.
inline double dynkin_residual(const CtmdpModel& m, const DeterministicPolicy& policy, const ValueFunction& u,
                              std::size_t x, double t, bool discounted, double quad_tol = kResidualQuadratureTol) {
  return detail::dynkin_residual_q(generator_matrix(m, policy), u.values, x, t, discounted, m.alpha, quad_tol);
}

inline double dynkin_residual(const CtmdpModel& m, const PolicySpec& policy, const ValueFunction& u, std::size_t x,
                              double t, bool discounted, double quad_tol = kResidualQuadratureTol) {
  return detail::dynkin_residual_q(generator_matrix(m, stationary_mixtures(m, policy)), u.values, x, t, discounted,
                                   m.alpha, quad_tol);
}

}  // namespace ctmdp
