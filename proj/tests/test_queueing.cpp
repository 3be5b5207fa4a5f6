#include <gtest/gtest.h>

#include <cmath>

#include "ctmdp/conditions.hpp"
#include "ctmdp/queueing.hpp"
#include "ctmdp/solver.hpp"
#include "support/oracles.hpp"

using namespace ctmdp;
using namespace ctmdp::queueing;

TEST(ClosedForm, CollapsesWhenHoldingCostVanishes) {
  QueueParams p;
  p.C1 = 0.0;
  for (double x : {0.01, 0.3, 1.0}) EXPECT_EQ(u_closed_form(p, x, 0.0), 0.0);
}

TEST(ClosedForm, FirstIterateBoundedByHoldingCost) {
  QueueParams p;
  for (double x = 0.01; x <= 1.0; x += 0.01) EXPECT_LE(u_closed_form(p, x, 0.0), p.C1 * x / p.alpha + 1e-15);
}

TEST(ClosedForm, MatchesDirectFormula) {
  QueueParams p;
  EXPECT_NEAR(u_closed_form(p, 0.5, 0.3), oracle::kUHalfPoint3, 1e-15);
  EXPECT_NEAR(oracle::u_direct(1, 1, 1, 0.5, 0.3), oracle::kUHalfPoint3, 1e-14);
  for (double x : {0.05, 0.2, 0.7, 1.0})
    for (double z : {0.0, 0.5, 1.0, 2.0})
      EXPECT_NEAR(u_closed_form(p, x, z), oracle::u_direct(p.alpha, p.C1, p.C2, x, z), 1e-13);
}

TEST(ClosedForm, StrictlyDecreasingInZ) {
  QueueParams p;
  for (double x : {0.05, 0.3, 1.0})
    for (double z = 0.0; z < 2.0; z += 0.05) EXPECT_LT(u_closed_form(p, x, z + 0.05), u_closed_form(p, x, z));
}

TEST(ClosedForm, DomainErrors) {
  QueueParams p;
  EXPECT_THROW(u_closed_form(p, 0.0, 0.1), Error);
  EXPECT_THROW(u_closed_form(p, 1.5, 0.1), Error);
  EXPECT_THROW(u_closed_form(p, 0.5, -0.1), Error);
}

TEST(FixedPoint, DefaultParameters) {
  const auto r = fixed_point_z(QueueParams{}, 1e-10);
  EXPECT_TRUE(r.ok());
  EXPECT_LE(r.iterations, 200u);
  EXPECT_EQ(r.z_history[0], 0.0);
  EXPECT_NEAR(r.z_history[1], oracle::kZ1, 1e-12);
  EXPECT_NEAR(r.z_history[2], oracle::kZ2, 1e-12);
  EXPECT_GT(r.z_history[1], 0.5);
  EXPECT_NEAR(r.z_star, oracle::kZStar, 1e-9);
  for (std::size_t i = 1; i < r.z_history.size(); ++i) EXPECT_GE(r.z_history[i], r.z_history[i - 1]);
  EXPECT_LE(r.max_step_ratio, 0.1 / 1.1 + 1e-6);
  EXPECT_TRUE(r.alpha_bound_check);
}

TEST(FixedPoint, MatchesRiemannOracle) {
  const double z = oracle::riemann_z_star(0.1, 1.0, 1.0, 1.0, 1000000, 1e-12);
  EXPECT_NEAR(z, oracle::kZStar, 1e-9);
  EXPECT_NEAR(fixed_point_z(QueueParams{}, 1e-12).z_star, z, 1e-8);
}

TEST(FixedPoint, HoldingCostFree) {
  QueueParams p;
  p.C1 = 0.0;
  const auto r = fixed_point_z(p, 1e-12);
  EXPECT_NEAR(r.z_history[1], 1.0, 1e-15);
  EXPECT_NEAR(r.z_star, oracle::kZStarC1Zero, 1e-10);
}

TEST(FixedPoint, IntervalAcrossParameters) {
  for (double lambda : {0.05, 0.1, 0.2})
    for (double C1 : {0.0, 0.5, 1.0, 1.9})
      for (double C2 : {0.5, 1.0, 2.0}) {
        QueueParams p;
        p.lambda = lambda;
        p.C1 = C1;
        p.C2 = C2;
        const auto r = fixed_point_z(p, 1e-10);
        EXPECT_TRUE(r.ok()) << lambda << ' ' << C1 << ' ' << C2;
        EXPECT_GT(r.z_star, 1.0 - C1 / (2.0 * p.alpha));
        EXPECT_LT(r.z_star, r.lambda_bound);
      }
}

TEST(FixedPoint, PreconditionsEnforced) {
  QueueParams p;
  p.C1 = 3.0;
  EXPECT_THROW(fixed_point_z(p), Error);
  QueueParams q;
  q.alpha = 0.3;  // alpha <= 4 lambda
  EXPECT_THROW(fixed_point_z(q), Error);
  EXPECT_THROW(fixed_point_z(QueueParams{}, 0.0), Error);
  EXPECT_THROW(fixed_point_z(QueueParams{}, 1e-10, 2), Error);
}

TEST(ZeroState, Values) {
  EXPECT_EQ(u_star_at_zero(1.0), 0.0);
  EXPECT_EQ(u_star_at_zero(0.0), 1.0);
  const auto c = check_u_star_at_zero(QueueParams{}, oracle::kZStar);
  EXPECT_TRUE(c.consistent);
  EXPECT_NEAR(c.value, 1.0 - oracle::kZStar, 1e-16);
  EXPECT_LT(c.gap, 1e-8);
  EXPECT_FALSE(check_u_star_at_zero(QueueParams{}, 0.9).consistent);
}

TEST(Policy, DefaultIsAdmissible) {
  const auto phi = optimal_policy(QueueParams{}, oracle::kZStar);
  EXPECT_EQ(phi(0.0), 0.0);
  std::vector<double> grid;
  double oracle_max = 0.0;
  for (int i = 1; i <= 100000; ++i) {
    const double x = i / 100000.0;
    grid.push_back(x);
    oracle_max = std::max(oracle_max, (oracle::u_direct(1, 1, 1, x, oracle::kZStar) + oracle::kZStar) / 2.0);
  }
  const auto r = check_admissibility(phi, grid);
  EXPECT_TRUE(r.admissible);
  EXPECT_TRUE(r.nonnegative);
  EXPECT_NEAR(r.min_required_abar, oracle_max, 1e-12);
  EXPECT_LE(r.min_required_abar, 3.0);
}

TEST(Policy, HoldingCostFreeShape) {
  QueueParams p;
  p.C1 = 0.0;
  const double z = fixed_point_z(p, 1e-12).z_star;
  const auto phi = optimal_policy(p, z);
  // No holding cost: phi*(x) = (u(x, z*) + z*)/(2 x C2) with the C1 = 0 radical.
  for (double x : {0.1, 0.5, 1.0})
    EXPECT_NEAR(phi(x), (oracle::u_direct(1, 0, 1, x, z) + z) / (2.0 * x), 1e-13);
}

TEST(Policy, TightBudgetReportsRequiredAbar) {
  QueueParams p;
  p.Abar = 0.2;
  const auto r = check_admissibility(optimal_policy(p, oracle::kZStar), std::vector<double>{0.25, 0.5, 1.0});
  EXPECT_FALSE(r.admissible);
  EXPECT_GT(r.min_required_abar, 0.2);
  EXPECT_THROW(optimal_policy(QueueParams{.C2 = 0.0}, 1.0), Error);
}

TEST(InfCost, Branches) {
  QueueParams p;
  EXPECT_DOUBLE_EQ(inf_cost_closed_form(p, 1.0), p.C1 - 0.25);
  p.C1 = 0.0;
  EXPECT_LE(inf_cost_closed_form(p, 1.0), 0.0);
  QueueParams q;
  q.C2 = 10.0;
  q.Abar = 0.01;
  for (double x : {0.1, 0.5, 1.0}) {
    double grid_min = 1e300;
    for (int k = 0; k <= 100000; ++k) {
      const double a = q.Abar / x * k / 100000.0;
      grid_min = std::min(grid_min, q.C1 * x + q.C2 * a * a - a / x);
    }
    EXPECT_NEAR(inf_cost_closed_form(q, x), grid_min, 1e-9);
  }
  QueueParams zero;
  zero.C2 = 0.0;
  EXPECT_DOUBLE_EQ(inf_cost_closed_form(zero, 0.5), 0.5 - 3.0 / 0.25);
  EXPECT_THROW(inf_cost_closed_form(p, 0.0), Error);
}

TEST(Discrete, TwoStateModelIsValid) {
  const auto m = build_discrete_model(QueueParams{}, 2);
  EXPECT_EQ(m.num_states(), 2u);
  EXPECT_TRUE(validate_kernel(m).passed);
  EXPECT_NEAR(m.gamma[0] + m.gamma[1], 1.0, 1e-15);
}

TEST(Discrete, StructureOfRows) {
  QueueParams p;
  const auto m = build_discrete_model(p, 50);
  ASSERT_TRUE(validate_kernel(m).passed);
  EXPECT_DOUBLE_EQ(diagonal(m.kernel.row(0, 0), 0), -p.lambda);
  double mass = 0.0;
  for (const auto& e : m.kernel.row(0, 0))
    if (e.to != 0) mass += e.rate;
  EXPECT_NEAR(mass, p.lambda, 1e-15);
  for (std::size_t i = 1; i < m.num_states(); ++i) {
    const double x = m.states.points[i];
    EXPECT_GT(x, 0.0);
    EXPECT_LE(x, 1.0);
    EXPECT_DOUBLE_EQ(m.weights.w[i], 1.0 / std::pow(x, 4));
    EXPECT_DOUBLE_EQ(m.weights.w_prime[i], 1.0 / (x * x));
    EXPECT_EQ(m.actions.values[i].front(), 0.0);
    EXPECT_NEAR(m.actions.values[i].back(), p.Abar / x, 1e-12);
    for (std::size_t k = 0; k < m.num_actions(i); ++k) {
      const double a = m.actions.values[i][k];
      EXPECT_NEAR(exit_rate(m.kernel.row(i, k), i), a / x, 1e-12);
      EXPECT_NEAR(m.cost.c0[i][k], p.C1 * x + p.C2 * a * a - a / x, 1e-12);
    }
  }
  for (std::size_t i = 1; i < m.num_states(); ++i) {
    const double x = m.states.points[i];
    EXPECT_GT(x, 1.0 / (m.states.levels[i] + 1));
    if (m.states.levels[i] > 1) EXPECT_LE(x, 1.0 / m.states.levels[i]);
  }
}

TEST(Discrete, DriftConstantsFromTheExample) {
  const auto m = build_discrete_model(QueueParams{}, 200);
  EXPECT_DOUBLE_EQ(*m.weights.rho, 0.4);
  EXPECT_DOUBLE_EQ(*m.weights.b, 0.0);
  for (auto id : kAllConditions) EXPECT_TRUE(check_condition(m, id).passed) << to_string(id);
}

TEST(Discrete, ClosedFormActionOnGrid) {
  QueueParams p;
  const auto m = build_discrete_model(p, 100);
  const auto phi = optimal_policy(p, fixed_point_z(p, 1e-12).z_star);
  for (std::size_t i = 1; i < m.num_states(); ++i) {
    const auto k = nearest_action(m, i, phi(m.states.points[i]));
    EXPECT_NEAR(m.actions.values[i][k], phi(m.states.points[i]), 1e-12);
  }
}

TEST(Discrete, GridSolveApproachesClosedForm) {
  QueueParams p;
  const double z = oracle::kZStar;
  double prev = 1.0;
  for (std::size_t n : {60, 120, 240}) {
    const auto m = build_discrete_model(p, n);
    const auto r = solve(m, 1e-13);
    ASSERT_TRUE(r.converged);
    double err = 0.0;
    for (std::size_t i = 1; i < n; ++i)
      err = std::max(err, std::abs(r.value[i] - u_closed_form(p, m.states.points[i], z)) / m.weights.w_prime[i]);
    EXPECT_LT(err, prev);
    prev = err;
    EXPECT_NEAR(r.value[0], 1.0 - z, 1e-3);
  }
  EXPECT_LT(prev, 5e-3);
}

TEST(Discrete, VolumeLevels) {
  EXPECT_EQ(volume_level(0.0), 0);
  EXPECT_EQ(volume_level(1.0), 1);
  EXPECT_EQ(volume_level(0.51), 1);
  EXPECT_EQ(volume_level(0.5), 2);
  EXPECT_EQ(volume_level(0.34), 2);
  EXPECT_EQ(volume_level(1.0 / 3.0), 3);
  EXPECT_EQ(volume_level(0.01), 100);
}

TEST(Output, Tables) {
  const auto fp = fixed_point_z(QueueParams{}, 1e-10);
  std::ostringstream a, b;
  write_fixed_point_dsv(a, fp);
  EXPECT_EQ(a.str().substr(0, 8), "n,z\n0,0\n");
  write_closed_form_dsv(b, optimal_policy(QueueParams{}, fp.z_star), std::vector<double>{0.0, 1.0});
  EXPECT_EQ(b.str().substr(0, b.str().find('\n')), "x,u_star,phi_star");
}
