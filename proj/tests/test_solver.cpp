#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "ctmdp/conditions.hpp"
#include "ctmdp/model_io.hpp"
#include "ctmdp/solver.hpp"
#include "support/oracles.hpp"

using namespace ctmdp;

namespace {

CtmdpModel two_state() {
  return with_fitted_constants(read_model_file(std::string(CTMDP_SAMPLES_DIR) + "/two_state.model"));
}

// Single absorbing state with cost rate c: u* = c / alpha.
CtmdpModel absorbing(double c, double alpha) {
  CtmdpModel m;
  m.states.points = {0};
  m.states.levels = {0};
  m.actions.values = {{0}};
  m.kernel.rows = {{{}}};
  m.cost.c0 = {{c}};
  m.weights.w = {1.0};
  m.weights.w_prime = {1.0};
  m.alpha = alpha;
  m.gamma = {1.0};
  return with_fitted_constants(m);
}

}  // namespace

TEST(Solver, AbsorbingStateValue) {
  const auto r = solve(absorbing(3.0, 1.5), 1e-13);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.value[0], 2.0, 1e-12);
}

TEST(Solver, InitialValueNeedsConstants) {
  auto m = absorbing(1.0, 1.0);
  m.weights.M.reset();
  EXPECT_THROW(initial_value(m), Error);
  auto m2 = absorbing(1.0, 1.0);
  m2.alpha = *m2.weights.rho;
  EXPECT_THROW(solve(m2), Error);
}

TEST(Solver, RejectsNonProbabilityRows) {
  auto m = absorbing(1.0, 1.0);
  m.kernel.rows[0][0] = {{0, 0.5}};
  EXPECT_THROW(BellmanOperator op(m), Error);
  EXPECT_THROW(solve(absorbing(1.0, 1.0), 0.0), Error);
}

TEST(Solver, TwoStateMatchesEnumeration) {
  const auto m = two_state();
  const auto r = solve(m, 1e-13);
  ASSERT_TRUE(r.converged);
  const auto o = oracle::enumerate_policies(m);
  for (std::size_t i = 0; i < m.num_states(); ++i) EXPECT_NEAR(r.value[i], o.value(static_cast<Eigen::Index>(i)), 1e-10);
  EXPECT_EQ(r.policy.choice, o.policy);
}

TEST(Solver, RandomModelsMatchEnumeration) {
  std::mt19937_64 gen(17);
  for (int rep = 0; rep < 60; ++rep) {
    const auto m = oracle::random_model(gen);
    const auto r = solve(m, 1e-13);
    ASSERT_TRUE(r.converged);
    const auto o = oracle::enumerate_policies(m);
    for (std::size_t i = 0; i < m.num_states(); ++i)
      EXPECT_NEAR(r.value[i], o.value(static_cast<Eigen::Index>(i)), 1e-8) << "model " << rep << " state " << i;
    for (std::size_t i = 0; i < m.num_states(); ++i) {
      const auto set = argmin_set(m, r.value, i, 1e-8);
      EXPECT_NE(std::find(set.begin(), set.end(), o.policy[i]), set.end());
    }
  }
}

TEST(Solver, MonotoneAndBoundedIterates) {
  std::mt19937_64 gen(23);
  for (int rep = 0; rep < 30; ++rep) {
    const auto m = oracle::random_model(gen, {.max_states = 6});
    const auto r = solve(m, 1e-12);
    EXPECT_EQ(r.monotonicity_violations, 0u);
    EXPECT_EQ(r.bound_violations, 0u);
    EXPECT_LE(r.max_increase, kMonotoneTol);
  }
}

TEST(Solver, OneSweepIsAntitoneFromTheBound) {
  const auto m = two_state();
  const auto u0 = initial_value(m);
  const auto u1 = bellman_iterate(m, u0);
  for (std::size_t i = 0; i < m.num_states(); ++i) EXPECT_LE(u1[i], u0[i]);
}

TEST(Solver, FixedPointHasZeroResidual) {
  const auto m = two_state();
  const auto r = solve(m, 1e-14);
  EXPECT_LT(bellman_residual(m, r.value), 1e-12);
  EXPECT_LT(r.final_residual, 1e-12);
  const auto again = bellman_iterate(m, r.value);
  for (std::size_t i = 0; i < m.num_states(); ++i) EXPECT_NEAR(again[i], r.value[i], 1e-13);
}

TEST(Solver, HistoryIsRecorded) {
  const auto r = solve(two_state(), 1e-10);
  ASSERT_EQ(r.history.size(), r.iterations);
  EXPECT_EQ(r.history.front().iteration, 1u);
  EXPECT_LE(r.history.back().sup_change, 1e-10);
}

TEST(Solver, NonConvergenceIsReported) {
  const auto r = solve(two_state(), 1e-14, 3);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3u);
}

TEST(Policy, TiesResolveToSmallestIndex) {
  CtmdpModel m;
  m.states.points = {0};
  m.states.levels = {0};
  m.actions.values = {{0, 1, 2}};
  m.kernel.rows = {{{}, {}, {}}};
  m.cost.c0 = {{2.0, 1.0, 1.0}};
  m.weights.w = m.weights.w_prime = {1.0};
  m.alpha = 1.0;
  m.gamma = {1.0};
  m = with_fitted_constants(m);
  const auto r = solve(m, 1e-13);
  EXPECT_EQ(r.policy(0), 1u);
  EXPECT_EQ(argmin_set(m, r.value, 0, 1e-12), (std::vector<std::size_t>{1, 2}));
}

TEST(Dlp, SolutionIsFeasibleAndOptimal) {
  std::mt19937_64 gen(29);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = oracle::random_model(gen);
    const auto r = solve(m, 1e-13);
    const auto d = dlp_check(m, r.value, 1e-9);
    EXPECT_TRUE(d.feasible) << d.feasibility_slack;
    // Any feasible candidate scores at most the solution.
    for (int probe = 0; probe < 20; ++probe) {
      ValueFunction v = r.value;
      for (auto& x : v.values) x += unit(gen);
      const auto dv = dlp_check(m, v, 0.0);
      if (dv.feasibility_slack < 0.0)
        for (auto& x : v.values) x += dv.feasibility_slack;
      const auto shifted = dlp_check(m, v, 1e-12);
      EXPECT_TRUE(shifted.feasible);
      EXPECT_LE(shifted.objective, d.objective + 1e-8);
    }
  }
}

TEST(Dlp, ConstantShiftChangesSlackUniformly) {
  const auto m = two_state();
  const auto r = solve(m, 1e-13);
  ValueFunction v = r.value;
  for (auto& x : v.values) x -= 0.25;
  EXPECT_NEAR(dlp_check(m, v, 0.0).feasibility_slack, dlp_check(m, r.value, 0.0).feasibility_slack + 0.25, 1e-12);
}

TEST(Output, ValuePolicyTable) {
  const auto m = two_state();
  const auto r = solve(m, 1e-12);
  std::ostringstream o;
  write_value_policy_dsv(o, m, r.value, r.policy);
  const auto s = o.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "state,point,value,action_index,action");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
}
