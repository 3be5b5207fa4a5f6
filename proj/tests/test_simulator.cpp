#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "ctmdp/conditions.hpp"
#include "ctmdp/simulator.hpp"
#include "ctmdp/solver.hpp"
#include "support/oracles.hpp"

using namespace ctmdp;

namespace {

// State 0 leaves at rate rates[k] under action k; state 1 returns at rate 1.
CtmdpModel flip_flop(std::vector<double> rates) {
  CtmdpModel m;
  m.states.points = {0, 1};
  m.states.levels = {0, 1};
  m.actions.values = {{}, {0}};
  m.kernel.rows.resize(2);
  m.cost.c0 = {{}, {0.5}};
  for (std::size_t k = 0; k < rates.size(); ++k) {
    m.actions.values[0].push_back(static_cast<double>(k));
    m.kernel.rows[0].push_back({{1, rates[k]}, {0, -rates[k]}});
    m.cost.c0[0].push_back(1.0 + static_cast<double>(k));
  }
  m.kernel.rows[1] = {{{0, 1.0}, {1, -1.0}}};
  m.weights.w = {1.0, 1.0};
  m.weights.w_prime = {1.0, 1.0};
  m.alpha = 1.0;
  m.gamma = {1.0, 0.0};
  return with_fitted_constants(m);
}

std::vector<double> sojourns_at(const Trajectory& t, std::size_t state) {
  std::vector<double> out;
  for (std::size_t i = 1; i < t.jumps.size(); ++i)
    if (t.jumps[i - 1].state == state) out.push_back(t.jumps[i].sojourn);
  return out;
}

std::vector<double> collect_sojourns(const CtmdpModel& m, const PolicySpec& p, std::size_t count, std::uint64_t seed) {
  std::vector<double> out;
  for (std::uint64_t ep = 0; out.size() < count; ++ep) {
    const auto s = sojourns_at(simulate_episode(m, p, 20000.0, seed, ep), 0);
    out.insert(out.end(), s.begin(), s.end());
  }
  out.resize(count);
  return out;
}

double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                             static_cast<double>(j) / static_cast<double>(b.size())));
  }
  return d;
}

// Asymptotic Kolmogorov critical value at level 0.01.
constexpr double kKs01 = 1.6276;

PolicySpec half_half() { return make_randomized_stationary_policy({{0.5, 0.5}, {1.0}}); }

}  // namespace

TEST(Random, StreamsAreReproducibleAndDistinct) {
  auto a = CounterRng::derive(5, 3), b = CounterRng::derive(5, 3), c = CounterRng::derive(5, 4);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
  CounterRng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Sojourn, StationaryMixtureIsExponential) {
  const auto m = flip_flop({1.0, 3.0});
  const auto s = collect_sojourns(m, half_half(), 100000, 101);
  const double d = ks_one_sample(s, [](double t) { return 1.0 - std::exp(-2.0 * t); });
  EXPECT_LT(d * std::sqrt(100000.0), kKs01);
}

TEST(Sojourn, DeterministicPolicyIsExponential) {
  const auto m = flip_flop({1.0, 3.0});
  const auto p = make_deterministic_policy(m, DeterministicPolicy{{1, 0}});
  const auto s = collect_sojourns(m, p, 100000, 103);
  const double d = ks_one_sample(s, [](double t) { return 1.0 - std::exp(-3.0 * t); });
  EXPECT_LT(d * std::sqrt(100000.0), kKs01);
}

TEST(Sojourn, ThinningMatchesInverseCdf) {
  const auto m = flip_flop({1.0, 3.0});
  // Same constant mixture, once sampled exactly and once by thinning.
  const auto thinned = make_history_dependent_policy(
      [](const History& h, double) { return h.state() == 0 ? ActionMixture{0.5, 0.5} : ActionMixture{1.0}; }, {},
      std::vector<double>{5.0, 1.0});
  const auto a = collect_sojourns(m, half_half(), 50000, 107);
  const auto b = collect_sojourns(m, thinned, 50000, 109);
  EXPECT_LT(ks_two_sample(a, b) * std::sqrt(25000.0), kKs01);
}

TEST(Sojourn, PiecewiseAndThinningAgreeOnTimeVaryingPolicy) {
  const auto m = flip_flop({1.0, 3.0});
  // Rate 1 for the first half unit of the sojourn, rate 3 afterwards.
  auto eval = [](const History& h, double u) {
    if (h.state() != 0) return ActionMixture{1.0};
    return u < 0.5 ? ActionMixture{1.0, 0.0} : ActionMixture{0.0, 1.0};
  };
  const auto exact = make_history_dependent_policy(eval, [](const History&) { return std::vector<double>{0.5}; });
  const auto thinned = make_history_dependent_policy(eval, {}, std::vector<double>{3.0, 1.0});
  const auto a = collect_sojourns(m, exact, 50000, 113);
  const auto b = collect_sojourns(m, thinned, 50000, 127);
  auto cdf = [](double t) { return t < 0.5 ? 1.0 - std::exp(-t) : 1.0 - std::exp(-0.5 - 3.0 * (t - 0.5)); };
  EXPECT_LT(ks_one_sample(a, cdf) * std::sqrt(50000.0), kKs01);
  EXPECT_LT(ks_one_sample(b, cdf) * std::sqrt(50000.0), kKs01);
  EXPECT_LT(ks_two_sample(a, b) * std::sqrt(25000.0), kKs01);
}

TEST(Sojourn, MarkovPolicyOnAbsoluteTime) {
  const auto m = flip_flop({1.0, 3.0});
  auto mix = [](std::size_t x, double t) {
    if (x != 0) return ActionMixture{1.0};
    return t < 1.0 ? ActionMixture{1.0, 0.0} : ActionMixture{0.0, 1.0};
  };
  const auto p = make_randomized_markov_policy(mix, {1.0});
  // First sojourn from t = 0 has the two-piece survival function.
  std::vector<double> first;
  for (std::uint64_t ep = 0; ep < 40000; ++ep) {
    const auto t = simulate_episode(m, p, 50.0, 131, ep);
    if (t.jumps.size() > 1) first.push_back(t.jumps[1].sojourn);
  }
  auto cdf = [](double t) { return t < 1.0 ? 1.0 - std::exp(-t) : 1.0 - std::exp(-1.0 - 3.0 * (t - 1.0)); };
  EXPECT_LT(ks_one_sample(first, cdf) * std::sqrt(static_cast<double>(first.size())), kKs01);
}

TEST(Sojourn, MajorantViolationThrows) {
  const auto m = flip_flop({1.0, 3.0});
  const auto p = make_history_dependent_policy([](const History& h, double) {
    return h.state() == 0 ? ActionMixture{0.0, 1.0} : ActionMixture{1.0};
  }, {}, std::vector<double>{2.0, 1.0});
  EXPECT_THROW(simulate_episode(m, p, 100.0, 1), Error);
}

TEST(Trajectory, ReproducibleUnderSeed) {
  const auto m = flip_flop({1.0, 3.0});
  const auto a = simulate_episode(m, half_half(), 30.0, 77, 4);
  const auto b = simulate_episode(m, half_half(), 30.0, 77, 4);
  const auto c = simulate_episode(m, half_half(), 30.0, 78, 4);
  EXPECT_EQ(a.jumps, b.jumps);
  EXPECT_EQ(a.actions_log, b.actions_log);
  EXPECT_NE(a.jumps, c.jumps);
  EXPECT_EQ(a.actions_log.size(), a.jumps.size());
  EXPECT_LT(a.jumps.back().time, 30.0);
}

TEST(Trajectory, AbsorbingStateStops) {
  auto m = flip_flop({0.0});
  m.kernel.rows[0][0].clear();
  const auto t = simulate_episode(m, make_deterministic_policy(m, DeterministicPolicy{{0, 0}}), 10.0, 1);
  EXPECT_TRUE(t.absorbed);
  EXPECT_EQ(t.jump_count(), 0u);
  EXPECT_EQ(t.state_at(9.9), 0u);
}

TEST(Trajectory, ExplosionGuardFlags) {
  const auto m = flip_flop({1000.0});
  SimulationOptions opt;
  opt.explosion_guard = 50;
  const auto t = simulate_episode(m, make_deterministic_policy(m, DeterministicPolicy{{0, 0}}), 100.0, 3, opt);
  EXPECT_TRUE(t.exploded);
  EXPECT_EQ(t.jump_count(), 50u);
  EXPECT_LT(t.horizon, 100.0);
}

TEST(Trajectory, LogFormat) {
  const auto m = flip_flop({1.0, 3.0});
  std::ostringstream o;
  write_trajectory_header(o);
  write_trajectory_rows(o, 0, simulate_episode(m, half_half(), 5.0, 9, 0));
  EXPECT_EQ(o.str().substr(0, o.str().find('\n')), "episode,m,T_m,x_m,action");
  EXPECT_EQ(o.str().substr(o.str().find('\n') + 1, 8), "0,0,0,0,");
}

TEST(Estimate, AbsorbingCostIsExact) {
  auto m = flip_flop({0.0});
  m.kernel.rows[0][0].clear();
  const auto p = make_deterministic_policy(m, DeterministicPolicy{{0, 0}});
  const auto e = estimate_discounted_cost(m, p, 3.0, 10, 1);
  EXPECT_NEAR(e.mean, 1.0 - std::exp(-3.0), 1e-15);
  EXPECT_EQ(e.std_dev, 0.0);
}

TEST(Estimate, ThinnedCostMatchesExactSampler) {
  const auto m = flip_flop({1.0, 3.0});
  const auto thinned = make_history_dependent_policy(
      [](const History& h, double) { return h.state() == 0 ? ActionMixture{0.5, 0.5} : ActionMixture{1.0}; }, {},
      std::vector<double>{5.0, 1.0});
  const auto a = estimate_discounted_cost(m, half_half(), 25.0, 20000, 5);
  const auto b = estimate_discounted_cost(m, thinned, 25.0, 20000, 6);
  EXPECT_LT(std::abs(a.mean - b.mean), 1.5 * (a.half_width + b.half_width));
}

TEST(Estimate, ReproducibleUnderSeed) {
  const auto m = flip_flop({1.0, 3.0});
  const auto a = estimate_discounted_cost(m, half_half(), 10.0, 500, 42);
  const auto b = estimate_discounted_cost(m, half_half(), 10.0, 500, 42);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.half_width, b.half_width);
}

TEST(Estimate, TailBoundMatchesIntegral) {
  std::mt19937_64 gen(31);
  for (int rep = 0; rep < 5; ++rep) {
    auto m = oracle::random_model(gen);
    m.weights.b = 0.3;
    m.weights.c = 0.2;
    const double H = 2.0;
    const double rho = *m.weights.rho, b = *m.weights.b, M = *m.weights.M, c = *m.weights.c;
    double W = 0.0;
    for (std::size_t i = 0; i < m.num_states(); ++i) W += m.gamma[i] * m.weights.w[i];
    // Trapezoid on [H, H + 60] of e^{-alpha t} (M Ew(t) + c).
    const int steps = 600000;
    const double h = 60.0 / steps;
    double s = 0.0;
    for (int k = 0; k <= steps; ++k) {
      const double t = H + k * h;
      const double f = std::exp(-m.alpha * t) *
                       (M * (std::exp(rho * t) * W + (b / rho) * (std::exp(rho * t) - 1.0)) + c);
      s += (k == 0 || k == steps ? 0.5 : 1.0) * f;
    }
    EXPECT_NEAR(tail_bound(m, H), s * h, 1e-6 * (1.0 + s * h));
  }
}

TEST(Estimate, HorizonForTailHitsTarget) {
  const auto m = flip_flop({1.0, 3.0});
  const double H = horizon_for_tail(m, 1e-5);
  EXPECT_LE(tail_bound(m, H), 1e-5);
  EXPECT_GT(tail_bound(m, 0.99 * H), 1e-5);
}

TEST(Estimate, CoverageOfExactValue) {
  std::mt19937_64 gen(37);
  auto m = oracle::random_model(gen, {.min_states = 3, .max_states = 4});
  const DeterministicPolicy pol = solve(m, 1e-12).policy;
  const auto p = make_deterministic_policy(m, pol);
  const Eigen::VectorXd v = oracle::policy_value(m, pol.choice);
  double exact = 0.0;
  for (std::size_t i = 0; i < m.num_states(); ++i) exact += m.gamma[i] * v(static_cast<Eigen::Index>(i));
  const double H = horizon_for_tail(m, 1e-4);
  int covered = 0;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    const auto e = estimate_discounted_cost(m, p, H, 1000, 1000 + rep);
    if (std::abs(e.mean - exact) <= e.half_width + e.tail_bound) ++covered;
  }
  EXPECT_GE(covered, 45);
}

TEST(Moments, RandomModelsRespectDriftBound) {
  std::mt19937_64 gen(41);
  for (int rep = 0; rep < 10; ++rep) {
    const auto m = oracle::random_model(gen, {.max_states = 6});
    const auto p = make_deterministic_policy(m, solve(m, 1e-10).policy);
    for (double t : {0.5, 1.0, 2.0}) {
      const auto r = weight_moment_check(m, p, t, 2000, 7);
      EXPECT_TRUE(r.passed) << r.mean << " vs " << r.bound;
      EXPECT_EQ(r.exploded_episodes, 0u);
    }
  }
}

TEST(Probe, TopLevelNeverLeaves) {
  std::mt19937_64 gen(43);
  const auto m = oracle::random_model(gen, {.max_states = 5});
  const auto p = make_deterministic_policy(m, solve(m, 1e-10).policy);
  const int top = m.states.max_level();
  const std::vector<int> levels{top};
  const auto r = explosion_probe(m, p, 2.0, levels, 500, 1);
  EXPECT_EQ(r.levels[0].frequency, 0.0);
}

TEST(Probe, OutwardDriftIsDetected) {
  auto m = flip_flop({50.0});
  m.kernel.rows[1][0].clear();  // state 1 absorbs
  const auto p = make_deterministic_policy(m, DeterministicPolicy{{0, 0}});
  const std::vector<int> levels{0, 1};
  const auto r = explosion_probe(m, p, 1.0, levels, 2000, 3);
  EXPECT_GT(r.levels[0].frequency, 0.99);
  EXPECT_EQ(r.levels[1].frequency, 0.0);
  EXPECT_TRUE(r.decreasing);
  EXPECT_THROW(explosion_probe(m, p, 1.0, std::vector<int>{1, 0}, 10, 3), Error);
}
