#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "selfint/flow.hpp"

using namespace selfint;

namespace {

const auto Wq = Potential<1>::quadratic_symmetric(1.0);

struct QuadraticRun {
  GridGeometry<1> grid = GridGeometry<1>::centered({0.0}, 8.0, 512);
  GridDensity<1> rho_inf;
  std::vector<FlowState<1>> states;
  double seconds = 0.0;

  QuadraticRun() {
    const auto uniform = GridDensity<1>::from_function(grid, [](const Point<1>& x) { return std::abs(x[0]) <= 5.0 ? 1.0 : 0.0; });
    rho_inf = solve_fixed_point<1>(Wq, {}, uniform, {}).density;
    FlowOptions<1> opt;
    opt.rho_inf = rho_inf;
    const auto init = smooth<1>(ParticleMeasure<1>::dirac({0.0}), 0.5, grid);
    const auto t0 = std::chrono::steady_clock::now();
    states = run_flow<1>(Wq, init, Schedule{}, opt);
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

double max_diff(const GridDensity<1>& a, const GridDensity<1>& b) {
  EXPECT_TRUE(a.geometry().same_as(b.geometry()));
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
  return e;
}

const QuadraticRun& quadratic_run() {
  static const QuadraticRun r;
  return r;
}

}  // namespace

TEST(Schedule, Examples) {
  const Schedule s;
  EXPECT_DOUBLE_EQ(s.time(4), 8.0);
  EXPECT_DOUBLE_EQ(s.time(1), 1.0);
  const auto knots = schedule_times(s);
  ASSERT_EQ(knots.size(), 400u);
  EXPECT_EQ(knots.front().n, 1);
  EXPECT_NEAR(knots[99].dT / std::sqrt(100.0), 1.5, 0.03);
  EXPECT_NEAR(knots[99].dT, std::pow(101.0, 1.5) - 1000.0, 1e-12);
}

TEST(Schedule, StrictlyIncreasingWithSlowingRatio) {
  for (double e : {1.2, 1.5, 2.0}) {
    const auto knots = schedule_times(Schedule{e, 1, 300});
    for (std::size_t i = 1; i < knots.size(); ++i) {
      EXPECT_GT(knots[i].T, knots[i - 1].T);
      EXPECT_GT(knots[i].dT, 0.0);
    }
  }
  const auto k = schedule_times(Schedule{1.5, 1, 5000});
  EXPECT_NEAR(k.back().dT / std::cbrt(k.back().T), 1.5, 1e-3);
}

TEST(Schedule, RejectsBadRanges) {
  EXPECT_THROW(schedule_times(Schedule{1.5, 0, 10}), InvalidInput);
  EXPECT_THROW(schedule_times(Schedule{1.5, 5, 5}), InvalidInput);
  EXPECT_THROW(schedule_times(Schedule{0.0, 1, 5}), InvalidInput);
}

TEST(EulerStep, FixedPointIsInvariant) {
  const auto& run = quadratic_run();
  FlowOptions<1> opt;
  opt.rho_inf = run.rho_inf;
  const auto s0 = initial_state<1>(Wq, run.rho_inf, Schedule{}, opt);
  for (double next : {1.001, 2.0, 50.0}) {
    const auto s1 = euler_step<1>(Wq, s0, next, opt);
    EXPECT_LT(max_diff(s1.density, run.rho_inf), 1e-6);
    EXPECT_NEAR(s1.density.mass(), 1.0, 1e-9);
    EXPECT_NEAR(*s1.relative_free_energy, 0.0, 1e-8);
    EXPECT_EQ(s1.n, s0.n + 1);
    EXPECT_EQ(s1.time, next);
  }
}

TEST(EulerStep, PreservesMassAndRejectsBadLambda) {
  std::mt19937_64 rng(11);
  const auto g = GridGeometry<1>::centered({0.0}, 10.0, 256);
  for (int i = 0; i < 5; ++i) {
    const auto s0 = initial_state<1>(Wq, oracle::on_grid(oracle::random_mixture(rng), g), Schedule{});
    const auto s1 = euler_step<1>(Wq, s0, 2.0);
    EXPECT_NEAR(s1.density.mass(), 1.0, 1e-9);
    EXPECT_GT(s1.step_distance, 0.0);
    EXPECT_GE(s1.phi_gap, 0.0);
  }
  const auto s0 = initial_state<1>(Wq, oracle::gaussian_on_grid(g), Schedule{});
  EXPECT_THROW(euler_step<1>(Wq, s0, 1.0), InvalidInput);
  EXPECT_THROW(euler_step<1>(Wq, s0, 0.5), InvalidInput);
}

TEST(RunFlow, FixedPointStartStaysPut) {
  const auto& run = quadratic_run();
  FlowOptions<1> opt;
  opt.rho_inf = run.rho_inf;
  const auto states = run_flow<1>(Wq, run.rho_inf, Schedule{1.5, 1, 40}, opt);
  ASSERT_EQ(states.size(), 40u);
  for (const auto& s : states) {
    EXPECT_LT(max_diff(s.density, run.rho_inf), 1e-6);
    EXPECT_NEAR(*s.relative_free_energy, 0.0, 1e-8);
  }
}

TEST(RunFlow, RelativeFreeEnergyNonincreasing) {
  const auto& run = quadratic_run();
  ASSERT_EQ(run.states.size(), 400u);
  for (std::size_t i = 1; i < run.states.size(); ++i)
    EXPECT_LE(*run.states[i].relative_free_energy, *run.states[i - 1].relative_free_energy + 1e-8) << "n=" << run.states[i].n;
  EXPECT_LT(*run.states.back().relative_free_energy, *run.states.front().relative_free_energy);
}

TEST(RunFlow, ConvergesToStandardGaussian) {
  const auto& run = quadratic_run();
  const auto target = oracle::gaussian_on_grid(run.grid);
  const double d = centered_distance<1>(Wq, run.states.back().density, target, DistanceKind::Tp).value;
  EXPECT_LE(d, 1e-2);
  for (std::size_t i = 0; i < run.states.size(); ++i) EXPECT_NEAR(run.states[i].time, std::pow(i + 1.0, 1.5), 1e-9);
}

TEST(RunFlow, UniformStartConverges) {
  const auto g = GridGeometry<1>::centered({0.0}, 8.0, 512);
  const auto init = GridDensity<1>::from_function(g, [](const Point<1>& x) { return std::abs(x[0]) <= 5.0 ? 1.0 : 0.0; });
  const auto states = run_flow<1>(Wq, init, Schedule{});
  EXPECT_LE(centered_distance<1>(Wq, states.back().density, oracle::gaussian_on_grid(g), DistanceKind::Tp).value, 1e-2);
}

TEST(RunFlow, TailConstantDoesNotInflate) {
  const auto& run = quadratic_run();
  const double C0 = tail_profile<1>(Wq, run.states.front().density, 1.0).C;
  for (std::size_t i = 0; i < run.states.size(); i += 20) {
    const auto tp = tail_profile<1>(Wq, run.states[i].density, 1.0);
    EXPECT_TRUE(tp.certified);
    EXPECT_LE(tp.C, 2.0 * C0) << "n=" << run.states[i].n;
  }
}

TEST(RunFlow, CenterIncrementsAreSummable) {
  // symmetric quartic W with a lopsided start
  const auto W = Potential<1>::even_polynomial({0.0, 0.0, 0.5, 0.0, 0.05});
  const auto g = GridGeometry<1>::centered({0.0}, 8.0, 256);
  const oracle::Mixture mix{{0.7, 0.3}, {-1.0, 1.5}, {0.6, 0.8}};
  const auto states = run_flow<1>(W, oracle::on_grid(mix, g), Schedule{1.5, 1, 200});
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 1; i < states.size(); ++i) {
    const double inc = std::abs(states[i].center[0] - states[i - 1].center[0]);
    (i < states.size() / 2 ? head : tail) += inc;
  }
  EXPECT_TRUE(std::isfinite(head + tail));
  EXPECT_LE(tail, std::max(1e-8, 0.5 * head));
}

TEST(RunFlow, Deterministic) {
  const auto g = GridGeometry<1>::centered({0.0}, 8.0, 128);
  const auto init = smooth<1>(ParticleMeasure<1>::dirac({0.3}), 0.5, g);
  const auto a = run_flow<1>(Wq, init, Schedule{1.5, 1, 30});
  const auto b = run_flow<1>(Wq, init, Schedule{1.5, 1, 30});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].density.values(), b[i].density.values());
}

// Larger C7 means a larger rate g and a faster-falling envelope, so it is
// the tiny constant that dominates every nonincreasing trace.
TEST(Envelope, SlowEnvelopeDominatesAndFastOneDoesNot) {
  const auto& run = quadratic_run();
  RateParams p;
  p.C7 = 1e-6;
  EXPECT_EQ(envelope_compare(run.states, p).fraction_satisfied, 1.0);
  p.C7 = 1e6;
  const auto fast = envelope_compare(run.states, p);
  EXPECT_LT(fast.fraction_satisfied, 0.1);
  for (const auto& e : fast.envelope) EXPECT_TRUE(std::isfinite(e.y));
}

TEST(Envelope, FixedPointTraceIsSatisfied) {
  const auto& run = quadratic_run();
  FlowOptions<1> opt;
  opt.rho_inf = run.rho_inf;
  auto states = run_flow<1>(Wq, run.rho_inf, Schedule{1.5, 1, 20}, opt);
  for (auto& s : states) s.relative_free_energy = 0.0;
  EXPECT_EQ(envelope_compare(states, RateParams{}).fraction_satisfied, 1.0);
}

TEST(Envelope, QuadraticDecayExponentPositive) {
  const auto& run = quadratic_run();
  RateParams p;
  p.C7 = fit_rate_constant(run.states);
  const auto r = envelope_compare(run.states, p);
  EXPECT_GT(r.fitted_a, 0.0);
  EXPECT_GT(r.a_lower, 0.0);
  EXPECT_LE(r.a_lower, r.fitted_a);
  EXPECT_GE(r.a_upper, r.fitted_a);
  EXPECT_EQ(r.envelope.size(), run.states.size());
  EXPECT_EQ(r.envelope.front().y, std::max(*run.states.front().relative_free_energy, 1.0));
}

TEST(Envelope, RequiresRelativeEnergies) {
  const auto g = GridGeometry<1>::centered({0.0}, 8.0, 64);
  const auto states = run_flow<1>(Wq, oracle::gaussian_on_grid(g), Schedule{1.5, 1, 3});
  EXPECT_THROW(envelope_compare(states, RateParams{}), InvalidInput);
  EXPECT_THROW(envelope_compare(std::vector<FlowState<1>>{}, RateParams{}), InvalidInput);
}

TEST(FitRateConstant, RespectsPhiGaps) {
  const auto& run = quadratic_run();
  RateParams p;
  p.C7 = fit_rate_constant(run.states);
  EXPECT_GT(p.C7, 1e-8);
  for (const auto& s : run.states)
    if (*s.relative_free_energy > 0.0) {
      EXPECT_LE(rate_function(p, *s.relative_free_energy), s.phi_gap * (1 + 1e-9));
    }
}

TEST(SmoothingRadius, Clamped) {
  EXPECT_EQ(default_smoothing_radius(1.0), 0.5);
  EXPECT_EQ(default_smoothing_radius(10.0), 0.1);
  EXPECT_EQ(default_smoothing_radius(1e6), 1e-3);
}
