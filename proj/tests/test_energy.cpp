#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "selfint/energy.hpp"
#include "selfint/gibbs.hpp"

using namespace selfint;

namespace {

const auto Wq = Potential<1>::quadratic_symmetric(1.0);
const auto grid = GridGeometry<1>::centered({0.0}, 10.0, 2048);

GridDensity<1> uniform_box(const GridGeometry<1>& g, double a, double b) {
  return GridDensity<1>::from_function(g, [&](const Point<1>& x) { return x[0] > a && x[0] < b ? 1.0 : 0.0; });
}

// A mixture shifted so its mean, which is the center for quadratic W, sits at 0.
GridDensity<1> centered_mixture(std::mt19937_64& rng, const GridGeometry<1>& g) {
  const auto m = oracle::random_mixture(rng);
  return oracle::on_grid(m.shifted(-m.mean()), g);
}

}  // namespace

TEST(Entropy, Examples) {
  const auto g = GridGeometry<1>::centered({0.0}, 2.0, 1024);
  EXPECT_NEAR(entropy<1>(uniform_box(g, 0.0, 1.0)), 0.0, 1e-12);
  EXPECT_NEAR(entropy<1>(uniform_box(g, -0.5, 0.5)), 0.0, 1e-12);
  EXPECT_NEAR(entropy<1>(uniform_box(g, -1.0, 1.0)), -std::log(2.0), 1e-12);
  EXPECT_NEAR(entropy<1>(oracle::gaussian_on_grid(grid)), -1.41894, 1e-4);
  EXPECT_NEAR(entropy<1>(oracle::gaussian_on_grid(grid)), oracle::gauss_entropy(1.0), 1e-4);
}

TEST(Entropy, TwoDimensionalGaussianIsTwiceTheMarginal) {
  const auto g = GridGeometry<2>::centered({0.0, 0.0}, 7.0, 256);
  const auto m = GridDensity<2>::from_function(g, [](const Point<2>& x) { return oracle::gauss_pdf(x[0]) * oracle::gauss_pdf(x[1]); });
  EXPECT_NEAR(entropy<2>(m), 2.0 * oracle::gauss_entropy(1.0), 1e-3);
}

TEST(FreeEnergy, GaussianExamples) {
  EXPECT_NEAR(free_energy<1>(Wq, std::nullopt, oracle::gaussian_on_grid(grid)).total, -0.5 * std::log(2.0 * oracle::pi), 1e-3);
  const auto n4 = oracle::gaussian_on_grid(GridGeometry<1>::centered({0.0}, 16.0, 2048), 0.0, 4.0);
  EXPECT_NEAR(free_energy<1>(Wq, std::nullopt, n4).total, -0.11157, 1e-3);
  EXPECT_NEAR(free_energy<1>(Wq, std::nullopt, n4).total, oracle::gauss_free_energy_quadratic(4.0), 1e-3);
  const auto e = free_energy<1>(Potential<1>::zero(), std::nullopt, n4);
  EXPECT_EQ(e.total, e.entropy);
  EXPECT_EQ(e.interaction_term, 0.0);
}

TEST(FreeEnergy, ExternalTermIsTheExpectation) {
  const auto V = Potential<1>::external({0.0, 1.0, 0.5});
  const auto n = oracle::gaussian_on_grid(grid, 0.5, 1.0);
  EXPECT_NEAR(free_energy<1>(Potential<1>::zero(), V, n).external_term, 0.5 + 0.5 * (1.0 + 0.25), 1e-4);
}

TEST(RelativeFreeEnergy, Examples) {
  const auto rho = oracle::gaussian_on_grid(grid);
  EXPECT_EQ(relative_free_energy<1>(Wq, std::nullopt, rho, rho), 0.0);
  const double s2 = 1.2 * 1.2;
  const double expected = -0.5 * std::log(s2) + (s2 - 1.0) / 2.0;
  EXPECT_NEAR(expected, 0.0377, 1e-4);
  EXPECT_NEAR(relative_free_energy<1>(Wq, std::nullopt, oracle::gaussian_on_grid(grid, 0.0, s2), rho), expected, 1e-4);
}

TEST(RelativeFreeEnergy, NonnegativeOnCenteredDensities) {
  std::mt19937_64 rng(5);
  const auto rho = oracle::gaussian_on_grid(grid);
  for (int i = 0; i < 30; ++i)
    EXPECT_GE(relative_free_energy<1>(Wq, std::nullopt, centered_mixture(rng, grid), rho), -1e-9);
}

TEST(PhiIdentity, EqualArgumentsGiveZero) {
  const auto m = oracle::gaussian_on_grid(grid, 0.3);
  const auto s = phi_difference<1>(Wq, m, m);
  EXPECT_EQ(s.lhs, 0.0);
  EXPECT_EQ(s.rhs, 0.0);
}

TEST(PhiIdentity, ShiftedGaussians) {
  const auto s = phi_difference<1>(Wq, oracle::gaussian_on_grid(grid), oracle::gaussian_on_grid(grid, 0.5));
  EXPECT_NEAR(s.lhs, s.rhs, 1e-6);
  // phi_mu(mu) - phi_mu(nu) = -(1/2) 0.5^2 for a unit translate under quadratic W.
  EXPECT_NEAR(s.lhs, -0.125, 1e-6);
}

TEST(PhiIdentity, RandomMixturesWithAndWithoutExternal) {
  std::mt19937_64 rng(6);
  const auto W = Potential<1>::even_polynomial({0.0, 0.0, 0.5, 0.0, 0.05});
  const auto V = Potential<1>::external({0.0, 0.2, 0.3});
  const auto g = GridGeometry<1>::centered({0.0}, 8.0, 1024);
  for (int i = 0; i < 10; ++i) {
    const auto mu = oracle::on_grid(oracle::random_mixture(rng), g), nu = oracle::on_grid(oracle::random_mixture(rng), g);
    const auto a = phi_difference<1>(W, mu, nu);
    EXPECT_NEAR(a.lhs, a.rhs, 1e-6);
    const auto b = phi_difference<1>(W, mu, nu, V);
    EXPECT_NEAR(b.lhs, b.rhs, 1e-6);
  }
}

TEST(MixingInequality, Endpoints) {
  std::mt19937_64 rng(7);
  const auto mu = oracle::on_grid(oracle::random_mixture(rng), grid), nu = oracle::on_grid(oracle::random_mixture(rng), grid);
  const auto zero = mixing_inequality<1>(Wq, mu, nu, 0.0);
  EXPECT_NEAR(zero.lhs, zero.rhs, 1e-12);
  const auto same = mixing_inequality<1>(Wq, mu, mu, 1.0);
  EXPECT_NEAR(same.lhs, same.rhs, 1e-12);
  EXPECT_THROW(mixing_inequality<1>(Wq, mu, nu, 1.5), InvalidInput);
}

TEST(MixingInequality, HoldsOnRandomMixtures) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto mu = oracle::on_grid(oracle::random_mixture(rng), grid), nu = oracle::on_grid(oracle::random_mixture(rng), grid);
    for (double l : {0.1, 0.3, 0.7}) {
      const auto s = mixing_inequality<1>(Wq, mu, nu, l);
      EXPECT_LE(s.lhs, s.rhs + 1e-8);
    }
  }
}

TEST(PhiMinimality, GibbsDensityMinimizesPhi) {
  std::mt19937_64 rng(10);
  const auto g = GridGeometry<1>::centered({0.0}, 8.0, 1024);
  const auto W = Potential<1>::even_polynomial({0.0, 0.0, 0.5, 0.0, 0.1});
  for (int i = 0; i < 5; ++i) {
    const auto mu = oracle::on_grid(oracle::random_mixture(rng), g);
    const auto pi = apply_pi<1>(W, std::nullopt, mu, g).density;
    const double best = phi<1>(W, std::nullopt, mu, pi);
    for (int j = 0; j < 10; ++j)
      EXPECT_LE(best, phi<1>(W, std::nullopt, mu, oracle::on_grid(oracle::random_mixture(rng), g)) + 1e-10);
  }
}

TEST(Talagrand, CenteredDensitiesSatisfyTheTransportBound) {
  std::mt19937_64 rng(11);
  const auto rho = oracle::gaussian_on_grid(grid);
  for (int i = 0; i < 20; ++i) {
    const auto m = centered_mixture(rng, grid);
    const double w2 = w2_distance(m, rho).value;
    EXPECT_LE(w2 * w2, 2.0 / Wq.convexity_constant() * relative_free_energy<1>(Wq, std::nullopt, m, rho) + 1e-6);
  }
}

TEST(DisplacementConvexity, HoldsAlongQuantileInterpolation) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 5; ++i) {
    const auto m0 = centered_mixture(rng, grid), m1 = centered_mixture(rng, grid);
    const double F0 = free_energy<1>(Wq, std::nullopt, m0).total, F1 = free_energy<1>(Wq, std::nullopt, m1).total;
    const double w2sq = w2_squared_1d(m0, m1);
    for (double s : {0.25, 0.5, 0.75}) {
      const auto ms = displacement_interpolate(m0, m1, s, grid);
      EXPECT_NEAR(ms.mass(), 1.0, 1e-9);
      const double Fs = free_energy<1>(Wq, std::nullopt, ms).total;
      const double rhs = (1 - s) * F0 + s * F1 - 0.5 * Wq.convexity_constant() * s * (1 - s) * w2sq;
      EXPECT_LE(Fs, rhs + 1e-5);
    }
  }
}

TEST(DisplacementInterpolation, EndpointsAndTranslation) {
  const auto a = oracle::gaussian_on_grid(grid, -1.0), b = oracle::gaussian_on_grid(grid, 1.0);
  const auto mid = displacement_interpolate(a, b, 0.5, grid);
  EXPECT_LE(oracle::sup_error(mid, [](double x) { return oracle::gauss_pdf(x); }), 1e-3);
  const auto start = displacement_interpolate(a, b, 0.0, grid);
  EXPECT_LE(oracle::sup_error(start, [](double x) { return oracle::gauss_pdf(x, -1.0); }), 1e-3);
  EXPECT_THROW(displacement_interpolate(a, b, 1.2, grid), InvalidInput);
}

TEST(RateFunction, Examples) {
  RateParams p;
  EXPECT_EQ(rate_function(p, 0.0), 0.0);
  EXPECT_NEAR(rate_function(p, std::exp(-2.0)), std::exp(-2.0) / 4.0, 1e-15);
  const double e0 = p.eps0, e1 = p.eps1;
  EXPECT_NEAR(rate_function(p, e0 * (1 - 1e-12)), rate_function(p, e0 * (1 + 1e-12)), 1e-12);
  EXPECT_NEAR(rate_function(p, e1 * (1 - 1e-12)), rate_function(p, e1 * (1 + 1e-12)), 1e-11);
  EXPECT_THROW(rate_function(p, -1.0), InvalidInput);
  double prev = 0.0;
  for (int i = 1; i <= 400; ++i) {
    const double E = 1e-6 * std::pow(10.0, i * 0.02);
    const double g = rate_function(p, E);
    EXPECT_GT(g, prev);
    EXPECT_NEAR(g, oracle::rate(E, p.C7, p.eps0, p.eps1, p.k), 1e-14 * std::max(1.0, g));
    prev = g;
  }
}

TEST(Envelope, StartsAtTheInitialValue) {
  const auto env = energy_envelope(RateParams{}, 3.0, 2.0, 50.0, 20);
  EXPECT_EQ(env.front().t, 2.0);
  EXPECT_EQ(env.front().y, 3.0);
  EXPECT_EQ(env.back().t, 50.0);
  for (std::size_t i = 1; i < env.size(); ++i) EXPECT_LT(env[i].y, env[i - 1].y);
}

TEST(Envelope, SmallRegimeMatchesClosedForm) {
  RateParams p;
  const double y0 = 0.05, t0 = 1.0;
  const double u0 = -std::log(y0);
  const auto env = energy_envelope(p, y0, t0, 1e6, 60);
  for (const auto& s : env) {
    const double u = std::cbrt(u0 * u0 * u0 + 0.5 * p.C7 * (p.k + 1) * std::log(s.t / t0));
    EXPECT_NEAR(s.y, std::exp(-u), 1e-4 * std::exp(-u));
  }
  // The same curve written as exp{-((C7/2)(k+1) log(t/T0))^{1/(k+1)}} for the matching T0.
  const double T0 = t0 * std::exp(-u0 * u0 * u0 / (0.5 * p.C7 * (p.k + 1)));
  const double y = std::exp(-std::cbrt(0.5 * p.C7 * (p.k + 1) * std::log(1e6 / T0)));
  EXPECT_NEAR(env.back().y, y, 1e-4 * y);
}

TEST(Envelope, MatchesFineStepIntegrationOnEveryBranch) {
  RateParams p;
  auto g = [&](double y) { return rate_function(p, std::max(y, 0.0)); };
  for (auto [y0, t1] : {std::pair{50.0, 100.0}, std::pair{0.9, 300.0}, std::pair{0.1, 100.0}, std::pair{3.0, 2000.0}}) {
    const auto env = energy_envelope(p, y0, 1.0, std::vector<double>{t1});
    const double ref = oracle::envelope_halving(y0, 1.0, t1, g);
    EXPECT_NEAR(env.back().y, ref, 1e-4 * ref) << "y0 " << y0;
  }
  // Linear branch in closed form: y + b = (y0 + b) (t / t0)^{-1/2}.
  const double b = p.eps1 * rate_function(p, p.eps0) / p.eps0 - p.eps1;
  const auto env = energy_envelope(p, 50.0, 1.0, std::vector<double>{100.0});
  EXPECT_NEAR(env.back().y, (50.0 + b) / 10.0 - b, 1e-8);
}

TEST(Envelope, RejectsBadInput) {
  EXPECT_THROW(energy_envelope(RateParams{}, 0.0, 1.0, 2.0), InvalidInput);
  EXPECT_THROW(energy_envelope(RateParams{}, 1.0, 2.0, 1.0), InvalidInput);
  EXPECT_THROW(energy_envelope(RateParams{}, 1.0, 1.0, std::vector<double>{3.0, 2.0}), InvalidInput);
  RateParams bad;
  bad.eps1 = 0.01;
  EXPECT_THROW(energy_envelope(bad, 1.0, 1.0, 2.0), InvalidInput);
}
