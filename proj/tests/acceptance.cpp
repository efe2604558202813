// Acceptance run: one [PASS]/[FAIL] line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "selfint/selfint.hpp"

using namespace selfint;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const auto Wq = Potential<1>::quadratic_symmetric(1.0);
const unsigned threads = std::max(1u, std::thread::hardware_concurrency());

GridDensity<1> uniform_start(const GridGeometry<1>& g) {
  return GridDensity<1>::from_function(g, [](const Point<1>& x) { return std::abs(x[0]) <= 5.0 ? 1.0 : 0.0; });
}

Outcome fixed_point() {
  const auto g = GridGeometry<1>::centered({0.0}, 8.0, 1024);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = solve_fixed_point<1>(Wq, {}, uniform_start(g), {});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double err = oracle::sup_error(r.density, [](double x) { return oracle::gauss_pdf(x); });
  return {err <= 1e-3 && secs < 5.0,
          "sup error " + fmt("%.3g", err) + ", " + std::to_string(r.iterations) + " iterations, " + fmt("%.2f s", secs)};
}

Outcome free_energy_values() {
  const auto g = GridGeometry<1>::centered({0.0}, 10.0, 2048);
  const auto n01 = oracle::gaussian_on_grid(g);
  const double F = free_energy<1>(Wq, std::nullopt, n01).total, H = entropy<1>(n01);
  const double eF = std::abs(F + 0.5 * std::log(2.0 * oracle::pi));
  const double eH = std::abs(H + 0.5 * std::log(2.0 * oracle::pi * std::exp(1.0)));
  return {eF <= 1e-3 && eH <= 1e-4, "|F error| " + fmt("%.3g", eF) + ", |entropy error| " + fmt("%.3g", eH)};
}

Outcome energy_identity() {
  const auto g = GridGeometry<1>::centered({0.0}, 10.0, 1024);
  std::mt19937_64 rng(2024);
  double worst_identity = 0.0, worst_mixing = -INFINITY;
  for (int i = 0; i < 50; ++i) {
    const auto mu = oracle::on_grid(oracle::random_mixture(rng), g), nu = oracle::on_grid(oracle::random_mixture(rng), g);
    const auto s = phi_difference<1>(Wq, mu, nu);
    worst_identity = std::max(worst_identity, std::abs(s.lhs - s.rhs));
    for (double l : {0.1, 0.3, 0.7}) {
      const auto m = mixing_inequality<1>(Wq, mu, nu, l);
      worst_mixing = std::max(worst_mixing, m.lhs - m.rhs);
    }
  }
  return {worst_identity <= 1e-6 && worst_mixing <= 1e-8,
          "max |lhs - rhs| " + fmt("%.3g", worst_identity) + ", max mixing excess " + fmt("%.3g", worst_mixing)};
}

struct FlowRun {
  std::vector<FlowState<1>> states;
  GridGeometry<1> grid;
  double seconds = 0.0;
};

const FlowRun& flow_run() {
  static const FlowRun run = [] {
    FlowRun r;
    r.grid = GridGeometry<1>::centered({0.0}, 8.0, 1024);
    const auto t0 = std::chrono::steady_clock::now();
    FlowOptions<1> opt;
    opt.rho_inf = solve_fixed_point<1>(Wq, {}, uniform_start(r.grid), {}).density;
    const auto init = smooth<1>(ParticleMeasure<1>::dirac({0.0}), 0.5, r.grid);
    r.states = run_flow<1>(Wq, init, Schedule{1.5, 1, 400}, opt);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }();
  return run;
}

Outcome monotone_flow() {
  const auto& run = flow_run();
  double worst_rise = -INFINITY;
  for (std::size_t i = 1; i < run.states.size(); ++i)
    worst_rise = std::max(worst_rise, *run.states[i].relative_free_energy - *run.states[i - 1].relative_free_energy);
  const double d = centered_distance<1>(Wq, run.states.back().density, oracle::gaussian_on_grid(run.grid),
                                        DistanceKind::Tp).value;
  return {worst_rise <= 1e-8 && d <= 1e-2 && run.seconds < 30.0 && run.states.size() == 400,
          "max rise " + fmt("%.3g", worst_rise) + ", final centered T_P " + fmt("%.3g", d) + ", " +
              fmt("%.2f s", run.seconds)};
}

Outcome sde_ergodicity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto records = parallel_map(8, threads, [](std::size_t k) {
    SimConfig c;
    c.dt = 0.01;
    c.t_end = 5000.0;
    c.seed = 7;
    c.replica = k;
    return simulate<1>(Wq, {}, {0.0}, c);
  });
  const auto rho = oracle::gaussian_on_grid(GridGeometry<1>::centered({0.0}, 8.0, 2048));
  ErgodicityOptions opt;
  opt.threshold = 0.1;
  opt.required = 7;
  const auto rep = ergodicity_check<1>(Wq, records, rho, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t good = 0;
  double worst = 0.0;
  for (double f : rep.values("w2_final")) {
    good += f <= 0.1;
    worst = std::max(worst, f);
  }
  return {good >= 7 && secs < 60.0,
          std::to_string(good) + "/8 replicas within 0.1, worst " + fmt("%.3g", worst) + ", " + fmt("%.2f s", secs)};
}

Outcome talagrand() {
  const auto g = GridGeometry<1>::centered({0.0}, 10.0, 2048);
  const auto rho = solve_fixed_point<1>(Wq, {}, uniform_start(g), {}).density;
  std::mt19937_64 rng(6);
  int violations = 0;
  double worst = -INFINITY;
  for (int i = 0; i < 100; ++i) {
    const auto mix = oracle::random_mixture(rng);
    const auto m = oracle::on_grid(mix.shifted(-mix.mean()), g);
    const double w2 = w2_distance(m, rho).value;
    const double excess = w2 * w2 - 2.0 / Wq.convexity_constant() * relative_free_energy<1>(Wq, std::nullopt, m, rho);
    worst = std::max(worst, excess);
    if (excess > 1e-6) ++violations;
  }
  return {violations == 0, std::to_string(violations) + " violations, max excess " + fmt("%.3g", worst)};
}

Outcome transport_oracles() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> count(1, 8);
  std::uniform_real_distribution<double> pos(-3.0, 3.0), wt(0.05, 1.0);
  const PolyBound P = Wq.bound();
  double worst_tp = 0.0, worst_w2 = 0.0;
  for (int i = 0; i < 200; ++i) {
    std::vector<oracle::WeightedAtom> a, b;
    for (int j = count(rng); j > 0; --j) a.push_back({pos(rng), wt(rng)});
    for (int j = count(rng); j > 0; --j) b.push_back({pos(rng), wt(rng)});
    ParticleMeasure<1> ma, mb;
    for (const auto& p : a) ma.add({p.x}, p.w);
    for (const auto& p : b) mb.add({p.x}, p.w);
    const double ours = tp_distance_1d(P, ma, mb).value, ref = oracle::tp_monotone(a, b, P.scale, P.degree);
    worst_tp = std::max(worst_tp, std::abs(ours - ref) / std::max(1.0, ref));

    std::vector<double> x(6), y(6);
    std::vector<Point<1>> px, py;
    for (int j = 0; j < 6; ++j) {
      px.push_back({x[j] = pos(rng)});
      py.push_back({y[j] = pos(rng)});
    }
    const double w = w2_distance(ParticleMeasure<1>::uniform(px), ParticleMeasure<1>::uniform(py)).value;
    worst_w2 = std::max(worst_w2, std::abs(w - oracle::w2_permutations(x, y)));
  }
  return {worst_tp <= 1e-10 && worst_w2 <= 1e-10,
          "max T_P gap " + fmt("%.3g", worst_tp) + ", max W2 gap " + fmt("%.3g", worst_w2)};
}

Outcome ou_domination_check() {
  const auto results = parallel_map(4, threads, [](std::size_t k) {
    SimConfig c;
    c.dt = 1e-3;
    c.t_end = 200.0;
    c.seed = 100 + k;
    c.record_every = 1000;
    return ou_domination<1>(Wq, c, {0.0}, 10.0, 0.05).report;
  });
  std::size_t steps = 0, bad = 0, refl = 0;
  double worst = 0.0;
  for (const auto& r : results) {
    steps += r.steps_checked;
    bad += r.violations;
    refl += r.reflections;
    worst = std::max(worst, r.violation_fraction);
  }
  const double frac = static_cast<double>(bad) / static_cast<double>(steps);
  return {frac <= 0.01, "violations " + fmt("%.4f", frac) + " of " + std::to_string(steps) + " steps (worst seed " +
                            fmt("%.4f", worst) + "), " + std::to_string(refl) + " reflections"};
}

Outcome picard() {
  const double dt = 0.01;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, std::sqrt(dt));
  double worst_ratio = 0.0, worst_gap = 0.0;
  const auto Wquartic = Potential<1>::even_polynomial({0.0, 0.0, 0.5, 0.0, 0.25});
  for (int rep = 0; rep < 10; ++rep) {
    for (const auto* W : {&Wq, &Wquartic}) {
      std::vector<Point<1>> inc(static_cast<std::size_t>(picard_horizon<1>(*W, {}, {0.1}) / dt));
      for (auto& p : inc) p = {nd(rng)};
      const auto r = picard_bootstrap<1>(*W, {}, {0.1}, inc, dt, std::sqrt(2.0));
      for (std::size_t i = 1; i < r.distances.size(); ++i)
        if (r.distances[i - 1] > 1e-12) worst_ratio = std::max(worst_ratio, r.distances[i] / r.distances[i - 1]);
      if (W != &Wq) continue;
      std::vector<double> raw;
      for (const auto& p : inc) raw.push_back(p[0]);
      const auto fine = oracle::fine_euler_quadratic(0.1, raw, dt, std::sqrt(2.0), 1.0, 64, 500 + rep);
      for (std::size_t k = 0; k < fine.size(); ++k) worst_gap = std::max(worst_gap, std::abs(r.path[k][0] - fine[k]));
    }
  }
  return {worst_ratio <= 0.6 && worst_gap <= 5.0 * dt,
          "max contraction ratio " + fmt("%.3g", worst_ratio) + ", max gap to fine restart " + fmt("%.3g", worst_gap)};
}

Outcome reduced_system() {
  const auto paths = parallel_map(8, threads, [](std::size_t k) { return appendix2_system(1e5, 0.01, 2024, k); });
  const auto rep = appendix2_report(paths, 1e2, 1e5, 0.9, 1.1);
  const double slope = rep.fit("c_vs_log_t")->parameters.at("slope");
  return {rep.pass(), "slope " + fmt("%.4f", slope)};
}

Outcome rate_shape() {
  const auto& run = flow_run();
  RateParams p;
  p.C7 = fit_rate_constant(run.states);
  const auto r = envelope_compare(run.states, p);
  return {r.fitted_a > 0.0 && r.a_lower > 0.0 && r.fraction_satisfied >= 0.95,
          "a " + fmt("%.4g", r.fitted_a) + " (lower " + fmt("%.4g", r.a_lower) + "), C7 " + fmt("%.4g", p.C7) +
              ", envelope holds at " + fmt("%.1f%%", 100.0 * r.fraction_satisfied)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"fixed point of the Gibbs map", fixed_point},
      {"Gaussian free energy and entropy", free_energy_values},
      {"phi identity and mixing inequality", energy_identity},
      {"monotone Euler flow", monotone_flow},
      {"SDE ergodicity over 8 replicas", sde_ergodicity},
      {"W2 transport bound by relative free energy", talagrand},
      {"transport oracles", transport_oracles},
      {"OU domination", ou_domination_check},
      {"Picard bootstrap", picard},
      {"non-symmetric center drift", reduced_system},
      {"rate-shape fit and envelope", rate_shape},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %zu: %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
