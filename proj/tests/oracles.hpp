#pragma once

// Reference computations for the tests. Nothing here calls into the library's
// numerics; only its plain data types are used to hand results back.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "selfint/measure.hpp"

namespace oracle {

inline constexpr double pi = 3.14159265358979323846;

inline double gauss_pdf(double x, double mean = 0.0, double var = 1.0) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * pi * var);
}

inline double gauss_entropy(double var) { return -0.5 * std::log(2.0 * pi * std::exp(1.0) * var); }

// F for a centered N(0, var) under W = c x^2 / 2 and no V.
inline double gauss_free_energy_quadratic(double var, double c = 1.0) {
  return gauss_entropy(var) + 0.5 * c * var;
}

struct Mixture {
  std::vector<double> weights, means, sds;

  double operator()(double x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * gauss_pdf(x, means[i], sds[i] * sds[i]);
    return s;
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) m += weights[i] * means[i];
    return m;
  }

  Mixture shifted(double v) const {
    Mixture r = *this;
    for (auto& m : r.means) m += v;
    return r;
  }
};

inline Mixture random_mixture(std::mt19937_64& rng, int max_components = 3, double mean_range = 1.5,
                              double sd_lo = 0.5, double sd_hi = 1.5) {
  std::uniform_int_distribution<int> nc(1, max_components);
  std::uniform_real_distribution<double> w(0.2, 1.0), mu(-mean_range, mean_range), sd(sd_lo, sd_hi);
  Mixture m;
  const int n = nc(rng);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    m.weights.push_back(w(rng));
    m.means.push_back(mu(rng));
    m.sds.push_back(sd(rng));
    total += m.weights.back();
  }
  for (auto& x : m.weights) x /= total;
  return m;
}

inline selfint::GridDensity<1> on_grid(const Mixture& m, const selfint::GridGeometry<1>& g) {
  return selfint::GridDensity<1>::from_function(g, [&](const selfint::Point<1>& x) { return m(x[0]); });
}

inline selfint::GridDensity<1> gaussian_on_grid(const selfint::GridGeometry<1>& g, double mean = 0.0,
                                                double var = 1.0) {
  return selfint::GridDensity<1>::from_function(
      g, [&](const selfint::Point<1>& x) { return gauss_pdf(x[0], mean, var); });
}

struct WeightedAtom {
  double x, w;
};

// Antiderivative of A (1 + |x|^k), odd, written out independently.
inline double p_primitive(double x, double A, int k) {
  const double s = x < 0 ? -1.0 : 1.0;
  const double a = std::fabs(x);
  double pw = 1.0;
  for (int i = 0; i < k + 1; ++i) pw *= a;
  return s * A * (a + pw / (k + 1));
}

// T_P through the monotone (quantile) coupling: over each band of merged
// probability levels the two quantiles are constant, and the band pays
// |Prim(q1) - Prim(q2)| per unit of probability.
inline double tp_monotone(std::vector<WeightedAtom> a, std::vector<WeightedAtom> b, double A, int k) {
  auto cumulative = [](std::vector<WeightedAtom>& v) {
    std::sort(v.begin(), v.end(), [](const auto& p, const auto& q) { return p.x < q.x; });
    double s = 0.0;
    for (const auto& p : v) s += p.w;
    std::vector<double> c;
    double acc = 0.0;
    for (const auto& p : v) c.push_back((acc += p.w) / s);
    c.back() = 1.0;
    return c;
  };
  const std::vector<double> ca = cumulative(a), cb = cumulative(b);
  std::vector<double> levels = ca;
  levels.insert(levels.end(), cb.begin(), cb.end());
  std::sort(levels.begin(), levels.end());
  auto quantile = [](const std::vector<WeightedAtom>& v, const std::vector<double>& c, double u) {
    return v[static_cast<std::size_t>(std::lower_bound(c.begin(), c.end(), u) - c.begin())].x;
  };
  double prev = 0.0, cost = 0.0;
  for (double u : levels) {
    if (u > prev) {
      const double mid = 0.5 * (prev + u);
      cost += (u - prev) * std::fabs(p_primitive(quantile(a, ca, mid), A, k) - p_primitive(quantile(b, cb, mid), A, k));
    }
    prev = u;
  }
  return cost;
}

// W2 between two equal-weight n-point sets by trying every permutation.
inline double w2_permutations(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<std::size_t> p(y.size());
  std::iota(p.begin(), p.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[p[i]]) * (x[i] - y[p[i]]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return std::sqrt(best / static_cast<double>(x.size()));
}

// Euler scheme for the self-interacting equation with W = c x^2 / 2 in 1-D on a
// step dt / refine, each coarse increment split into `refine` Gaussian pieces
// that sum to it. Returns the path at the coarse times.
inline std::vector<double> fine_euler_quadratic(double x0, const std::vector<double>& coarse_increments,
                                                double dt, double noise_scale, double c, int refine,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double h = dt / refine;
  std::vector<double> out{x0};
  double x = x0, sum = 0.0, count = 0.0;  // running sum of past fine atoms
  for (double inc : coarse_increments) {
    std::vector<double> piece(refine);
    double tot = 0.0;
    for (auto& p : piece) {
      p = std::sqrt(h) * nd(rng);
      tot += p;
    }
    for (auto& p : piece) p += (inc - tot) / refine;  // bridge: pieces sum to the coarse increment
    for (int r = 0; r < refine; ++r) {
      const double mean = count > 0.0 ? sum / count : x0;
      const double xn = x - h * c * (x - mean) + noise_scale * piece[r];
      sum += x;
      count += 1.0;
      x = xn;
    }
    out.push_back(x);
  }
  return out;
}

// The rate function g written out directly.
inline double rate(double E, double C7, double eps0, double eps1, int k) {
  auto small = [&](double e) { return e == 0.0 ? 0.0 : C7 * e / std::pow(std::fabs(std::log(e)), k); };
  if (E <= eps0) return small(E);
  if (E <= eps1) return E * small(eps0) / eps0;
  return E + eps1 * small(eps0) / eps0 - eps1;
}

// y' = -g(y) / (2t) in t itself with midpoint steps, halving until two
// refinements agree to rel_tol.
inline double envelope_halving(double y0, double t0, double t1, const std::function<double(double)>& g,
                               double rel_tol = 1e-7) {
  auto run = [&](long n) {
    const double h = (t1 - t0) / n;
    double y = y0, t = t0;
    for (long i = 0; i < n; ++i) {
      const double ym = y - 0.5 * h * g(y) / (2.0 * t);
      y -= h * g(ym) / (2.0 * (t + 0.5 * h));
      t += h;
    }
    return y;
  };
  long n = 4096;
  double prev = run(n);
  for (;;) {
    n *= 2;
    const double cur = run(n);
    if (std::fabs(cur - prev) <= rel_tol * std::fabs(cur) || n > (1L << 26)) return cur;
    prev = cur;
  }
}

inline double sup_error(const selfint::GridDensity<1>& m, const std::function<double(double)>& f) {
  double e = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) e = std::max(e, std::fabs(m[i] - f(m.geometry().cell_center(i)[0])));
  return e;
}

}  // namespace oracle
