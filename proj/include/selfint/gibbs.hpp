#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "measure.hpp"
#include "potential.hpp"
#include "transport.hpp"

namespace selfint {

template <int D>
using OptionalPotential = std::optional<Potential<D>>;

template <int D>
struct GibbsResult {
  GridDensity<D> density;
  double log_partition = 0.0;
  Point<D> center{};
};

struct GridOptions {
  double half_width = 8.0;
  int cells = 1024;  // per axis; 2-D callers usually want far fewer
};

// (V + W * m)(x) at every cell center of g. W * m is evaluated through the
// raw moments of m, which is exact for polynomial W.
template <int D, typename M>
std::vector<double> potential_field(const Potential<D>& W, const OptionalPotential<D>& V,
                                    const M& m, const GridGeometry<D>& g) {
  std::vector<double> u(g.size(), 0.0);
  if (!W.is_zero()) {
    const auto ms = moments<D>(m, std::max(1, W.degree()));
    if (!(ms.mass() > 0.0)) throw InvalidInput("Gibbs map of an empty measure");
    const double inv = 1.0 / ms.mass();
    for (std::size_t i = 0; i < u.size(); ++i)
      u[i] = W.polynomial().convolve(g.cell_center(i), ms) * inv;
  }
  if (V)
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += V->value(g.cell_center(i));
  return u;
}

// Minimizer of V + W * m by Newton from the mean of m (the center when V is absent).
template <int D, typename M>
Point<D> field_minimizer(const Potential<D>& W, const OptionalPotential<D>& V, const M& m,
                         NewtonOptions opt = {}) {
  if (!V) return center<D>(W, m, opt);
  const auto ms = moments<D>(m, std::max(1, W.degree()));
  const double inv = 1.0 / ms.mass();
  Point<D> x = W.is_zero() ? zero_point<D>() : ms.mean();
  for (int it = 0; it < opt.max_iter; ++it) {
    Point<D> g = V->gradient(x);
    Matrix<D> h = V->hessian(x);
    if (!W.is_zero())
      for (int a = 0; a < D; ++a) {
        g[a] += W.gradient_polynomial(a).convolve(x, ms) * inv;
        for (int b = 0; b < D; ++b) h[a][b] += W.hessian_polynomial(a, b).convolve(x, ms) * inv;
      }
    if (norm<D>(g) <= opt.tol) return x;
    x = x - solve<D>(h, g);
    if (!all_finite<D>(x)) break;
  }
  throw NumericFailure("Newton iteration for the potential minimizer did not converge");
}

// Pi(m) on the grid g: density proportional to exp(-(V + W * m)).
template <int D, typename M>
GibbsResult<D> apply_pi(const Potential<D>& W, const OptionalPotential<D>& V, const M& m,
                        const GridGeometry<D>& g) {
  const std::vector<double> u = potential_field<D>(W, V, m, g);
  std::size_t argmin = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i])) throw NumericFailure("Gibbs exponent is not finite on the grid");
    if (u[i] < u[argmin]) argmin = i;
  }
  bool on_boundary = false;
  if constexpr (D == 1) {
    on_boundary = argmin == 0 || argmin + 1 == u.size();
  } else {
    const std::size_t i = argmin / g.cells[1], j = argmin % g.cells[1];
    on_boundary = i == 0 || j == 0 || i + 1 == static_cast<std::size_t>(g.cells[0]) ||
                  j + 1 == static_cast<std::size_t>(g.cells[1]);
  }
  if (on_boundary)
    throw NumericFailure("Gibbs density peaks on the grid boundary; re-center the grid at " +
                         to_string<D>(field_minimizer<D>(W, V, m)));

  const double umin = u[argmin];
  std::vector<double> v(u.size());
  double z = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    v[i] = std::exp(-(u[i] - umin));
    z += v[i];
  }
  z *= g.cell_volume();
  for (auto& x : v) x /= z;
  GibbsResult<D> r{GridDensity<D>(g, std::move(v)), std::log(z) - umin, {}};
  r.center = center<D>(W, r.density);
  return r;
}

// Pi(m) on a grid re-centered at the minimizer of V + W * m.
template <int D, typename M>
GibbsResult<D> apply_pi(const Potential<D>& W, const OptionalPotential<D>& V, const M& m,
                        GridOptions opt = {}) {
  const Point<D> c = field_minimizer<D>(W, V, m);
  return apply_pi<D>(W, V, m, GridGeometry<D>::centered(c, opt.half_width, opt.cells));
}

struct FixedPointOptions {
  double damping = 0.5;
  double tol = 1e-10;
  int max_iter = 1000;
};

template <int D>
struct FixedPointResult {
  GridDensity<D> density;
  int iterations = 0;
  double residual = 0.0;
};

// Iterates rho <- (1 - lambda) rho + lambda Pi(rho). Without V the problem is
// translation invariant: Pi(rho) is first moved onto the center of rho, each
// iterate is re-centered at the origin, and both are brought back onto the
// initial grid (a no-op when the translation is below the grid tolerance).
template <int D>
FixedPointResult<D> solve_fixed_point(
    const Potential<D>& W, const OptionalPotential<D>& V, const GridDensity<D>& init,
    FixedPointOptions opt = {},
    const std::function<void(int, double, const GridDensity<D>&)>& observer = {}) {
  detail::require(opt.damping > 0.0 && opt.damping <= 1.0, "damping must lie in (0, 1]");
  detail::require(opt.tol > 0.0, "tolerance must be > 0");
  detail::require(std::abs(init.mass() - 1.0) <= 1e-6, "initial density must be normalized");

  const bool translate = !V && !W.is_zero();
  GridDensity<D> rho = init.normalized();
  const GridGeometry<D> home = init.geometry();
  if (translate) rho = resample<D>(recenter<D>(rho, center<D>(W, rho)), home);
  double residual = INFINITY;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const GibbsResult<D> pi = apply_pi<D>(W, V, rho, rho.geometry());
    GridDensity<D> target = pi.density;
    if (translate) target = resample<D>(recenter<D>(target, pi.center - center<D>(W, rho)), home);
    GridDensity<D> next = mix<D>(rho, target, opt.damping).normalized();
    if (translate) next = resample<D>(recenter<D>(next, center<D>(W, next)), home);
    if constexpr (D == 1) {
      residual = tp_distance_1d(W.bound(), rho, next).value;
    } else {
      const GridDensity<D> aligned = resample<D>(next, rho.geometry());
      residual = 0.0;
      for (std::size_t i = 0; i < aligned.size(); ++i) residual += std::abs(aligned[i] - rho[i]);
      residual *= rho.cell_volume();
    }
    rho = std::move(next);
    if (observer) observer(it, residual, rho);
    if (residual < opt.tol) return {rho, it, residual};
  }
  throw NumericFailure("fixed-point iteration did not converge; last residual " +
                       std::to_string(residual));
}

}  // namespace selfint
