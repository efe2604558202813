#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "gibbs.hpp"
#include "measure.hpp"
#include "potential.hpp"
#include "transport.hpp"

namespace selfint {

struct EnergyBreakdown {
  double entropy = 0.0;
  double external_term = 0.0;
  double interaction_term = 0.0;
  double total = 0.0;
  std::optional<double> relative_to;  // reference total, when relative
};

template <int D>
double entropy(const GridDensity<D>& m) {
  double s = 0.0;
  for (double v : m.values()) {
    if (v < 0.0) throw InvalidInput("negative density value");
    if (v >= 1e-300) s += v * std::log(v);
  }
  return s * m.cell_volume();
}

namespace detail {

// \iint a(x) W(x - y) b(y) for (possibly signed) cell values on two grids.
// Grids with equal steps share an offset kernel; others fall back to pairs.
template <int D>
double bilinear(const Potential<D>& W, const GridGeometry<D>& ga, const std::vector<double>& va,
                const GridGeometry<D>& gb, const std::vector<double>& vb) {
  if (W.is_zero()) return 0.0;
  bool same_step = true;
  for (int d = 0; d < D; ++d)
    if (std::abs(ga.step[d] - gb.step[d]) > 1e-12 * ga.step[d]) same_step = false;
  const double vol = ga.cell_volume() * gb.cell_volume();
  double total = 0.0;
  if (same_step) {
    if constexpr (D == 1) {
      const long na = ga.cells[0], nb = gb.cells[0];
      const double off = ga.lo[0] - gb.lo[0];
      std::vector<double> k(static_cast<std::size_t>(na + nb - 1));
      for (long r = -(nb - 1); r <= na - 1; ++r)
        k[static_cast<std::size_t>(r + nb - 1)] = W.value({off + r * ga.step[0]});
      for (long i = 0; i < na; ++i) {
        if (va[i] == 0.0) continue;
        double row = 0.0;
        for (long j = 0; j < nb; ++j) row += k[static_cast<std::size_t>(i - j + nb - 1)] * vb[j];
        total += va[i] * row;
      }
    } else {
      const long a0 = ga.cells[0], a1 = ga.cells[1], b0 = gb.cells[0], b1 = gb.cells[1];
      const long w1 = a1 + b1 - 1;
      std::vector<double> k(static_cast<std::size_t>((a0 + b0 - 1) * w1));
      for (long r = -(b0 - 1); r <= a0 - 1; ++r)
        for (long s = -(b1 - 1); s <= a1 - 1; ++s)
          k[static_cast<std::size_t>((r + b0 - 1) * w1 + s + b1 - 1)] =
              W.value({ga.lo[0] - gb.lo[0] + r * ga.step[0], ga.lo[1] - gb.lo[1] + s * ga.step[1]});
      for (long i = 0; i < a0; ++i)
        for (long j = 0; j < a1; ++j) {
          const double av = va[static_cast<std::size_t>(i * a1 + j)];
          if (av == 0.0) continue;
          double row = 0.0;
          for (long p = 0; p < b0; ++p)
            for (long q = 0; q < b1; ++q)
              row += k[static_cast<std::size_t>((i - p + b0 - 1) * w1 + j - q + b1 - 1)] *
                     vb[static_cast<std::size_t>(p * b1 + q)];
          total += av * row;
        }
    }
  } else {
    for (std::size_t i = 0; i < va.size(); ++i) {
      if (va[i] == 0.0) continue;
      const Point<D> x = ga.cell_center(i);
      double row = 0.0;
      for (std::size_t j = 0; j < vb.size(); ++j) row += W.value(x - gb.cell_center(j)) * vb[j];
      total += va[i] * row;
    }
  }
  return total * vol;
}

}  // namespace detail

// \iint a(x) W(x - y) b(y) dx dy.
template <int D>
double interaction(const Potential<D>& W, const GridDensity<D>& a, const GridDensity<D>& b) {
  return detail::bilinear<D>(W, a.geometry(), a.values(), b.geometry(), b.values());
}

template <int D>
double external_energy(const Potential<D>& V, const GridDensity<D>& m) {
  double s = 0.0;
  m.for_each_atom([&](const Point<D>& x, double w) { s += w * V.value(x); });
  return s;
}

// H(m) + \int V dm + (1/2) \iint m W m.
template <int D>
EnergyBreakdown free_energy(const Potential<D>& W, const OptionalPotential<D>& V,
                            const GridDensity<D>& m) {
  EnergyBreakdown e;
  e.entropy = entropy<D>(m);
  e.external_term = V ? external_energy<D>(*V, m) : 0.0;
  e.interaction_term = 0.5 * interaction<D>(W, m, m);
  e.total = e.entropy + e.external_term + e.interaction_term;
  return e;
}

template <int D>
double relative_free_energy(const Potential<D>& W, const OptionalPotential<D>& V,
                            const GridDensity<D>& m, const GridDensity<D>& rho_inf) {
  return free_energy<D>(W, V, m).total - free_energy<D>(W, V, rho_inf).total;
}

// phi_mu(nu) = H(nu) + \int nu (V + W * mu).
template <int D>
double phi(const Potential<D>& W, const OptionalPotential<D>& V, const GridDensity<D>& mu,
           const GridDensity<D>& nu) {
  double s = entropy<D>(nu) + interaction<D>(W, nu, mu);
  if (V) s += external_energy<D>(*V, nu);
  return s;
}

namespace detail {

// \iint (mu - nu) W (mu - nu) with the signed difference formed cell-wise.
template <int D>
double difference_energy(const Potential<D>& W, const GridDensity<D>& mu, const GridDensity<D>& nu) {
  const GridDensity<D> nu_on = resample<D>(nu, mu.geometry());
  std::vector<double> sigma(mu.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = mu[i] - nu_on[i];
  return bilinear<D>(W, mu.geometry(), sigma, mu.geometry(), sigma);
}

}  // namespace detail

struct IdentitySides {
  double lhs = 0.0;
  double rhs = 0.0;
};

// phi_mu(mu) - phi_mu(nu) against F(mu) - F(nu) + (1/2) \iint (mu-nu) W (mu-nu).
template <int D>
IdentitySides phi_difference(const Potential<D>& W, const GridDensity<D>& mu,
                             const GridDensity<D>& nu, const OptionalPotential<D>& V = std::nullopt) {
  const GridDensity<D> nu_on = resample<D>(nu, mu.geometry());
  IdentitySides s;
  s.lhs = phi<D>(W, V, mu, mu) - phi<D>(W, V, mu, nu_on);
  s.rhs = free_energy<D>(W, V, mu).total - free_energy<D>(W, V, nu_on).total +
          0.5 * detail::difference_energy<D>(W, mu, nu_on);
  return s;
}

// F((1-l) mu + l nu) against F(mu) - l (phi_mu(mu) - phi_mu(nu)) + (l^2/2) \iint (mu-nu) W (mu-nu).
// The reference F(rho_inf) appears on both sides and cancels.
template <int D>
IdentitySides mixing_inequality(const Potential<D>& W, const GridDensity<D>& mu,
                                const GridDensity<D>& nu, double lambda,
                                const OptionalPotential<D>& V = std::nullopt) {
  detail::require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
  const GridDensity<D> nu_on = resample<D>(nu, mu.geometry());
  IdentitySides s;
  s.lhs = free_energy<D>(W, V, mix<D>(mu, nu_on, lambda)).total;
  s.rhs = free_energy<D>(W, V, mu).total -
          lambda * (phi<D>(W, V, mu, mu) - phi<D>(W, V, mu, nu_on)) +
          0.5 * lambda * lambda * detail::difference_energy<D>(W, mu, nu_on);
  return s;
}

struct RateParams {
  double C7 = 1.0;
  double eps0 = std::exp(-2.0);
  double eps1 = 1.0;
  int k = 2;

  void validate() const {
    detail::require(C7 > 0.0, "C7 must be > 0");
    detail::require(eps0 > 0.0 && eps0 < 1.0, "eps0 must lie in (0, 1)");
    detail::require(eps1 > eps0, "eps1 must exceed eps0");
    detail::require(k >= 1, "k must be >= 1");
  }
};

inline double rate_function(const RateParams& p, double E) {
  detail::require(E >= 0.0, "rate function needs E >= 0");
  auto small = [&](double e) { return e == 0.0 ? 0.0 : p.C7 * e / std::pow(std::abs(std::log(e)), p.k); };
  if (E <= p.eps0) return small(E);
  const double g0 = small(p.eps0);
  if (E <= p.eps1) return E * g0 / p.eps0;
  return E + (p.eps1 * g0 / p.eps0 - p.eps1);
}

struct EnvelopeSample {
  double t;
  double y;
};

// Solves y' = -g(y) / (2t) in theta = log t. Each branch of g integrates in
// closed form, so the solution is exact up to rounding:
//   y > eps1:          (y + b) e^{-theta/2},  b = eps1 (s0 - 1)
//   eps0 < y <= eps1:  log y falls at rate s0 / 2
//   y <= eps0:         |log y|^{k+1} grows at rate (k+1) C7 / 2
// with s0 = g(eps0) / eps0. Working in log y keeps underflow harmless.
inline std::vector<EnvelopeSample> energy_envelope(const RateParams& p, double y0, double t0,
                                                   const std::vector<double>& times) {
  p.validate();
  detail::require(y0 > 0.0, "envelope needs y0 > 0");
  detail::require(t0 > 0.0, "envelope needs t0 > 0");
  const double s0 = p.C7 / std::pow(-std::log(p.eps0), p.k);
  const double b = p.eps1 * (s0 - 1.0);
  const double log_eps0 = std::log(p.eps0), log_eps1 = std::log(p.eps1);
  auto advance = [&](double psi, double dtheta) {
    if (psi > log_eps1) {
      const double y = std::exp(psi);
      const double to_eps1 = 2.0 * std::log((y + b) / (p.eps1 + b));
      if (dtheta < to_eps1) return std::log((y + b) * std::exp(-0.5 * dtheta) - b);
      dtheta -= to_eps1;
      psi = log_eps1;
    }
    if (psi > log_eps0) {
      const double to_eps0 = 2.0 * (psi - log_eps0) / s0;
      if (dtheta < to_eps0) return psi - 0.5 * s0 * dtheta;
      dtheta -= to_eps0;
      psi = log_eps0;
    }
    const double q = std::pow(-psi, p.k + 1) + 0.5 * (p.k + 1) * p.C7 * dtheta;
    return -std::pow(q, 1.0 / (p.k + 1));
  };
  std::vector<EnvelopeSample> out;
  out.reserve(times.size());
  double psi = std::log(y0), t = t0, y = y0;
  for (double tn : times) {
    detail::require(tn >= t, "envelope sample times must be nondecreasing and >= t0");
    if (tn > t) {
      psi = advance(psi, std::log(tn) - std::log(t));
      t = tn;
      y = std::exp(psi);
    }
    out.push_back({tn, y});
  }
  return out;
}

inline std::vector<EnvelopeSample> energy_envelope(const RateParams& p, double y0, double t0,
                                                   double t1, int n_samples = 100) {
  detail::require(t1 > t0 && t0 > 0.0, "envelope needs t1 > t0 > 0");
  detail::require(n_samples >= 2, "envelope needs at least 2 samples");
  std::vector<double> times(n_samples);
  for (int i = 0; i < n_samples; ++i)
    times[i] = std::exp(std::log(t0) + (std::log(t1) - std::log(t0)) * i / (n_samples - 1));
  times.front() = t0;
  times.back() = t1;
  return energy_envelope(p, y0, t0, times);
}

// Law of (1 - s) q0(U) + s q1(U), U uniform, binned exactly onto g.
inline GridDensity<1> displacement_interpolate(const GridDensity<1>& m0, const GridDensity<1>& m1,
                                               double s, const GridGeometry<1>& g) {
  detail::require(s >= 0.0 && s <= 1.0, "interpolation parameter must lie in [0, 1]");
  const auto q0 = detail::quantile_of(m0), q1 = detail::quantile_of(m1);
  std::vector<double> v(g.size(), 0.0);
  auto deposit = [&](double mass, double a, double b) {
    if (mass <= 0.0) return;
    const double h = g.step[0];
    if (b - a <= 1e-15 * std::max(1.0, std::abs(a))) {
      const long i = static_cast<long>(std::floor((a - g.lo[0]) / h));
      if (i < 0 || i >= g.cells[0]) throw InvalidInput("interpolated mass leaves the grid");
      v[static_cast<std::size_t>(i)] += mass / h;
      return;
    }
    if (a < g.lo[0] - 1e-12 || b > g.hi(0) + 1e-12)
      throw InvalidInput("interpolated mass leaves the grid");
    const long i0 = std::max(0L, static_cast<long>(std::floor((a - g.lo[0]) / h)));
    const long i1 = std::min<long>(g.cells[0] - 1, static_cast<long>(std::floor((b - g.lo[0]) / h)));
    for (long i = i0; i <= i1; ++i) {
      const double c0 = g.lo[0] + i * h;
      const double ov = std::max(0.0, std::min(c0 + h, b) - std::max(c0, a));
      v[static_cast<std::size_t>(i)] += mass * ov / (b - a) / h;
    }
  };
  std::size_t i = 0, j = 0;
  double u = 0.0;
  while (i < q0.size() && j < q1.size()) {
    const double u_next = std::min(q0[i].u1, q1[j].u1);
    if (u_next > u) {
      const double a = (1 - s) * detail::quantile_at(q0[i], u) + s * detail::quantile_at(q1[j], u);
      const double b =
          (1 - s) * detail::quantile_at(q0[i], u_next) + s * detail::quantile_at(q1[j], u_next);
      deposit(u_next - u, a, b);
      u = u_next;
    }
    if (q0[i].u1 <= u) ++i;
    if (j < q1.size() && q1[j].u1 <= u) ++j;
  }
  return GridDensity<1>(g, std::move(v));
}

}  // namespace selfint
