#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "errors.hpp"
#include "point.hpp"
#include "polynomial.hpp"
#include "potential.hpp"

namespace selfint {

template <int D>
struct Atom {
  Point<D> position;
  double weight;
};

// Weighted point masses: occupation measures, samples, Dirac combinations.
template <int D>
  requires SupportedDim<D>
class ParticleMeasure {
 public:
  ParticleMeasure() = default;
  explicit ParticleMeasure(std::vector<Atom<D>> atoms) : atoms_(std::move(atoms)) {
    for (const auto& a : atoms_) check_atom(a);
  }

  static ParticleMeasure dirac(const Point<D>& x) { return ParticleMeasure({{x, 1.0}}); }

  // Equal weights 1/n.
  static ParticleMeasure uniform(const std::vector<Point<D>>& xs) {
    std::vector<Atom<D>> atoms;
    atoms.reserve(xs.size());
    for (const auto& x : xs) atoms.push_back({x, 1.0 / static_cast<double>(xs.size())});
    return ParticleMeasure(std::move(atoms));
  }

  void add(const Point<D>& x, double w) {
    Atom<D> a{x, w};
    check_atom(a);
    atoms_.push_back(a);
  }
  void reserve(std::size_t n) { atoms_.reserve(n); }

  const std::vector<Atom<D>>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }

  double total_mass() const {
    double s = 0.0;
    for (const auto& a : atoms_) s += a.weight;
    return s;
  }

  ParticleMeasure normalized() const {
    const double m = total_mass();
    if (!(m > 0.0)) throw InvalidInput("cannot normalize a measure of zero mass");
    ParticleMeasure r = *this;
    for (auto& a : r.atoms_) a.weight /= m;
    return r;
  }

  template <typename F>
  void for_each_atom(F&& f) const {
    for (const auto& a : atoms_) f(a.position, a.weight);
  }

 private:
  static void check_atom(const Atom<D>& a) {
    detail::require(all_finite<D>(a.position), "atom position must be finite");
    detail::require(a.weight > 0.0 && std::isfinite(a.weight), "atom weight must be > 0");
  }

  std::vector<Atom<D>> atoms_;
};

// Uniform tensor grid: cell i on axis d spans [lo + i*step, lo + (i+1)*step).
template <int D>
  requires SupportedDim<D>
struct GridGeometry {
  Point<D> lo{};
  Point<D> step{};
  std::array<int, D> cells{};

  static GridGeometry centered(const Point<D>& center, double half_width, int cells_per_axis) {
    detail::require(half_width > 0.0, "grid half width must be > 0");
    detail::require(cells_per_axis >= 16, "grids need at least 16 cells per axis");
    GridGeometry g;
    for (int d = 0; d < D; ++d) {
      g.lo[d] = center[d] - half_width;
      g.step[d] = 2.0 * half_width / cells_per_axis;
      g.cells[d] = cells_per_axis;
    }
    return g;
  }

  std::size_t size() const {
    std::size_t n = 1;
    for (int c : cells) n *= static_cast<std::size_t>(c);
    return n;
  }

  double cell_volume() const {
    double v = 1.0;
    for (double s : step) v *= s;
    return v;
  }

  double hi(int d) const { return lo[d] + step[d] * cells[d]; }

  Point<D> center() const {
    Point<D> c{};
    for (int d = 0; d < D; ++d) c[d] = lo[d] + 0.5 * step[d] * cells[d];
    return c;
  }

  double half_width(int d = 0) const { return 0.5 * step[d] * cells[d]; }

  Point<D> cell_center(std::size_t flat) const {
    Point<D> x{};
    if constexpr (D == 1) {
      x[0] = lo[0] + (static_cast<double>(flat) + 0.5) * step[0];
    } else {
      const std::size_t i = flat / cells[1], j = flat % cells[1];
      x[0] = lo[0] + (static_cast<double>(i) + 0.5) * step[0];
      x[1] = lo[1] + (static_cast<double>(j) + 0.5) * step[1];
    }
    return x;
  }

  bool same_as(const GridGeometry& o, double tol = 1e-12) const {
    for (int d = 0; d < D; ++d) {
      if (cells[d] != o.cells[d]) return false;
      if (std::abs(lo[d] - o.lo[d]) > tol * std::max(1.0, std::abs(lo[d]))) return false;
      if (std::abs(step[d] - o.step[d]) > tol * step[d]) return false;
    }
    return true;
  }

  GridGeometry translated(const Point<D>& v) const {
    GridGeometry g = *this;
    g.lo = lo + v;
    return g;
  }
};

// Piecewise-constant density on a grid; quadrature is the midpoint rule.
template <int D>
  requires SupportedDim<D>
class GridDensity {
 public:
  GridDensity() = default;
  explicit GridDensity(GridGeometry<D> g) : geom_(g), values_(g.size(), 0.0) { check_geometry(); }
  GridDensity(GridGeometry<D> g, std::vector<double> values) : geom_(g), values_(std::move(values)) {
    check_geometry();
    detail::require(values_.size() == geom_.size(), "value count does not match grid");
    for (double v : values_)
      detail::require(v >= 0.0 && std::isfinite(v), "density values must be finite and >= 0");
  }

  // Samples f at cell centers and normalizes.
  template <typename F>
  static GridDensity from_function(const GridGeometry<D>& g, F&& f) {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(0.0, f(g.cell_center(i)));
    return GridDensity(g, std::move(v)).normalized();
  }

  const GridGeometry<D>& geometry() const { return geom_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  std::size_t size() const { return values_.size(); }
  double cell_volume() const { return geom_.cell_volume(); }
  double operator[](std::size_t i) const { return values_[i]; }

  double mass() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s * cell_volume();
  }

  GridDensity normalized() const {
    const double m = mass();
    if (!(m > 0.0) || !std::isfinite(m)) throw NumericFailure("density has no finite positive mass");
    GridDensity r = *this;
    for (auto& v : r.values_) v /= m;
    return r;
  }

  template <typename F>
  void for_each_atom(F&& f) const {
    const double vol = cell_volume();
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (values_[i] > 0.0) f(geom_.cell_center(i), values_[i] * vol);
  }

  GridDensity translated(const Point<D>& v) const {
    GridDensity r = *this;
    r.geom_ = geom_.translated(v);
    return r;
  }

 private:
  void check_geometry() const {
    for (int d = 0; d < D; ++d) {
      detail::require(geom_.cells[d] >= 16, "grids need at least 16 cells per axis");
      detail::require(geom_.step[d] > 0.0, "grid step must be > 0");
    }
  }

  GridGeometry<D> geom_;
  std::vector<double> values_;
};

// (1 - lambda) a + lambda b on a shared grid.
template <int D>
GridDensity<D> mix(const GridDensity<D>& a, const GridDensity<D>& b, double lambda) {
  detail::require(a.geometry().same_as(b.geometry()), "mix needs densities on the same grid");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - lambda) * a[i] + lambda * b[i];
  return GridDensity<D>(a.geometry(), std::move(v));
}

// Linear (bilinear in 2-D) interpolation onto another grid, mass restored
// afterwards. Cells of the target outside the source support get zero.
template <int D>
GridDensity<D> resample(const GridDensity<D>& src, const GridGeometry<D>& target) {
  if (src.geometry().same_as(target)) return src;
  const auto& g = src.geometry();
  auto lookup = [&](const std::array<long, D>& idx) -> double {
    for (int d = 0; d < D; ++d)
      if (idx[d] < 0 || idx[d] >= g.cells[d]) return 0.0;
    if constexpr (D == 1) return src[static_cast<std::size_t>(idx[0])];
    else return src[static_cast<std::size_t>(idx[0] * g.cells[1] + idx[1])];
  };
  std::vector<double> out(target.size(), 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const Point<D> x = target.cell_center(k);
    std::array<long, D> base{};
    std::array<double, D> frac{};
    for (int d = 0; d < D; ++d) {
      const double u = (x[d] - g.lo[d]) / g.step[d] - 0.5;
      base[d] = static_cast<long>(std::floor(u));
      frac[d] = u - std::floor(u);
    }
    double v = 0.0;
    if constexpr (D == 1) {
      v = (1.0 - frac[0]) * lookup({base[0]}) + frac[0] * lookup({base[0] + 1});
    } else {
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          v += (a ? frac[0] : 1.0 - frac[0]) * (b ? frac[1] : 1.0 - frac[1]) *
               lookup({base[0] + a, base[1] + b});
    }
    out[k] = std::max(0.0, v);
  }
  GridDensity<D> r(target, std::move(out));
  const double m = r.mass();
  if (!(m > 0.0)) throw NumericFailure("resampling lost all mass; target grid misses the support");
  return GridDensity<D>(target, [&] {
    std::vector<double> v = r.values();
    for (auto& x : v) x *= src.mass() / m;
    return v;
  }());
}

template <typename M>
concept MeasureLike = requires(const M& m) { m.for_each_atom([](const auto&, double) {}); };

template <typename M>
inline constexpr int measure_dimension_v = 0;
template <int D>
inline constexpr int measure_dimension_v<ParticleMeasure<D>> = D;
template <int D>
inline constexpr int measure_dimension_v<GridDensity<D>> = D;

template <int D, typename M>
MomentSet<D> moments(const M& m, int max_degree) {
  detail::require(max_degree >= 0, "moment degree must be >= 0");
  MomentSet<D> ms(max_degree);
  m.for_each_atom([&](const Point<D>& y, double w) { ms.accumulate(y, w); });
  return ms;
}

// Moments already accumulated; lets MomentSet stand in for a measure.
template <int D>
MomentSet<D> moments(const MomentSet<D>& ms, int max_degree) {
  detail::require(ms.degree() >= max_degree, "moment set has too low a degree");
  return ms;
}

template <int D, typename M>
double measure_mass(const M& m) {
  double s = 0.0;
  m.for_each_atom([&](const Point<D>&, double w) { s += w; });
  return s;
}

template <int D, typename M>
Point<D> mean(const M& m) {
  return moments<D>(m, 1).mean();
}

// (W * m)(x), (grad W * m)(x), (hess W * m)(x) as weighted sums over atoms.
template <int D, typename M>
double convolve_value(const Potential<D>& W, const M& m, const Point<D>& x) {
  double s = 0.0, mass = 0.0;
  m.for_each_atom([&](const Point<D>& y, double w) {
    s += w * W.value(x - y);
    mass += w;
  });
  if (mass <= 0.0) throw InvalidInput("convolution with an empty measure");
  return s;
}

template <int D, typename M>
Point<D> convolve_gradient(const Potential<D>& W, const M& m, const Point<D>& x) {
  Point<D> s = zero_point<D>();
  double mass = 0.0;
  m.for_each_atom([&](const Point<D>& y, double w) {
    s = s + w * W.gradient(x - y);
    mass += w;
  });
  if (mass <= 0.0) throw InvalidInput("convolution with an empty measure");
  return s;
}

template <int D, typename M>
Matrix<D> convolve_hessian(const Potential<D>& W, const M& m, const Point<D>& x) {
  Matrix<D> s = zero_matrix<D>();
  double mass = 0.0;
  m.for_each_atom([&](const Point<D>& y, double w) {
    const auto h = W.hessian(x - y);
    for (int a = 0; a < D; ++a)
      for (int b = 0; b < D; ++b) s[a][b] += w * h[a][b];
    mass += w;
  });
  if (mass <= 0.0) throw InvalidInput("convolution with an empty measure");
  return s;
}

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 50;
};

// Center from raw moments: root of grad(W * m), found by Newton from the mean.
template <int D>
Point<D> center_from_moments(const Potential<D>& W, const MomentSet<D>& ms,
                             NewtonOptions opt = {}) {
  if (!(ms.mass() > 0.0)) throw InvalidInput("center of an empty measure");
  if (W.is_zero()) return ms.mean();
  Point<D> c = ms.mean();
  for (int it = 0; it < opt.max_iter; ++it) {
    Point<D> g{};
    Matrix<D> h{};
    for (int a = 0; a < D; ++a) {
      g[a] = W.gradient_polynomial(a).convolve(c, ms);
      for (int b = 0; b < D; ++b) h[a][b] = W.hessian_polynomial(a, b).convolve(c, ms);
    }
    if (norm<D>(g) <= opt.tol * ms.mass()) return c;
    c = c - solve<D>(h, g);
    if (!all_finite<D>(c)) break;
  }
  throw NumericFailure("Newton iteration for the center did not converge");
}

template <int D, typename M>
Point<D> center(const Potential<D>& W, const M& m, NewtonOptions opt = {}) {
  return center_from_moments<D>(W, moments<D>(m, std::max(1, W.degree())), opt);
}

// m(. + c): shifts the measure so that c moves to the origin.
template <int D>
ParticleMeasure<D> recenter(const ParticleMeasure<D>& m, const Point<D>& c) {
  std::vector<Atom<D>> atoms = m.atoms();
  for (auto& a : atoms) a.position = a.position - c;
  return ParticleMeasure<D>(std::move(atoms));
}

template <int D>
GridDensity<D> recenter(const GridDensity<D>& m, const Point<D>& c) {
  return m.translated(-1.0 * c);
}

// Moves the grid box by a whole number of cells so that c is near its middle.
// Values shift with it, so the represented density is unchanged apart from
// mass pushed off the far edge.
template <int D>
GridDensity<D> shift_window(const GridDensity<D>& m, const Point<D>& c) {
  const auto& g = m.geometry();
  std::array<long, D> k{};
  for (int d = 0; d < D; ++d) k[d] = std::lround((c[d] - g.center()[d]) / g.step[d]);
  GridGeometry<D> ng = g;
  for (int d = 0; d < D; ++d) ng.lo[d] = g.lo[d] + k[d] * g.step[d];
  std::vector<double> v(g.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::array<long, D> idx{};
    if constexpr (D == 1) {
      idx[0] = static_cast<long>(i) + k[0];
    } else {
      idx[0] = static_cast<long>(i / g.cells[1]) + k[0];
      idx[1] = static_cast<long>(i % g.cells[1]) + k[1];
    }
    bool inside = true;
    for (int d = 0; d < D; ++d) inside = inside && idx[d] >= 0 && idx[d] < g.cells[d];
    if (!inside) continue;
    if constexpr (D == 1) v[i] = m[static_cast<std::size_t>(idx[0])];
    else v[i] = m[static_cast<std::size_t>(idx[0] * g.cells[1] + idx[1])];
  }
  return GridDensity<D>(ng, std::move(v)).normalized();
}

template <int D, typename M>
double p_norm(const PolyBound& P, const M& m) {
  double s = 0.0;
  m.for_each_atom([&](const Point<D>& y, double w) { s += P(norm<D>(y)) * std::abs(w); });
  if (!std::isfinite(s)) throw NumericFailure("P-norm quadrature diverged");
  return s;
}

// Default grid for smoothing: cell width h/8 in 1-D (h/4 in 2-D), edges
// aligned with mean +- h, wide enough for the support plus the kernel.
template <int D>
GridGeometry<D> smoothing_geometry(const ParticleMeasure<D>& m, double h) {
  const Point<D> c = mean<D>(m);
  double r = 0.0;
  for (const auto& a : m.atoms())
    for (int d = 0; d < D; ++d) r = std::max(r, std::abs(a.position[d] - c[d]));
  const double step = h / (D == 1 ? 8.0 : 4.0);
  const int half_cells = std::max(32, static_cast<int>(std::ceil((r + 2.0 * h) / step)));
  return GridGeometry<D>::centered(c, half_cells * step, 2 * half_cells);
}

// m convolved with the uniform law on the radius-h ball, binned onto g.
// 1-D uses exact interval overlaps; 2-D uses 8x8 sub-cell sampling of the
// disk, renormalized per atom so mass is preserved exactly.
template <int D>
GridDensity<D> smooth(const ParticleMeasure<D>& m, double h, const GridGeometry<D>& g) {
  if (!(h > 0.0)) throw InvalidInput("smoothing radius must be > 0");
  detail::require(!m.empty(), "cannot smooth an empty measure");
  for (int d = 0; d < D; ++d)
    detail::require(g.step[d] <= 0.25 * h * (1.0 + 1e-12), "grid too coarse for smoothing radius");
  std::vector<double> v(g.size(), 0.0);
  const double vol = g.cell_volume();
  for (const auto& a : m.atoms()) {
    const Point<D>& y = a.position;
    for (int d = 0; d < D; ++d)
      if (y[d] - h < g.lo[d] - 1e-12 || y[d] + h > g.hi(d) + 1e-12)
        throw InvalidInput("smoothing kernel leaves the grid");
    if constexpr (D == 1) {
      const long i0 = static_cast<long>(std::floor((y[0] - h - g.lo[0]) / g.step[0]));
      const long i1 = static_cast<long>(std::floor((y[0] + h - g.lo[0]) / g.step[0]));
      for (long i = std::max(0L, i0); i <= std::min<long>(i1, g.cells[0] - 1); ++i) {
        const double c0 = g.lo[0] + i * g.step[0], c1 = c0 + g.step[0];
        const double ov = std::max(0.0, std::min(c1, y[0] + h) - std::max(c0, y[0] - h));
        v[static_cast<std::size_t>(i)] += a.weight * ov / (2.0 * h) / vol;
      }
    } else {
      constexpr int sub = 8;
      std::vector<std::pair<std::size_t, double>> hits;
      double total = 0.0;
      const long i0 = std::max(0L, static_cast<long>(std::floor((y[0] - h - g.lo[0]) / g.step[0])));
      const long i1 = std::min<long>(g.cells[0] - 1, static_cast<long>(std::floor((y[0] + h - g.lo[0]) / g.step[0])));
      const long j0 = std::max(0L, static_cast<long>(std::floor((y[1] - h - g.lo[1]) / g.step[1])));
      const long j1 = std::min<long>(g.cells[1] - 1, static_cast<long>(std::floor((y[1] + h - g.lo[1]) / g.step[1])));
      for (long i = i0; i <= i1; ++i)
        for (long j = j0; j <= j1; ++j) {
          int inside = 0;
          for (int s = 0; s < sub; ++s)
            for (int t = 0; t < sub; ++t) {
              const double px = g.lo[0] + (i + (s + 0.5) / sub) * g.step[0] - y[0];
              const double py = g.lo[1] + (j + (t + 0.5) / sub) * g.step[1] - y[1];
              if (px * px + py * py <= h * h) ++inside;
            }
          if (inside) {
            hits.emplace_back(static_cast<std::size_t>(i * g.cells[1] + j), inside);
            total += inside;
          }
        }
      for (const auto& [idx, cnt] : hits) v[idx] += a.weight * cnt / total / vol;
    }
  }
  return GridDensity<D>(g, std::move(v));
}

template <int D>
GridDensity<D> smooth(const ParticleMeasure<D>& m, double h) {
  return smooth<D>(m, h, smoothing_geometry<D>(m, h));
}

struct TailProfile {
  double alpha = 0.0;
  double C = 0.0;  // sup over sampled r of exceedance(r) e^{alpha r}
  bool certified = false;
  std::vector<double> radii;
  std::vector<double> exceedance;
};

namespace detail {

// Mass of {|y - c| > r}. Grid cells in 1-D are split exactly; otherwise each
// atom counts as a point mass.
template <int D>
double exceedance(const GridDensity<D>& m, const Point<D>& c, double r) {
  if constexpr (D == 1) {
    const auto& g = m.geometry();
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double a = g.lo[0] + i * g.step[0], b = a + g.step[0];
      const double inside = std::max(0.0, std::min(b, c[0] + r) - std::max(a, c[0] - r));
      s += m[i] * (g.step[0] - inside);
    }
    return std::max(0.0, s);
  } else {
    double s = 0.0;
    m.for_each_atom([&](const Point<D>& y, double w) {
      if (norm<D>(y - c) > r) s += w;
    });
    return s;
  }
}

template <int D>
double exceedance(const ParticleMeasure<D>& m, const Point<D>& c, double r) {
  double s = 0.0;
  for (const auto& a : m.atoms())
    if (norm<D>(a.position - c) > r) s += a.weight;
  return s;
}

}  // namespace detail

// Exceedance profile of the centered measure against the class K_{alpha,C}.
template <int D, typename M>
TailProfile tail_profile(const Potential<D>& W, const M& m, double alpha, double r_max = 6.0,
                         int n_radii = 121) {
  detail::require(alpha > 0.0, "tail rate alpha must be > 0");
  detail::require(r_max > 0.0 && n_radii >= 2, "need a positive radius range");
  const Point<D> c = center<D>(W, m);
  TailProfile tp;
  tp.alpha = alpha;
  std::size_t argmax = 0;
  bool hits_zero = false;
  for (int i = 0; i < n_radii; ++i) {
    const double r = r_max * i / (n_radii - 1);
    const double e = detail::exceedance<D>(m, c, r);
    tp.radii.push_back(r);
    tp.exceedance.push_back(e);
    if (e <= 0.0) hits_zero = true;
    const double scaled = e * std::exp(alpha * r);
    if (scaled > tp.C) {
      tp.C = scaled;
      argmax = static_cast<std::size_t>(i);
    }
  }
  // Enforce monotonicity against rounding in the partial-cell sums.
  for (std::size_t i = 1; i < tp.exceedance.size(); ++i)
    tp.exceedance[i] = std::min(tp.exceedance[i], tp.exceedance[i - 1]);
  tp.certified = hits_zero || argmax + 1 < tp.radii.size();
  return tp;
}

}  // namespace selfint
