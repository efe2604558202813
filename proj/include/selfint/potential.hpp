#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "point.hpp"
#include "polynomial.hpp"

namespace selfint {

enum class PotentialKind { QuadraticSymmetric, QuadraticShifted, EvenPolynomial, External };

inline std::string to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::QuadraticSymmetric: return "quadratic-symmetric";
    case PotentialKind::QuadraticShifted: return "quadratic-shifted";
    case PotentialKind::EvenPolynomial: return "even-polynomial";
    case PotentialKind::External: return "external";
  }
  return "unknown";
}

inline PotentialKind parse_potential_kind(const std::string& s) {
  if (s == "quadratic-symmetric") return PotentialKind::QuadraticSymmetric;
  if (s == "quadratic-shifted") return PotentialKind::QuadraticShifted;
  if (s == "even-polynomial") return PotentialKind::EvenPolynomial;
  if (s == "external") return PotentialKind::External;
  throw InvalidInput("unknown potential kind '" + s + "'");
}

// The dominating polynomial P(r) = A (1 + r^k).
struct PolyBound {
  double scale = 1.0;  // A >= 1
  int degree = 2;      // k >= 2

  double operator()(double r) const {
    if (!(r >= 0.0)) throw InvalidInput("dominating polynomial needs r >= 0");
    return scale * (1.0 + std::pow(r, degree));
  }

  // \int_a^b P(|x|) dx for a <= b.
  double integral(double a, double b) const {
    auto prim = [this](double x) {  // antiderivative of A(1+|x|^k), odd in x
      const double ax = std::abs(x);
      const double v = ax + std::pow(ax, degree + 1) / (degree + 1);
      return scale * (x < 0 ? -v : v);
    };
    return prim(b) - prim(a);
  }
};

// A polynomial potential on R^D: an interaction W or an external V.
//
// Radial kinds are W(x) = w(|x - s|) with w(r) = sum_i c_i r^i (even i) and
// shift s = 0, except quadratic-shifted where s = e_1. The external kind is the
// separable V(x) = sum_axis sum_i c_i x_axis^i.
template <int D>
  requires SupportedDim<D>
class Potential {
 public:
  static Potential quadratic_symmetric(double c) {
    detail::require(c > 0.0, "quadratic coefficient must be > 0");
    Potential p(PotentialKind::QuadraticSymmetric, {0.0, 0.0, 0.5 * c}, zero_point<D>());
    return p;
  }

  static Potential quadratic_shifted(double c) {
    detail::require(c > 0.0, "quadratic coefficient must be > 0");
    Point<D> s = zero_point<D>();
    s[0] = 1.0;
    return Potential(PotentialKind::QuadraticShifted, {0.0, 0.0, 0.5 * c}, s);
  }

  // coeffs[i] multiplies |x|^i; odd entries must vanish, even ones be >= 0.
  static Potential even_polynomial(std::vector<double> coeffs) {
    detail::require(!coeffs.empty(), "even polynomial needs coefficients");
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      detail::require(std::isfinite(coeffs[i]), "non-finite coefficient");
      if (i % 2 == 1) detail::require(coeffs[i] == 0.0, "odd coefficients must be zero");
      else detail::require(coeffs[i] >= 0.0, "even coefficients must be >= 0");
    }
    return Potential(PotentialKind::EvenPolynomial, std::move(coeffs), zero_point<D>());
  }

  // coeffs[i] multiplies x^i on every axis.
  static Potential external(std::vector<double> coeffs) {
    detail::require(!coeffs.empty(), "external potential needs coefficients");
    for (double c : coeffs) detail::require(std::isfinite(c), "non-finite coefficient");
    return Potential(PotentialKind::External, std::move(coeffs), zero_point<D>());
  }

  // The zero potential (useful as "no interaction").
  static Potential zero() { return Potential(PotentialKind::EvenPolynomial, {0.0}, zero_point<D>()); }

  PotentialKind kind() const { return kind_; }
  const std::vector<double>& coefficients() const { return coeffs_; }
  bool symmetric() const { return symmetric_; }
  double convexity_constant() const { return convexity_; }
  const PolyBound& bound() const { return bound_; }
  int degree() const { return poly_.degree(); }
  bool is_zero() const { return poly_.empty(); }

  void set_symmetric(bool s) { symmetric_ = s; }
  void set_convexity_constant(double c) { convexity_ = c; }
  void set_bound(PolyBound b) {
    detail::require(b.scale >= 1.0 && b.degree >= 2, "bound needs A >= 1 and k >= 2");
    bound_ = b;
  }

  double value(const Point<D>& x) const {
    check(x);
    return poly_(x);
  }

  Point<D> gradient(const Point<D>& x) const {
    check(x);
    Point<D> g{};
    for (int d = 0; d < D; ++d) g[d] = grad_[d](x);
    return g;
  }

  Matrix<D> hessian(const Point<D>& x) const {
    check(x);
    Matrix<D> h{};
    for (int a = 0; a < D; ++a)
      for (int b = 0; b < D; ++b) h[a][b] = hess_[a][b](x);
    return h;
  }

  const Polynomial<D>& polynomial() const { return poly_; }
  const Polynomial<D>& gradient_polynomial(int axis) const { return grad_[axis]; }
  const Polynomial<D>& hessian_polynomial(int a, int b) const { return hess_[a][b]; }

 private:
  Potential(PotentialKind kind, std::vector<double> coeffs, Point<D> shift)
      : kind_(kind), coeffs_(std::move(coeffs)) {
    if (kind == PotentialKind::External) {
      for (int d = 0; d < D; ++d)
        for (std::size_t i = 0; i < coeffs_.size(); ++i) {
          Exponents<D> e{};
          e[d] = static_cast<int>(i);
          poly_.add(e, coeffs_[i]);
        }
    } else {
      Polynomial<D> radial;
      for (std::size_t i = 0; i < coeffs_.size(); i += 2) {
        const Polynomial<D> r = radial_power<D>(static_cast<int>(i / 2));
        for (const auto& t : r.terms()) radial.add(t.exps, coeffs_[i] * t.coeff);
      }
      poly_ = radial.shifted(shift);
    }
    for (int a = 0; a < D; ++a) {
      grad_[a] = poly_.derivative(a);
      for (int b = 0; b < D; ++b) hess_[a][b] = grad_[a].derivative(b);
    }

    const bool shifted = norm<D>(shift) > 0.0;
    symmetric_ = !shifted;
    if (kind == PotentialKind::External) {
      for (std::size_t i = 1; i < coeffs_.size(); i += 2)
        if (coeffs_[i] != 0.0) symmetric_ = false;
    }
    convexity_ = default_convexity();
    bound_ = default_bound(shifted);
  }

  double coeff(std::size_t i) const { return i < coeffs_.size() ? coeffs_[i] : 0.0; }

  double default_convexity() const {
    if (kind_ != PotentialKind::External) return 2.0 * coeff(2);
    // 2 c_2 is a valid lower bound when every higher term is an even power
    // with a nonnegative coefficient.
    for (std::size_t i = 3; i < coeffs_.size(); ++i) {
      if (i % 2 == 1 && coeffs_[i] != 0.0) return 0.0;
      if (i % 2 == 0 && coeffs_[i] < 0.0) return 0.0;
    }
    return 2.0 * coeff(2);
  }

  PolyBound default_bound(bool shifted) const {
    const int k = std::max(2, poly_.degree());
    double a0 = 0.0;
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      const double di = static_cast<double>(i);
      a0 += std::abs(coeffs_[i]) * (1.0 + di + di * (di - 1.0));
    }
    if (kind_ == PotentialKind::External) a0 *= D;
    if (shifted) a0 *= std::pow(2.0, k);
    // A >= 2^{k-1} makes P(|x-y|) <= P(|x|) P(|y|).
    return PolyBound{std::max({1.0, a0, std::pow(2.0, k - 1)}), k};
  }

  static void check(const Point<D>& x) {
    if (!all_finite<D>(x)) throw InvalidInput("potential evaluated at a non-finite point");
  }

  PotentialKind kind_;
  std::vector<double> coeffs_;
  Polynomial<D> poly_;
  std::array<Polynomial<D>, D> grad_;
  std::array<std::array<Polynomial<D>, D>, D> hess_;
  bool symmetric_ = true;
  double convexity_ = 0.0;
  PolyBound bound_;
};

template <int D>
double dominating_polynomial(const Potential<D>& p, double r) {
  return p.bound()(r);
}

struct CertificateReport {
  double min_curvature = 0.0;
  double max_domination_ratio = 0.0;
  double symmetry_defect = 0.0;
  double max_submultiplicative_ratio = 0.0;
  bool convexity_ok = false;
  bool domination_ok = false;
  bool symmetry_ok = false;
  bool submultiplicative_ok = false;
  bool pass() const { return convexity_ok && domination_ok && symmetry_ok && submultiplicative_ok; }
};

// Samples the convergence hypotheses (convexity, domination, symmetry) on a regular grid in
// [-radius, radius]^D.
template <int D>
CertificateReport certify(const Potential<D>& p, double sample_radius, int n_samples) {
  detail::require(sample_radius > 0.0, "sample radius must be > 0");
  detail::require(n_samples >= 2, "need at least 2 samples per axis");

  std::vector<double> axis(n_samples);
  for (int i = 0; i < n_samples; ++i)
    axis[i] = -sample_radius + 2.0 * sample_radius * i / (n_samples - 1);
  std::vector<Point<D>> pts;
  if constexpr (D == 1) {
    for (double a : axis) pts.push_back({a});
  } else {
    for (double a : axis)
      for (double b : axis) pts.push_back({a, b});
  }

  const PolyBound& P = p.bound();
  CertificateReport r;
  r.min_curvature = INFINITY;
  double scale = 1.0;
  for (const auto& x : pts) {
    const double w = p.value(x);
    const auto g = p.gradient(x);
    const auto h = p.hessian(x);
    r.min_curvature = std::min(r.min_curvature, eigen_range<D>(h)[0]);
    const double dom = (std::abs(w) + norm<D>(g) + spectral_norm<D>(h)) / P(norm<D>(x));
    r.max_domination_ratio = std::max(r.max_domination_ratio, dom);
    r.symmetry_defect = std::max(r.symmetry_defect, std::abs(w - p.value(-1.0 * x)));
    scale = std::max(scale, std::abs(w));
  }

  // Pairs on a thinned subset keep the quadratic pair count bounded in 2-D.
  const std::size_t stride = std::max<std::size_t>(1, pts.size() / 64);
  for (std::size_t i = 0; i < pts.size(); i += stride)
    for (std::size_t j = 0; j < pts.size(); j += stride) {
      const double lhs = P(norm<D>(pts[i] - pts[j]));
      const double rhs = P(norm<D>(pts[i])) * P(norm<D>(pts[j]));
      r.max_submultiplicative_ratio = std::max(r.max_submultiplicative_ratio, lhs / rhs);
    }

  const double c = p.convexity_constant();
  r.convexity_ok = c > 0.0 && r.min_curvature >= c * (1.0 - 1e-12) - 1e-12;
  r.domination_ok = r.max_domination_ratio <= 1.0 + 1e-12;
  r.symmetry_ok = !p.symmetric() || r.symmetry_defect <= 1e-12 * scale;
  r.submultiplicative_ok = r.max_submultiplicative_ratio <= 1.0 + 1e-12;
  return r;
}

}  // namespace selfint
