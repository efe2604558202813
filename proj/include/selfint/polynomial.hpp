#pragma once

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "point.hpp"

namespace selfint {

template <int D>
using Exponents = std::array<int, D>;

// Raw moments  M_a = \int y^a dm(y)  for every multi-index with |a| <= degree.
// Index 0 holds the total mass.
template <int D>
class MomentSet {
 public:
  MomentSet() = default;
  explicit MomentSet(int degree) : degree_(degree), values_(size_for(degree), 0.0) {
    detail::require(degree >= 0, "moment degree must be >= 0");
  }

  int degree() const { return degree_; }
  double mass() const { return values_.empty() ? 0.0 : values_[0]; }

  double operator[](const Exponents<D>& a) const { return values_[index(a)]; }
  double& operator[](const Exponents<D>& a) { return values_[index(a)]; }

  // Adds weight * y^a for every multi-index.
  void accumulate(const Point<D>& y, double weight) {
    if constexpr (D == 1) {
      double p = weight;
      for (int i = 0; i <= degree_; ++i) {
        values_[i] += p;
        p *= y[0];
      }
    } else {
      double px = weight;
      for (int i = 0; i <= degree_; ++i) {
        double p = px;
        for (int j = 0; i + j <= degree_; ++j) {
          values_[i * (degree_ + 1) + j] += p;
          p *= y[1];
        }
        px *= y[0];
      }
    }
  }

  MomentSet& operator+=(const MomentSet& o) {
    detail::require(o.degree_ == degree_, "moment degree mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }

  MomentSet scaled(double s) const {
    MomentSet r = *this;
    for (auto& v : r.values_) v *= s;
    return r;
  }

  // First moment divided by the mass.
  Point<D> mean() const {
    Point<D> m{};
    for (int d = 0; d < D; ++d) {
      Exponents<D> e{};
      e[d] = 1;
      m[d] = degree_ >= 1 ? (*this)[e] / mass() : 0.0;
    }
    return m;
  }

  const std::vector<double>& raw() const { return values_; }

 private:
  static std::size_t size_for(int degree) {
    std::size_t n = static_cast<std::size_t>(degree) + 1;
    return D == 1 ? n : n * n;
  }
  std::size_t index(const Exponents<D>& a) const {
    if constexpr (D == 1) return static_cast<std::size_t>(a[0]);
    else return static_cast<std::size_t>(a[0] * (degree_ + 1) + a[1]);
  }

  int degree_ = -1;
  std::vector<double> values_;
};

// Sparse multivariate polynomial with real coefficients.
template <int D>
class Polynomial {
 public:
  struct Term {
    Exponents<D> exps;
    double coeff;
  };

  Polynomial() = default;

  void add(const Exponents<D>& e, double c) {
    if (c == 0.0) return;
    for (auto& t : terms_) {
      if (t.exps == e) {
        t.coeff += c;
        if (t.coeff == 0.0) prune();
        return;
      }
    }
    terms_.push_back({e, c});
  }

  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  int degree() const {
    int d = 0;
    for (const auto& t : terms_) d = std::max(d, total(t.exps));
    return d;
  }

  double operator()(const Point<D>& x) const {
    double s = 0.0;
    for (const auto& t : terms_) {
      double m = t.coeff;
      for (int d = 0; d < D; ++d) m *= ipow(x[d], t.exps[d]);
      s += m;
    }
    return s;
  }

  Polynomial derivative(int axis) const {
    Polynomial r;
    for (const auto& t : terms_) {
      if (t.exps[axis] == 0) continue;
      Exponents<D> e = t.exps;
      const double c = t.coeff * e[axis];
      --e[axis];
      r.add(e, c);
    }
    return r;
  }

  // p(x - s) expanded as a polynomial in x.
  Polynomial shifted(const Point<D>& s) const {
    Polynomial r;
    for (const auto& t : terms_) expand_shift(t, s, r);
    return r;
  }

  // \int p(x - y) dm(y) using the raw moments of m. Exact up to rounding.
  double convolve(const Point<D>& x, const MomentSet<D>& m) const {
    double s = 0.0;
    for (const auto& t : terms_) {
      if constexpr (D == 1) {
        const int b = t.exps[0];
        double acc = 0.0;
        for (int j = 0; j <= b; ++j) {
          const double sign = (j % 2) ? -1.0 : 1.0;
          acc += binom(b, j) * ipow(x[0], b - j) * sign * m[{j}];
        }
        s += t.coeff * acc;
      } else {
        const int b0 = t.exps[0], b1 = t.exps[1];
        double acc = 0.0;
        for (int j0 = 0; j0 <= b0; ++j0) {
          const double f0 = binom(b0, j0) * ipow(x[0], b0 - j0);
          for (int j1 = 0; j1 <= b1; ++j1) {
            const double sign = ((j0 + j1) % 2) ? -1.0 : 1.0;
            acc += sign * f0 * binom(b1, j1) * ipow(x[1], b1 - j1) * m[{j0, j1}];
          }
        }
        s += t.coeff * acc;
      }
    }
    return s;
  }

  static double ipow(double x, int n) {
    double r = 1.0;
    while (n > 0) {
      if (n & 1) r *= x;
      x *= x;
      n >>= 1;
    }
    return r;
  }

  static double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  }

 private:
  static int total(const Exponents<D>& e) {
    int s = 0;
    for (int v : e) s += v;
    return s;
  }

  void prune() {
    std::vector<Term> kept;
    for (const auto& t : terms_)
      if (t.coeff != 0.0) kept.push_back(t);
    terms_.swap(kept);
  }

  static void expand_shift(const Term& t, const Point<D>& s, Polynomial& out) {
    if constexpr (D == 1) {
      const int b = t.exps[0];
      for (int j = 0; j <= b; ++j)
        out.add({b - j}, t.coeff * binom(b, j) * ipow(-s[0], j));
    } else {
      const int b0 = t.exps[0], b1 = t.exps[1];
      for (int j0 = 0; j0 <= b0; ++j0)
        for (int j1 = 0; j1 <= b1; ++j1)
          out.add({b0 - j0, b1 - j1}, t.coeff * binom(b0, j0) * ipow(-s[0], j0) *
                                          binom(b1, j1) * ipow(-s[1], j1));
    }
  }

  std::vector<Term> terms_;
};

// |x|^{2j} expanded in monomials.
template <int D>
Polynomial<D> radial_power(int j) {
  Polynomial<D> p;
  if constexpr (D == 1) {
    p.add({2 * j}, 1.0);
  } else {
    for (int a = 0; a <= j; ++a)
      p.add({2 * a, 2 * (j - a)}, Polynomial<D>::binom(j, a));
  }
  return p;
}

}  // namespace selfint
