#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "errors.hpp"

namespace selfint {

template <int D>
using Point = std::array<double, D>;

template <int D>
using Matrix = std::array<std::array<double, D>, D>;

template <int D>
concept SupportedDim = (D == 1 || D == 2);

template <std::size_t N>
std::array<double, N> operator+(std::array<double, N> a, const std::array<double, N>& b) {
  for (std::size_t i = 0; i < N; ++i) a[i] += b[i];
  return a;
}

template <std::size_t N>
std::array<double, N> operator-(std::array<double, N> a, const std::array<double, N>& b) {
  for (std::size_t i = 0; i < N; ++i) a[i] -= b[i];
  return a;
}

template <std::size_t N>
std::array<double, N> operator*(double s, std::array<double, N> a) {
  for (auto& v : a) v *= s;
  return a;
}

template <int D>
double dot(const Point<D>& a, const Point<D>& b) {
  double s = 0.0;
  for (int i = 0; i < D; ++i) s += a[i] * b[i];
  return s;
}

template <int D>
double norm(const Point<D>& a) {
  return std::sqrt(dot<D>(a, a));
}

template <int D>
bool all_finite(const Point<D>& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

template <int D>
Point<D> zero_point() {
  Point<D> p{};
  p.fill(0.0);
  return p;
}

template <int D>
Matrix<D> zero_matrix() {
  Matrix<D> m{};
  for (auto& row : m) row.fill(0.0);
  return m;
}

// Solves m * x = b. The matrices arising here are Hessians of uniformly
// convex functions, hence symmetric positive definite.
template <int D>
Point<D> solve(const Matrix<D>& m, const Point<D>& b) {
  if constexpr (D == 1) {
    if (m[0][0] == 0.0) throw NumericFailure("singular 1x1 system");
    return {b[0] / m[0][0]};
  } else {
    const double det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if (det == 0.0) throw NumericFailure("singular 2x2 system");
    return {(m[1][1] * b[0] - m[0][1] * b[1]) / det,
            (m[0][0] * b[1] - m[1][0] * b[0]) / det};
  }
}

// Smallest and largest eigenvalue of a symmetric matrix.
template <int D>
std::array<double, 2> eigen_range(const Matrix<D>& m) {
  if constexpr (D == 1) {
    return {m[0][0], m[0][0]};
  } else {
    const double tr = m[0][0] + m[1][1];
    const double diff = m[0][0] - m[1][1];
    const double off = 0.5 * (m[0][1] + m[1][0]);
    const double r = std::sqrt(0.25 * diff * diff + off * off);
    return {0.5 * tr - r, 0.5 * tr + r};
  }
}

template <int D>
double spectral_norm(const Matrix<D>& m) {
  const auto ev = eigen_range<D>(m);
  return std::max(std::abs(ev[0]), std::abs(ev[1]));
}

template <int D>
std::string to_string(const Point<D>& p) {
  std::string s = "(";
  for (int i = 0; i < D; ++i) {
    if (i) s += ", ";
    s += std::to_string(p[i]);
  }
  return s + ")";
}

}  // namespace selfint
