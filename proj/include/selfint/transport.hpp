#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "measure.hpp"
#include "potential.hpp"

namespace selfint {

enum class DistanceMethod { Tp1d, W2Quantile, W2Assignment, GridResampled };

inline std::string to_string(DistanceMethod m) {
  switch (m) {
    case DistanceMethod::Tp1d: return "tp-1d";
    case DistanceMethod::W2Quantile: return "w2-quantile";
    case DistanceMethod::W2Assignment: return "w2-assignment";
    case DistanceMethod::GridResampled: return "grid-resampled";
  }
  return "unknown";
}

template <int D>
struct DistanceResult {
  double value = 0.0;
  DistanceMethod method = DistanceMethod::Tp1d;
  std::optional<Point<D>> centered_at;
};

namespace detail {

// Normalized 1-D CDF as a list of knots. Between knots i and i+1 the CDF is
// linear from right[i] to left[i+1]; a jump sits at x[i] when left != right.
struct Cdf1d {
  std::vector<double> x, left, right;
};

inline Cdf1d cdf_of(const ParticleMeasure<1>& m) {
  if (m.empty()) throw InvalidInput("distance to an empty measure");
  std::vector<std::pair<double, double>> a;
  a.reserve(m.size());
  double mass = 0.0;
  for (const auto& at : m.atoms()) {
    a.emplace_back(at.position[0], at.weight);
    mass += at.weight;
  }
  std::sort(a.begin(), a.end());
  Cdf1d c;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!c.x.empty() && a[i].first == c.x.back()) {
      acc += a[i].second;
      c.right.back() = acc / mass;
      continue;
    }
    c.x.push_back(a[i].first);
    c.left.push_back(acc / mass);
    acc += a[i].second;
    c.right.push_back(acc / mass);
  }
  c.right.back() = 1.0;
  return c;
}

inline Cdf1d cdf_of(const GridDensity<1>& m) {
  const auto& g = m.geometry();
  const double mass = m.mass();
  if (!(mass > 0.0)) throw InvalidInput("distance to a density of zero mass");
  Cdf1d c;
  double acc = 0.0;
  c.x.push_back(g.lo[0]);
  c.left.push_back(0.0);
  c.right.push_back(0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    acc += m[i] * g.step[0];
    const double v = std::min(1.0, acc / mass);
    c.x.push_back(g.lo[0] + (i + 1) * g.step[0]);
    c.left.push_back(v);
    c.right.push_back(v);
  }
  c.left.back() = c.right.back() = 1.0;
  return c;
}

// Evaluates a CDF at arbitrary points of a sorted query list (right-limits at knots).
class CdfCursor {
 public:
  explicit CdfCursor(const Cdf1d& c) : c_(c) {}

  // Value of F just to the right of x, for nondecreasing x across calls.
  double right_of(double x) {
    while (k_ < c_.x.size() && c_.x[k_] <= x) ++k_;
    if (k_ == 0) return 0.0;
    if (k_ == c_.x.size()) return 1.0;
    const std::size_t i = k_ - 1;
    const double t = (x - c_.x[i]) / (c_.x[k_] - c_.x[i]);
    return c_.right[i] + t * (c_.left[k_] - c_.right[i]);
  }

 private:
  const Cdf1d& c_;
  std::size_t k_ = 0;
};

// Gauss-Legendre, 16 nodes on [-1, 1]: exact for polynomials up to degree 31.
inline const std::array<std::pair<double, double>, 8>& gauss_legendre16() {
  static const std::array<std::pair<double, double>, 8> nw = {{
      {0.0950125098376374401853193, 0.1894506104550684962853967},
      {0.2816035507792589132304605, 0.1826034150449235888667637},
      {0.4580167776572273863424194, 0.1691565193950025381893121},
      {0.6178762444026437484466718, 0.1495959888165767320815017},
      {0.7554044083550030338951012, 0.1246289712555338720524763},
      {0.8656312023878317438804679, 0.0951585116824927848099251},
      {0.9445750230732325760779884, 0.0622535239386478928628438},
      {0.9894009349916499325961542, 0.0271524594117540948517806},
  }};
  return nw;
}

// \int_a^b P(|x|) |g0 + g1 (x - a)| dx where neither x nor the linear factor
// changes sign on (a, b).
inline double tp_piece(const PolyBound& P, double a, double b, double g0, double g1) {
  if (b <= a) return 0.0;
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (const auto& [node, w] : gauss_legendre16())
    for (double sgn : {-1.0, 1.0}) {
      const double x = mid + sgn * node * half;
      s += w * P(std::abs(x)) * std::abs(g0 + g1 * (x - a));
    }
  return s * half;
}

}  // namespace detail

// T_P(m1, m2) = \int P(|x|) |F_1(x) - F_2(x)| dx, integrated exactly piece by piece.
template <typename M1, typename M2>
DistanceResult<1> tp_distance_1d(const PolyBound& P, const M1& m1, const M2& m2) {
  const detail::Cdf1d c1 = detail::cdf_of(m1), c2 = detail::cdf_of(m2);
  std::vector<double> knots;
  knots.reserve(c1.x.size() + c2.x.size());
  std::merge(c1.x.begin(), c1.x.end(), c2.x.begin(), c2.x.end(), std::back_inserter(knots));
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  detail::CdfCursor f1(c1), f2(c2);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = knots[i], b = knots[i + 1];
    // Both CDFs are linear on (a, b); evaluate the gap at both ends from inside.
    const double ga = f1.right_of(a) - f2.right_of(a);
    // Left limit at b: linear continuation of the interior values.
    auto left_limit = [&](const detail::Cdf1d& c) {
      auto it = std::lower_bound(c.x.begin(), c.x.end(), b);
      if (it == c.x.begin()) return 0.0;
      const std::size_t k = static_cast<std::size_t>(it - c.x.begin());
      if (k == c.x.size()) return 1.0;
      if (c.x[k] == b) return c.left[k];
      const std::size_t j = k - 1;
      const double t = (b - c.x[j]) / (c.x[k] - c.x[j]);
      return c.right[j] + t * (c.left[k] - c.right[j]);
    };
    const double gb_left = left_limit(c1) - left_limit(c2);
    const double slope = (gb_left - ga) / (b - a);

    std::vector<double> cuts = {a, b};
    if (a < 0.0 && b > 0.0) cuts.push_back(0.0);
    if (slope != 0.0) {
      const double root = a - ga / slope;
      if (root > a && root < b) cuts.push_back(root);
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j)
      total += detail::tp_piece(P, cuts[j], cuts[j + 1], ga + slope * (cuts[j] - a), slope);
  }
  if (!std::isfinite(total)) throw NumericFailure("T_P integral is not finite");
  return {total, DistanceMethod::Tp1d, std::nullopt};
}

namespace detail {

// Quantile function as pieces (u0, u1, x0, x1), linear in u on each piece.
struct QuantilePiece {
  double u0, u1, x0, x1;
};

inline std::vector<QuantilePiece> quantile_of(const ParticleMeasure<1>& m) {
  if (m.empty()) throw InvalidInput("distance to an empty measure");
  std::vector<std::pair<double, double>> a;
  a.reserve(m.size());
  double mass = 0.0;
  for (const auto& at : m.atoms()) {
    a.emplace_back(at.position[0], at.weight);
    mass += at.weight;
  }
  std::sort(a.begin(), a.end());
  std::vector<QuantilePiece> q;
  q.reserve(a.size());
  double acc = 0.0;
  for (const auto& [x, w] : a) {
    const double u0 = acc / mass;
    acc += w;
    q.push_back({u0, acc / mass, x, x});
  }
  q.back().u1 = 1.0;
  return q;
}

inline std::vector<QuantilePiece> quantile_of(const GridDensity<1>& m) {
  const auto& g = m.geometry();
  const double mass = m.mass();
  if (!(mass > 0.0)) throw InvalidInput("distance to a density of zero mass");
  std::vector<QuantilePiece> q;
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] <= 0.0) continue;
    const double u0 = acc / mass;
    acc += m[i] * g.step[0];
    const double x0 = g.lo[0] + i * g.step[0];
    q.push_back({u0, acc / mass, x0, x0 + g.step[0]});
  }
  q.back().u1 = 1.0;
  return q;
}

inline double quantile_at(const QuantilePiece& p, double u) {
  if (p.u1 <= p.u0) return p.x0;
  return p.x0 + (p.x1 - p.x0) * (u - p.u0) / (p.u1 - p.u0);
}

}  // namespace detail

// W_2 in 1-D: \int_0^1 (q_1(u) - q_2(u))^2 du integrated exactly over the
// merged quantile pieces.
template <typename M1, typename M2>
double w2_squared_1d(const M1& m1, const M2& m2) {
  const auto q1 = detail::quantile_of(m1), q2 = detail::quantile_of(m2);
  std::size_t i = 0, j = 0;
  double u = 0.0, s = 0.0;
  while (i < q1.size() && j < q2.size()) {
    const double u_next = std::min(q1[i].u1, q2[j].u1);
    if (u_next > u) {
      const double da = detail::quantile_at(q1[i], u) - detail::quantile_at(q2[j], u);
      const double db = detail::quantile_at(q1[i], u_next) - detail::quantile_at(q2[j], u_next);
      s += (u_next - u) * (da * da + da * db + db * db) / 3.0;
      u = u_next;
    }
    if (q1[i].u1 <= u) ++i;
    if (j < q2.size() && q2[j].u1 <= u) ++j;
  }
  return s;
}

namespace detail {

// Minimum-cost perfect matching (Hungarian algorithm, O(n^3)).
inline double assignment_cost(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
  return total;
}

inline bool equal_weights(const ParticleMeasure<2>& m) {
  const double w0 = m.atoms().front().weight;
  for (const auto& a : m.atoms())
    if (std::abs(a.weight - w0) > 1e-12 * w0) return false;
  return true;
}

}  // namespace detail

template <typename M1, typename M2>
  requires(measure_dimension_v<M1> == 1 && measure_dimension_v<M2> == 1)
DistanceResult<1> w2_distance(const M1& m1, const M2& m2) {
  return {std::sqrt(std::max(0.0, w2_squared_1d(m1, m2))), DistanceMethod::W2Quantile, std::nullopt};
}

inline DistanceResult<2> w2_distance(const ParticleMeasure<2>& m1, const ParticleMeasure<2>& m2) {
  if (m1.empty() || m2.empty()) throw InvalidInput("distance to an empty measure");
  if (m1.size() != m2.size() || m1.size() > 64 || !detail::equal_weights(m1) ||
      !detail::equal_weights(m2))
    throw UnsupportedInput("2-D W2 needs equal-weight atom sets of the same size n <= 64");
  const std::size_t n = m1.size();
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto d = m1.atoms()[i].position - m2.atoms()[j].position;
      cost[i][j] = dot<2>(d, d);
    }
  return {std::sqrt(detail::assignment_cost(cost) / n), DistanceMethod::W2Assignment, std::nullopt};
}

inline DistanceResult<2> w2_distance(const GridDensity<2>&, const GridDensity<2>&) {
  throw UnsupportedInput("2-D W2 is available for equal-weight atom sets only");
}

inline DistanceResult<2> w2_distance(const GridDensity<2>&, const ParticleMeasure<2>&) {
  throw UnsupportedInput("2-D W2 is available for equal-weight atom sets only");
}

inline DistanceResult<2> w2_distance(const ParticleMeasure<2>&, const GridDensity<2>&) {
  throw UnsupportedInput("2-D W2 is available for equal-weight atom sets only");
}

enum class DistanceKind { Tp, W2 };

// Distance after translating each measure by its own center, or both by a
// common point when one is supplied.
template <int D, typename M1, typename M2>
DistanceResult<D> centered_distance(const Potential<D>& W, const M1& m1, const M2& m2,
                                    DistanceKind which,
                                    std::optional<Point<D>> common = std::nullopt) {
  const Point<D> c1 = common ? *common : center<D>(W, m1);
  const Point<D> c2 = common ? *common : center<D>(W, m2);
  const auto r1 = recenter<D>(m1, c1);
  const auto r2 = recenter<D>(m2, c2);
  DistanceResult<D> r;
  if (which == DistanceKind::Tp) {
    if constexpr (D == 1) {
      r = tp_distance_1d(W.bound(), r1, r2);
    } else {
      throw UnsupportedInput("T_P is available in one dimension only");
    }
  } else {
    r = w2_distance(r1, r2);
  }
  r.centered_at = common;
  return r;
}

}  // namespace selfint
