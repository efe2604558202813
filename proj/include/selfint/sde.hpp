#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "errors.hpp"
#include "flow.hpp"
#include "gibbs.hpp"
#include "measure.hpp"
#include "polynomial.hpp"
#include "potential.hpp"
#include "random.hpp"

namespace selfint {

enum class HistoryMode { RunningMoments, FullHistory, Reservoir };

inline std::string to_string(HistoryMode m) {
  switch (m) {
    case HistoryMode::RunningMoments: return "running-moments";
    case HistoryMode::FullHistory: return "full-history";
    case HistoryMode::Reservoir: return "reservoir";
  }
  return "unknown";
}

inline HistoryMode parse_history_mode(const std::string& s) {
  if (s == "running-moments") return HistoryMode::RunningMoments;
  if (s == "full-history") return HistoryMode::FullHistory;
  if (s == "reservoir") return HistoryMode::Reservoir;
  throw InvalidInput("unknown history mode '" + s + "'");
}

struct SimConfig {
  double dt = 0.01;
  double t_start = 1.0;
  double t_end = 100.0;
  std::uint64_t seed = 1;
  std::uint64_t replica = 0;
  double noise_scale = std::sqrt(2.0);
  HistoryMode history = HistoryMode::RunningMoments;
  std::size_t reservoir_size = 4096;
  int record_every = 1;
  int center_every = 10;
  double center_jump = 0.5;
  std::optional<Schedule> schedule;  // windows for L_n

  void validate(double convexity) const {
    detail::require(dt > 0.0, "dt must be > 0");
    const double cap = 0.01 * std::min(1.0, convexity > 0.0 ? 1.0 / convexity : 1.0);
    detail::require(dt <= cap * (1.0 + 1e-12), "dt must be <= 0.01 min(1, 1/C_W)");
    detail::require(t_start >= 0.0, "t_start must be >= 0");
    detail::require(t_end > t_start, "t_end must exceed t_start");
    detail::require(noise_scale >= 0.0, "noise scale must be >= 0");
    detail::require(reservoir_size >= 1, "reservoir needs at least one slot");
    detail::require(record_every >= 1, "record_every must be >= 1");
    detail::require(center_every >= 1, "center_every must be >= 1");
  }

  std::size_t steps() const {
    return static_cast<std::size_t>(std::llround((t_end - t_start) / dt));
  }
};

template <int D>
struct PicardResult {
  std::vector<Point<D>> path;     // X at 0, dt, ..., N dt
  std::vector<double> distances;  // sup distance between successive iterates
  double delta = 0.0;
};

// Horizon making the Picard map a contraction: delta * max(sup|grad W|,
// Lip grad W) <= 1/3 on the radius-2 ball (plus the same for V near x0).
template <int D>
double picard_horizon(const Potential<D>& W, const OptionalPotential<D>& V, const Point<D>& x0) {
  const int n = D == 1 ? 201 : 41;
  double sup_grad = 0.0, lip = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < (D == 1 ? 1 : n); ++j) {
      Point<D> z{};
      z[0] = -2.0 + 4.0 * i / (n - 1);
      if constexpr (D == 2) z[1] = -2.0 + 4.0 * j / (n - 1);
      if (norm<D>(z) > 2.0) continue;
      double g = norm<D>(W.gradient(z)), l = spectral_norm<D>(W.hessian(z));
      if (V && norm<D>(z) <= 1.0) {
        g += norm<D>(V->gradient(x0 + z));
        l += spectral_norm<D>(V->hessian(x0 + z));
      }
      sup_grad = std::max(sup_grad, g);
      lip = std::max(lip, l);
    }
  const double m = std::max(sup_grad, lip);
  return m > 0.0 ? 0.99 / (3.0 * m) : 1.0;
}

// Fixed point of X_k = x0 + s B_k - sum_{j<k} dt (grad W * mu_j(X_j) + grad V(X_j)),
// mu_j the average of X_0..X_{j-1} (delta at X_0 for j = 0), by Picard iteration.
template <int D>
PicardResult<D> picard_bootstrap(const Potential<D>& W, const OptionalPotential<D>& V,
                                 const Point<D>& x0, const std::vector<Point<D>>& increments,
                                 double dt, double noise_scale, double tol = 1e-10,
                                 int max_rounds = 200) {
  detail::require(!increments.empty(), "Picard bootstrap needs a noise path");
  detail::require(dt > 0.0, "dt must be > 0");
  const std::size_t n = increments.size();
  std::vector<Point<D>> noise(n + 1, x0);
  for (std::size_t k = 0; k < n; ++k) noise[k + 1] = noise[k] + noise_scale * increments[k];

  PicardResult<D> r;
  r.delta = n * dt;
  std::vector<Point<D>> path = noise;
  const int deg = std::max(1, W.degree());
  for (int round = 0; round < max_rounds; ++round) {
    std::vector<Point<D>> next(n + 1);
    next[0] = x0;
    MomentSet<D> ms(deg);
    ms.accumulate(path[0], 1.0);
    Point<D> acc = zero_point<D>();
    for (std::size_t j = 0; j < n; ++j) {
      if (j >= 2) ms.accumulate(path[j - 1], 1.0);
      Point<D> g = zero_point<D>();
      if (!W.is_zero())
        for (int a = 0; a < D; ++a) g[a] = W.gradient_polynomial(a).convolve(path[j], ms) / ms.mass();
      if (V) g = g + V->gradient(path[j]);
      acc = acc - dt * g;
      next[j + 1] = noise[j + 1] + acc;
    }
    double dist = 0.0;
    for (std::size_t k = 0; k <= n; ++k) dist = std::max(dist, norm<D>(next[k] - path[k]));
    if (r.distances.size() >= 1 && r.distances.back() > 1e-13 &&
        dist > 0.9 * r.distances.back())
      throw NumericFailure("Picard map is not contracting; shorten the horizon");
    r.distances.push_back(dist);
    path = std::move(next);
    if (dist < tol) {
      r.path = std::move(path);
      return r;
    }
  }
  throw NumericFailure("Picard iteration did not reach tolerance");
}

// Euler-Maruyama stepper for dX = s dB - (grad V(X) + grad W * mu_t(X)) dt with
// mu_t the normalized occupation measure. Copyable, so couplings can fork it.
template <int D>
  requires SupportedDim<D>
class SelfInteractingSde {
 public:
  SelfInteractingSde(Potential<D> W, OptionalPotential<D> V, SimConfig cfg, Point<D> x0)
      : W_(std::move(W)),
        V_(std::move(V)),
        cfg_(std::move(cfg)),
        noise_(cfg_.seed, cfg_.replica, StreamTag::Main),
        moments_(std::max(1, W_.degree())),
        x_(x0) {
    cfg_.validate(W_.convexity_constant());
    detail::require(all_finite<D>(x0), "initial point must be finite");
    if (cfg_.t_start > 0.0) {
      add_atom(x0, cfg_.t_start);
      t_ = cfg_.t_start;
    } else {
      bootstrap(x0);
    }
    newton();
  }

  double time() const { return t_; }
  std::size_t steps() const { return steps_; }
  const Point<D>& position() const { return x_; }
  const Point<D>& center() const { return c_; }
  const MomentSet<D>& moments() const { return moments_; }
  const SimConfig& config() const { return cfg_; }
  const Potential<D>& interaction() const { return W_; }
  const OptionalPotential<D>& external() const { return V_; }
  const std::vector<Point<D>>& bootstrap_path() const { return bootstrap_; }
  std::size_t newton_count() const { return newton_count_; }
  std::size_t jump_count() const { return jump_count_; }
  NoiseStream& noise() { return noise_; }

  // Drift at x under the current occupation measure.
  Point<D> drift(const Point<D>& x) const {
    Point<D> g = zero_point<D>();
    if (!W_.is_zero()) {
      switch (cfg_.history) {
        case HistoryMode::RunningMoments:
          for (int a = 0; a < D; ++a) g[a] = W_.gradient_polynomial(a).convolve(x, moments_);
          g = (1.0 / moments_.mass()) * g;
          break;
        case HistoryMode::FullHistory: {
          double m = 0.0;
          for (const auto& a : history_) {
            g = g + a.weight * W_.gradient(x - a.position);
            m += a.weight;
          }
          g = (1.0 / m) * g;
          break;
        }
        case HistoryMode::Reservoir: {
          const auto& items = reservoir_items();
          for (const auto& y : items) g = g + W_.gradient(x - y);
          g = (1.0 / items.size()) * g;
          break;
        }
      }
    }
    if (V_) g = g + V_->gradient(x);
    return -1.0 * g;
  }

  Point<D> draw_increment() { return noise_.increment<D>(cfg_.dt); }

  // One step driven by the Brownian increment dB ~ N(0, dt I).
  void step(const Point<D>& dB) {
    const Point<D> prev = x_;
    const Point<D> next = x_ + cfg_.dt * drift(x_) + cfg_.noise_scale * dB;
    if (!all_finite<D>(next)) throw NumericFailure("SDE state is no longer finite");
    add_atom(prev, cfg_.dt);
    ++steps_;
    t_ = base_time_ + static_cast<double>(steps_) * cfg_.dt;
    x_ = next;
    update_center(prev);
  }

  void advance() { step(draw_increment()); }

 private:
  struct Keyed {
    double key;
    Point<D> position;
    bool operator>(const Keyed& o) const { return key > o.key; }
  };

  void add_atom(const Point<D>& y, double w) {
    moments_.accumulate(y, w);
    if (cfg_.history == HistoryMode::FullHistory) history_.push_back({y, w});
    if (cfg_.history == HistoryMode::Reservoir) {
      // Weighted reservoir sampling with keys log(u) / w.
      const double u = std::max(noise_reservoir_.uniform(), 1e-300);
      const double key = std::log(u) / w;
      if (heap_.size() < cfg_.reservoir_size) {
        heap_.push({key, y});
      } else if (key > heap_.top().key) {
        heap_.pop();
        heap_.push({key, y});
      }
      items_dirty_ = true;
    }
  }

  const std::vector<Point<D>>& reservoir_items() const {
    if (items_dirty_) {
      items_.clear();
      auto copy = heap_;
      while (!copy.empty()) {
        items_.push_back(copy.top().position);
        copy.pop();
      }
      items_dirty_ = false;
    }
    return items_;
  }

  void newton() {
    c_ = center_from_moments<D>(W_, moments_);
    for (int a = 0; a < D; ++a)
      for (int b = 0; b < D; ++b)
        H_[a][b] = W_.is_zero() ? (a == b ? 1.0 : 0.0)
                                : W_.hessian_polynomial(a, b).convolve(c_, moments_) / moments_.mass();
    last_gap_ = norm<D>(x_ - c_);
    ++newton_count_;
  }

  // The center moves by dc = -(dt / t) H^{-1} grad W(c - X) when the atom X is added.
  void update_center(const Point<D>& added) {
    const double gap = norm<D>(x_ - c_);
    if (steps_ % static_cast<std::size_t>(cfg_.center_every) == 0) {
      newton();
      return;
    }
    if (std::abs(gap - last_gap_) > cfg_.center_jump) {
      ++jump_count_;
      newton();
      return;
    }
    if (W_.is_zero()) {
      c_ = moments_.mean();
    } else {
      const Point<D> g = W_.gradient(c_ - added);
      c_ = c_ - (cfg_.dt / t_) * solve<D>(H_, g);
    }
    last_gap_ = norm<D>(x_ - c_);
  }

  void bootstrap(const Point<D>& x0) {
    const double delta = std::min(picard_horizon<D>(W_, V_, x0), cfg_.t_end);
    std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(delta / cfg_.dt)));
    std::vector<Point<D>> inc;
    Point<D> b = zero_point<D>();
    for (std::size_t k = 0; k < n; ++k) {
      const Point<D> dB = draw_increment();
      b = b + cfg_.noise_scale * dB;
      if (k > 0 && norm<D>(b) > 0.5) break;  // keep the noise in the half-unit ball
      inc.push_back(dB);
    }
    const PicardResult<D> pr = picard_bootstrap<D>(W_, V_, x0, inc, cfg_.dt, cfg_.noise_scale);
    bootstrap_ = pr.path;
    for (std::size_t k = 0; k + 1 < pr.path.size(); ++k) add_atom(pr.path[k], cfg_.dt);
    steps_ = pr.path.size() - 1;
    base_time_ = 0.0;
    t_ = steps_ * cfg_.dt;
    x_ = pr.path.back();
  }

  Potential<D> W_;
  OptionalPotential<D> V_;
  SimConfig cfg_;
  NoiseStream noise_;
  NoiseStream noise_reservoir_{cfg_.seed, cfg_.replica, StreamTag::Auxiliary, 7};
  MomentSet<D> moments_;
  std::vector<Atom<D>> history_;
  std::priority_queue<Keyed, std::vector<Keyed>, std::greater<Keyed>> heap_;
  mutable std::vector<Point<D>> items_;
  mutable bool items_dirty_ = true;
  std::vector<Point<D>> bootstrap_;
  Point<D> x_{};
  Point<D> c_{};
  Matrix<D> H_{};
  double t_ = 0.0;
  double base_time_ = cfg_.t_start;
  double last_gap_ = 0.0;
  std::size_t steps_ = 0;
  std::size_t newton_count_ = 0;
  std::size_t jump_count_ = 0;
};

template <int D>
struct TrajectoryRecord {
  double dt = 0.0;
  double t_start = 0.0;
  double initial_weight = 0.0;  // mass of the atom at x0 standing for [0, t_start)
  int record_every = 1;
  std::vector<double> sample_times;
  std::vector<Point<D>> positions;
  std::vector<Point<D>> centers;
  std::vector<double> z;  // OU comparison process, when simulated
  MomentSet<D> final_moments;
  std::vector<double> L_values;  // max |X_t - c_{T_n}| over schedule windows
  std::vector<double> L_times;   // the T_n of each window
  std::size_t newton_count = 0;
  std::size_t jump_count = 0;
  std::size_t reflections = 0;

  bool full() const { return record_every == 1; }

  // Normalized occupation measure on [0, t].
  ParticleMeasure<D> occupation(double t) const {
    return collect(0.0, t, true);
  }

  // Normalized occupation measure of the window [t1, t2].
  ParticleMeasure<D> window(double t1, double t2) const {
    detail::require(t2 > t1, "window needs t2 > t1");
    return collect(t1, t2, false);
  }

  // Unnormalized raw moments of the occupation measure on [0, t].
  MomentSet<D> moments_until(double t, int degree) const {
    MomentSet<D> ms(degree);
    const double eps = 1e-9 * dt;
    if (initial_weight > 0.0) ms.accumulate(positions.front(), initial_weight);
    for (std::size_t k = 0; k + 1 < positions.size(); ++k) {
      if (sample_times[k] + dt > t + eps) break;
      ms.accumulate(positions[k], dt);
    }
    return ms;
  }

  // Index of the last sample at or before t.
  std::size_t index_at(double t) const {
    auto it = std::upper_bound(sample_times.begin(), sample_times.end(), t + 1e-9 * dt);
    return it == sample_times.begin() ? 0 : static_cast<std::size_t>(it - sample_times.begin()) - 1;
  }

 private:
  ParticleMeasure<D> collect(double t1, double t2, bool with_initial) const {
    detail::require(full(), "occupation measures need an unthinned record");
    const double eps = 1e-9 * dt;
    ParticleMeasure<D> m;
    if (with_initial && initial_weight > 0.0) m.add(positions.front(), initial_weight);
    for (std::size_t k = 0; k + 1 < positions.size(); ++k) {
      if (sample_times[k] < t1 - eps) continue;
      if (sample_times[k] + dt > t2 + eps) break;
      m.add(positions[k], dt);
    }
    if (m.empty()) throw InvalidInput("no occupation atoms in the requested range");
    return m.normalized();
  }
};

namespace detail {

template <int D>
void record_sample(TrajectoryRecord<D>& r, const SelfInteractingSde<D>& s) {
  r.sample_times.push_back(s.time());
  r.positions.push_back(s.position());
  r.centers.push_back(s.center());
}

template <int D>
void fill_L_values(TrajectoryRecord<D>& r, const Schedule& sch) {
  for (const auto& k : schedule_times(sch)) {
    const double t0 = k.T, t1 = k.T + k.dT;
    if (t0 < r.sample_times.front() || t1 > r.sample_times.back()) continue;
    const std::size_t i0 = r.index_at(t0), i1 = r.index_at(t1);
    double L = 0.0;
    for (std::size_t i = i0; i <= i1; ++i) L = std::max(L, norm<D>(r.positions[i] - r.centers[i0]));
    r.L_values.push_back(L);
    r.L_times.push_back(t0);
  }
}

template <int D>
TrajectoryRecord<D> start_record(const SelfInteractingSde<D>& s) {
  TrajectoryRecord<D> r;
  const auto& cfg = s.config();
  r.dt = cfg.dt;
  r.t_start = cfg.t_start;
  r.initial_weight = cfg.t_start;
  r.record_every = cfg.record_every;
  const auto& boot = s.bootstrap_path();
  for (std::size_t k = 0; k + 1 < boot.size(); ++k) {
    if (k % static_cast<std::size_t>(cfg.record_every) != 0) continue;
    r.sample_times.push_back(k * cfg.dt);
    r.positions.push_back(boot[k]);
    r.centers.push_back(s.center());  // centers are not tracked inside the bootstrap
  }
  if (s.steps() % static_cast<std::size_t>(cfg.record_every) == 0) record_sample(r, s);
  return r;
}

}  // namespace detail

// Full path from x0 over [t_start, t_end] (Picard bootstrap first when t_start = 0).
template <int D>
TrajectoryRecord<D> simulate(const Potential<D>& W, const OptionalPotential<D>& V,
                             const Point<D>& x0, const SimConfig& cfg) {
  SelfInteractingSde<D> s(W, V, cfg, x0);
  TrajectoryRecord<D> r = detail::start_record(s);
  const std::size_t total = cfg.t_start > 0.0 ? cfg.steps()
                                              : static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
  while (s.steps() < total) {
    s.advance();
    if (s.steps() % static_cast<std::size_t>(cfg.record_every) == 0) detail::record_sample(r, s);
  }
  r.final_moments = s.moments();
  r.newton_count = s.newton_count();
  r.jump_count = s.jump_count();
  if (cfg.schedule) detail::fill_L_values(r, *cfg.schedule);
  return r;
}

// Blending weight: 0 on [0, 1/4], 1 on [1, inf), quintic smoothstep between.
inline double blend_alpha(double r) {
  if (r <= 0.25) return 0.0;
  if (r >= 1.0) return 1.0;
  const double s = (r - 0.25) / 0.75;
  return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

struct OuReport {
  std::size_t steps_checked = 0;
  std::size_t violations = 0;
  double violation_fraction = 0.0;
  double eps_disc = 0.0;
  std::size_t reflections = 0;  // at z_min = 1e-6
};

template <int D>
struct OuResult {
  TrajectoryRecord<D> record;  // z holds the comparison process
  OuReport report;
};

// Simulates X with the comparison process
//   dZ = s dgamma - (C_W Z / 2 - (3d - 1) / Z) dt,
//   dgamma = alpha(|X - c|) <(X - c)/|X - c|, dB> + sqrt(1 - alpha^2) dbeta,
// sharing dB with X, and counts post-burn-in steps with |X - c| > 2 + Z + eps.
template <int D>
OuResult<D> ou_domination(const Potential<D>& W, const SimConfig& cfg, const Point<D>& x0,
                          double burn_in = 10.0, std::optional<double> eps_disc = std::nullopt) {
  const double cw = W.convexity_constant();
  detail::require(cw > 0.0, "OU comparison needs a uniformly convex W");
  const double eps = eps_disc ? *eps_disc : 0.05 * std::sqrt(cfg.dt / 1e-3);
  SelfInteractingSde<D> s(W, std::nullopt, cfg, x0);
  NoiseStream aux(cfg.seed, cfg.replica, StreamTag::Auxiliary);
  OuResult<D> out;
  out.record = detail::start_record(s);
  const double z_min = 1e-6;
  double z = std::max(norm<D>(s.position() - s.center()), z_min);
  out.record.z.assign(out.record.sample_times.size(), z);
  const std::size_t total = cfg.t_start > 0.0 ? cfg.steps()
                                              : static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
  OuReport& rep = out.report;
  rep.eps_disc = eps;
  while (s.steps() < total) {
    const Point<D> dB = s.draw_increment();
    const Point<D> rel = s.position() - s.center();
    const double r = norm<D>(rel);
    const double a = blend_alpha(r);
    const double proj = r > 0.0 ? dot<D>(rel, dB) / r : 0.0;
    const double dgamma = a * proj + std::sqrt(std::max(0.0, 1.0 - a * a)) * std::sqrt(cfg.dt) * aux.normal();
    // (3d - 1)/Z is taken implicitly: the positive root of the quadratic in Z'.
    const double zz = z + cfg.noise_scale * dgamma - 0.5 * cw * z * cfg.dt;
    z = 0.5 * (zz + std::sqrt(zz * zz + 4.0 * (3.0 * D - 1.0) * cfg.dt));
    if (z < z_min) {
      z = std::max(2.0 * z_min - z, z_min);
      ++rep.reflections;
    }
    s.step(dB);
    if (s.time() > burn_in) {
      ++rep.steps_checked;
      if (norm<D>(s.position() - s.center()) > 2.0 + z + eps) ++rep.violations;
    }
    if (s.steps() % static_cast<std::size_t>(cfg.record_every) == 0) {
      detail::record_sample(out.record, s);
      out.record.z.push_back(z);
    }
  }
  rep.violation_fraction = rep.steps_checked ? static_cast<double>(rep.violations) / rep.steps_checked : 0.0;
  out.record.final_moments = s.moments();
  out.record.reflections = rep.reflections;
  return out;
}

template <int D>
struct CoupledWindow {
  double T0 = 0.0, T1 = 0.0;
  Point<D> c0{};
  std::vector<double> times;
  std::vector<Point<D>> x, y;
  std::vector<double> bound;  // e^{-C_W (t - T0)} |X_T0 - Y_T0| + dT P(2 L) / (T0 C_W)
  double L = 0.0;
  double max_excess = 0.0;    // max over the window of |X - Y| - bound
};

namespace detail {

// One draw from Pi(mu) restricted to the unit ball at c, via a fine grid.
template <int D>
Point<D> sample_pi_in_ball(const Potential<D>& W, const OptionalPotential<D>& V,
                           const MomentSet<D>& ms, const Point<D>& c, NoiseStream& rng) {
  const int cells = D == 1 ? 512 : 96;
  const GridGeometry<D> g = GridGeometry<D>::centered(c, 1.0, cells);
  std::vector<double> u(g.size());
  double umin = INFINITY;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Point<D> x = g.cell_center(i);
    u[i] = norm<D>(x - c) > 1.0 ? INFINITY
                                : W.polynomial().convolve(x, ms) / ms.mass() + (V ? V->value(x) : 0.0);
    umin = std::min(umin, u[i]);
  }
  std::vector<double> cdf(u.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    acc += std::isfinite(u[i]) ? std::exp(-(u[i] - umin)) : 0.0;
    cdf[i] = acc;
  }
  const double target = rng.uniform() * acc;
  const std::size_t k = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin());
  Point<D> x = g.cell_center(std::min(k, u.size() - 1));
  for (int d = 0; d < D; ++d) x[d] += (rng.uniform() - 0.5) * g.step[d];
  return x;
}

}  // namespace detail

// Continues the process from a snapshot at T0 = snapshot.time() up to T1 together
// with Y driven by the frozen measure mu_{T0}, both on the same increments.
template <int D>
CoupledWindow<D> coupled_frozen(const SelfInteractingSde<D>& snapshot, double T1, std::uint64_t seed,
                                std::optional<Point<D>> y_start = std::nullopt) {
  const auto& W = snapshot.interaction();
  const auto& V = snapshot.external();
  const auto& cfg = snapshot.config();
  detail::require(T1 > snapshot.time(), "window must end after the snapshot");
  const double cw = W.convexity_constant();
  detail::require(cw > 0.0, "frozen coupling needs a uniformly convex W");

  SelfInteractingSde<D> x = snapshot;
  const MomentSet<D> frozen = snapshot.moments();
  NoiseStream rng(seed, cfg.replica, StreamTag::Coupling, snapshot.steps());
  CoupledWindow<D> w;
  w.T0 = snapshot.time();
  w.T1 = T1;
  w.c0 = snapshot.center();
  Point<D> y = y_start ? *y_start : detail::sample_pi_in_ball<D>(W, V, frozen, w.c0, rng);

  auto frozen_drift = [&](const Point<D>& p) {
    Point<D> g = zero_point<D>();
    if (!W.is_zero())
      for (int a = 0; a < D; ++a) g[a] = W.gradient_polynomial(a).convolve(p, frozen) / frozen.mass();
    if (V) g = g + V->gradient(p);
    return -1.0 * g;
  };

  w.times.push_back(x.time());
  w.x.push_back(x.position());
  w.y.push_back(y);
  const std::size_t n = static_cast<std::size_t>(std::llround((T1 - w.T0) / cfg.dt));
  for (std::size_t k = 0; k < n; ++k) {
    const Point<D> dB = rng.increment<D>(cfg.dt);
    const Point<D> ny = y + cfg.dt * frozen_drift(y) + cfg.noise_scale * dB;
    x.step(dB);
    y = ny;
    w.times.push_back(x.time());
    w.x.push_back(x.position());
    w.y.push_back(y);
  }
  for (const auto& p : w.x) w.L = std::max(w.L, norm<D>(p - w.c0));
  const double d0 = norm<D>(w.x.front() - w.y.front());
  const double slack = (w.T1 - w.T0) * W.bound()(2.0 * w.L) / (w.T0 * cw);
  for (std::size_t k = 0; k < w.times.size(); ++k) {
    const double b = std::exp(-cw * (w.times[k] - w.T0)) * d0 + slack;
    w.bound.push_back(b);
    w.max_excess = std::max(w.max_excess, norm<D>(w.x[k] - w.y[k]) - b);
  }
  if (w.times.size() == 1) w.max_excess = norm<D>(w.x[0] - w.y[0]) - w.bound[0];
  return w;
}

struct Appendix2Path {
  std::vector<double> times;
  std::vector<double> y;
  std::vector<double> c;
};

// The reduced pair dY = s dB - (Y + (Y + 1)/t) dt, dc = (Y + 1)/t dt from
// t_start (Y = -1, c = 1: the process starts at 0 with mu = delta_0), sampled
// at samples_per_decade logarithmic times.
inline Appendix2Path appendix2_system(double t_end, double dt, std::uint64_t seed,
                                      std::uint64_t replica = 0, double noise_scale = 1.0,
                                      double t_start = 1.0, int samples_per_decade = 50) {
  detail::require(t_start > 0.0, "the reduced system is defined for t > 0");
  detail::require(t_end > t_start, "t_end must exceed t_start");
  detail::require(dt > 0.0 && dt <= 0.01, "dt must lie in (0, 0.01]");
  NoiseStream rng(seed, replica, StreamTag::Main);
  Appendix2Path p;
  double y = -1.0, c = 1.0;
  const std::size_t n = static_cast<std::size_t>(std::llround((t_end - t_start) / dt));
  const double sdt = noise_scale * std::sqrt(dt);
  double next_sample = t_start;
  const double factor = std::pow(10.0, 1.0 / samples_per_decade);
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = t_start + k * dt;
    if (t >= next_sample - 1e-9 * dt || k == n) {
      p.times.push_back(t);
      p.y.push_back(y);
      p.c.push_back(c);
      while (next_sample <= t + 1e-9 * dt) next_sample *= factor;
    }
    if (k == n) break;
    const double cdot = (y + 1.0) / t;
    y += -(y + cdot) * dt + sdt * rng.normal();
    c += cdot * dt;
    if (!std::isfinite(y)) throw NumericFailure("reduced system diverged");
  }
  return p;
}

}  // namespace selfint
