#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fit.hpp"
#include "flow.hpp"
#include "gibbs.hpp"
#include "measure.hpp"
#include "sde.hpp"
#include "transport.hpp"

namespace selfint {

struct SeriesPoint {
  std::string label;
  double time;
  double value;
};

struct FitRecord {
  std::string model;
  std::map<std::string, double> parameters;
  double residual = 0.0;
};

struct Verdict {
  std::string criterion;
  bool pass = false;
  double margin = 0.0;  // positive when passing with room
};

struct DiagnosticsReport {
  std::string experiment;
  std::vector<SeriesPoint> series;
  std::vector<FitRecord> fits;
  std::vector<Verdict> verdicts;

  bool pass() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
  }

  const FitRecord* fit(const std::string& model) const {
    for (const auto& f : fits)
      if (f.model == model) return &f;
    return nullptr;
  }

  const Verdict* verdict(const std::string& criterion) const {
    for (const auto& v : verdicts)
      if (v.criterion == criterion) return &v;
    return nullptr;
  }

  std::vector<double> values(const std::string& label) const {
    std::vector<double> v;
    for (const auto& p : series)
      if (p.label == label) v.push_back(p.value);
    return v;
  }
};

// Schedule windows [T_n, T_n+1] lying inside [lo, hi].
inline std::vector<ScheduleKnot> windows_within(const Schedule& s, double lo, double hi) {
  std::vector<ScheduleKnot> out;
  for (int n = s.n_start;; ++n) {
    const double T = s.time(n), T1 = s.time(n + 1);
    if (T1 > hi + 1e-9) break;
    if (T >= lo - 1e-9) out.push_back({n, T, T1 - T});
    if (n > 100000000) break;
  }
  return out;
}

// Common-centered T_P between the window occupation measure and Pi of the
// occupation measure up to the window start, per schedule window.
template <int D>
DiagnosticsReport one_step_error(const Potential<D>& W, const TrajectoryRecord<D>& rec,
                                 const Schedule& schedule, int n_min = 20, int n_max = 200) {
  static_assert(D == 1, "T_P is available in one dimension only");
  DiagnosticsReport r;
  r.experiment = "one_step_error";
  const int deg = std::max(1, W.degree());
  std::vector<double> x, y;
  for (const auto& k : windows_within(schedule, rec.sample_times.front(), rec.sample_times.back())) {
    if (k.n < n_min || k.n > n_max) continue;
    const MomentSet<D> ms = rec.moments_until(k.T, deg);
    const Point<D> c = rec.centers[rec.index_at(k.T)];
    const GibbsResult<D> pi = apply_pi<D>(W, std::nullopt, ms, GridGeometry<D>::centered(c, 8.0, 1024));
    const ParticleMeasure<D> win = rec.window(k.T, k.T + k.dT);
    const double e = centered_distance<D>(W, win, pi.density, DistanceKind::Tp, c).value;
    r.series.push_back({"one_step_error", k.T, e});
    r.series.push_back({"window_length", k.T, k.dT});
    if (e > 0.0) {
      x.push_back(std::log(k.dT));
      y.push_back(std::log(e));
    }
  }
  if (x.size() >= 3) {
    const LinearFit f = least_squares(x, y);
    const double beta = std::min(8.0 * W.convexity_constant(), 1.0 / (5.0 * D));
    r.fits.push_back({"log_error_vs_log_window", {{"slope", f.slope}, {"intercept", f.intercept},
                                                  {"slope_stderr", f.slope_stderr}, {"beta_reference", -beta}},
                      f.residual_rms});
    r.verdicts.push_back({"one_step_error_slope_negative", f.slope < 0.0, -f.slope});
  }
  bool positive = true;
  for (const auto& p : r.series)
    if (p.label == "one_step_error" && !(p.value > 0.0)) positive = false;
  r.verdicts.push_back({"one_step_error_positive", positive, 0.0});
  return r;
}

struct CenterConvergenceOptions {
  double tail_threshold = 0.5;
  double oscillation_ratio = 5.0;
};

// Partial sums of |c_{T_n+1} - c_{T_n}|, window oscillations max |c_t - c_{T_n}|,
// and two verdicts: the tail sum over the last half of the windows stays below
// a threshold, and the last-decade oscillation is below the first-decade one / ratio.
template <int D>
DiagnosticsReport center_convergence(const std::vector<double>& times,
                                     const std::vector<Point<D>>& centers, const Schedule& schedule,
                                     CenterConvergenceOptions opt = {}) {
  detail::require(times.size() == centers.size() && times.size() >= 2, "need a center track");
  DiagnosticsReport r;
  r.experiment = "center_convergence";
  auto idx = [&](double t) {
    auto it = std::upper_bound(times.begin(), times.end(), t + 1e-9);
    return it == times.begin() ? std::size_t{0} : static_cast<std::size_t>(it - times.begin()) - 1;
  };
  const auto wins = windows_within(schedule, times.front(), times.back());
  detail::require(wins.size() >= 4, "center track covers too few schedule windows");
  std::vector<double> incr, osc, T;
  double partial = 0.0;
  for (const auto& k : wins) {
    const std::size_t i0 = idx(k.T), i1 = idx(k.T + k.dT);
    const double d = norm<D>(centers[i1] - centers[i0]);
    double o = 0.0;
    for (std::size_t i = i0; i <= i1; ++i) o = std::max(o, norm<D>(centers[i] - centers[i0]));
    partial += d;
    incr.push_back(d);
    osc.push_back(o);
    T.push_back(k.T);
    r.series.push_back({"partial_sum", k.T, partial});
    r.series.push_back({"oscillation", k.T, o});
  }
  double tail = 0.0;
  for (std::size_t i = incr.size() / 2; i < incr.size(); ++i) tail += incr[i];
  r.fits.push_back({"tail_sum", {{"tail_sum", tail}, {"total", partial}}, 0.0});
  r.verdicts.push_back({"center_cauchy", tail < opt.tail_threshold, opt.tail_threshold - tail});

  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < T.size(); ++i) {
    if (T[i] <= 10.0 * T.front()) first = std::max(first, osc[i]);
    if (T[i] >= T.back() / 10.0) last = std::max(last, osc[i]);
  }
  r.fits.push_back({"oscillation_decades", {{"first_decade_max", first}, {"last_decade_max", last}}, 0.0});
  r.verdicts.push_back({"center_oscillation_decay", last * opt.oscillation_ratio < first || first == 0.0,
                        first / opt.oscillation_ratio - last});
  return r;
}

template <int D>
DiagnosticsReport center_convergence(const TrajectoryRecord<D>& rec, const Schedule& schedule,
                                     CenterConvergenceOptions opt = {}) {
  return center_convergence<D>(rec.sample_times, rec.centers, schedule, opt);
}

struct ErgodicityOptions {
  double t_first = 10.0;
  int per_decade = 10;
  double threshold = 0.1;
  std::size_t required = 7;
  std::uint64_t bootstrap_seed = 1;
};

// W2 between each replica's self-centered occupation measure and rho_inf at
// logarithmic checkpoints, a pooled fit of log W2 ~ log C - a (log t)^{1/(k+1)},
// and verdicts on the final distances and the sign of a.
template <int D>
DiagnosticsReport ergodicity_check(const Potential<D>& W, const std::vector<TrajectoryRecord<D>>& replicas,
                                   const GridDensity<D>& rho_inf, ErgodicityOptions opt = {}) {
  static_assert(D == 1, "grid W2 is available in one dimension only");
  detail::require(!replicas.empty(), "ergodicity check needs replicas");
  DiagnosticsReport r;
  r.experiment = "ergodicity";
  double t_end = INFINITY;
  for (const auto& rec : replicas) t_end = std::min(t_end, rec.sample_times.back());
  std::vector<double> checkpoints;
  for (double t = opt.t_first; t < t_end * (1.0 - 1e-12); t *= std::pow(10.0, 1.0 / opt.per_decade))
    checkpoints.push_back(t);
  checkpoints.push_back(t_end);

  const int k = W.bound().degree;
  std::vector<double> x, y;
  std::size_t good = 0;
  double worst_final = 0.0;
  std::vector<double> finals;
  for (std::size_t i = 0; i < replicas.size(); ++i) {
    const auto& rec = replicas[i];
    double last = 0.0;
    for (double t : checkpoints) {
      const ParticleMeasure<D> m = rec.occupation(t);
      last = centered_distance<D>(W, m, rho_inf, DistanceKind::W2).value;
      r.series.push_back({"w2_replica_" + std::to_string(i), t, last});
      if (last > 0.0) {
        x.push_back(std::pow(std::log(t), 1.0 / (k + 1)));
        y.push_back(std::log(last));
      }
    }
    finals.push_back(last);
    r.series.push_back({"w2_final", t_end, last});
    if (last <= opt.threshold) ++good;
    worst_final = std::max(worst_final, last);
  }
  const LinearFit f = least_squares(x, y);
  const SlopeBand band = bootstrap_slope(x, y, 1000, 0.05, opt.bootstrap_seed);
  r.fits.push_back({"log_w2_vs_loglog", {{"a", -f.slope}, {"a_lower", -band.upper}, {"a_upper", -band.lower},
                                         {"log_C", f.intercept}, {"k", static_cast<double>(k)}},
                    f.residual_rms});
  std::sort(finals.begin(), finals.end());
  const double kth = finals[std::min(finals.size(), opt.required) - 1];
  r.verdicts.push_back({"ergodicity_w2", good >= opt.required, opt.threshold - kth});
  r.verdicts.push_back({"decay_exponent_positive", -band.upper > 0.0, -band.upper});
  return r;
}

// Replica-averaged c_t of the reduced non-symmetric system regressed on log t
// over [t_lo, t_hi]; the verdict asks for a slope in [slope_lo, slope_hi].
inline DiagnosticsReport appendix2_report(const std::vector<Appendix2Path>& paths, double t_lo,
                                          double t_hi, double slope_lo = 0.9, double slope_hi = 1.1) {
  detail::require(!paths.empty(), "need at least one path");
  const auto& times = paths.front().times;
  for (const auto& p : paths)
    detail::require(p.times == times, "replica paths must share their sample times");
  DiagnosticsReport r;
  r.experiment = "appendix2";
  std::vector<double> x, y;
  for (std::size_t i = 0; i < times.size(); ++i) {
    double c = 0.0;
    for (const auto& p : paths) c += p.c[i];
    c /= static_cast<double>(paths.size());
    r.series.push_back({"c_mean", times[i], c});
    if (times[i] >= t_lo * (1.0 - 1e-12) && times[i] <= t_hi * (1.0 + 1e-12)) {
      x.push_back(std::log(times[i]));
      y.push_back(c);
    }
  }
  detail::require(x.size() >= 3, "too few samples inside the fit range");
  const LinearFit f = least_squares(x, y);
  r.fits.push_back({"c_vs_log_t", {{"slope", f.slope}, {"intercept", f.intercept}, {"slope_stderr", f.slope_stderr}},
                    f.residual_rms});
  r.verdicts.push_back({"appendix2_slope", f.slope >= slope_lo && f.slope <= slope_hi,
                        std::min(f.slope - slope_lo, slope_hi - f.slope)});
  return r;
}

}  // namespace selfint
