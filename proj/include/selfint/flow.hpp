#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "energy.hpp"
#include "errors.hpp"
#include "fit.hpp"
#include "gibbs.hpp"
#include "measure.hpp"
#include "transport.hpp"

namespace selfint {

// T_n = n^exponent for n_start <= n <= n_end.
struct Schedule {
  double exponent = 1.5;
  int n_start = 1;
  int n_end = 400;

  void validate() const {
    detail::require(exponent > 0.0, "schedule exponent must be > 0");
    detail::require(n_start >= 1, "schedule must start at n >= 1");
    detail::require(n_end > n_start, "schedule needs n_end > n_start");
  }

  double time(int n) const { return std::pow(static_cast<double>(n), exponent); }
};

struct ScheduleKnot {
  int n;
  double T;
  double dT;  // T_{n+1} - T_n
};

inline std::vector<ScheduleKnot> schedule_times(const Schedule& s) {
  s.validate();
  std::vector<ScheduleKnot> out;
  out.reserve(static_cast<std::size_t>(s.n_end - s.n_start + 1));
  for (int n = s.n_start; n <= s.n_end; ++n) out.push_back({n, s.time(n), s.time(n + 1) - s.time(n)});
  return out;
}

template <int D>
struct FlowState {
  int n = 0;
  double time = 0.0;
  GridDensity<D> density;
  Point<D> center{};
  EnergyBreakdown free_energy;
  std::optional<double> relative_free_energy;  // F(mu | rho_inf)
  double step_distance = 0.0;                  // to the previous state
  double phi_gap = 0.0;                        // phi_mu(mu) - phi_mu(Pi(mu))
};

template <int D>
struct FlowOptions {
  OptionalPotential<D> V;
  std::optional<GridDensity<D>> rho_inf;
  double recenter_fraction = 0.1;
};

namespace detail {

template <int D>
double density_distance(const Potential<D>& W, const GridDensity<D>& a, const GridDensity<D>& b) {
  if constexpr (D == 1) {
    return tp_distance_1d(W.bound(), a, b).value;
  } else {
    const GridDensity<D> bb = resample<D>(b, a.geometry());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - bb[i]);
    return s * a.cell_volume();
  }
}

template <int D>
FlowState<D> make_state(const Potential<D>& W, const FlowOptions<D>& opt, int n, double time,
                        GridDensity<D> density) {
  FlowState<D> s;
  s.n = n;
  s.time = time;
  s.center = center<D>(W, density);
  s.free_energy = free_energy<D>(W, opt.V, density);
  if (opt.rho_inf) {
    const double ref = free_energy<D>(W, opt.V, *opt.rho_inf).total;
    s.free_energy.relative_to = ref;
    s.relative_free_energy = s.free_energy.total - ref;
  }
  s.density = std::move(density);
  return s;
}

}  // namespace detail

// One Euler step mu <- mu + lambda (Pi(mu) - mu), lambda = (t' - t) / t'.
template <int D>
FlowState<D> euler_step(const Potential<D>& W, const FlowState<D>& state, double next_time,
                        const FlowOptions<D>& opt = {}) {
  const double lambda = (next_time - state.time) / next_time;
  if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidInput("Euler step needs lambda in (0, 1)");
  const GibbsResult<D> pi = apply_pi<D>(W, opt.V, state.density, state.density.geometry());
  const double gap = phi<D>(W, opt.V, state.density, state.density) -
                     phi<D>(W, opt.V, state.density, pi.density);
  GridDensity<D> next = mix<D>(state.density, pi.density, lambda).normalized();

  const Point<D> c = center<D>(W, next);
  const auto& g = next.geometry();
  bool move = false;
  for (int d = 0; d < D; ++d)
    move = move || std::abs(c[d] - g.center()[d]) > opt.recenter_fraction * g.half_width(d);
  if (move) next = shift_window<D>(next, c);

  FlowState<D> out = detail::make_state<D>(W, opt, state.n + 1, next_time, std::move(next));
  out.step_distance = detail::density_distance<D>(W, state.density, out.density);
  out.phi_gap = gap;
  return out;
}

// Initial state at T_{n_start}.
template <int D>
FlowState<D> initial_state(const Potential<D>& W, const GridDensity<D>& init, const Schedule& s,
                           const FlowOptions<D>& opt = {}) {
  detail::require(std::abs(init.mass() - 1.0) <= 1e-9, "flow needs a normalized initial density");
  return detail::make_state<D>(W, opt, s.n_start, s.time(s.n_start), init.normalized());
}

// States at T_{n_start}, ..., T_{n_end}. The phi gap of state n is the one
// consumed by the step leaving it; the last state gets its own gap computed.
template <int D>
std::vector<FlowState<D>> run_flow(const Potential<D>& W, const GridDensity<D>& init,
                                   const Schedule& s, const FlowOptions<D>& opt = {},
                                   const std::function<void(const FlowState<D>&)>& observer = {}) {
  s.validate();
  std::vector<FlowState<D>> states;
  states.reserve(static_cast<std::size_t>(s.n_end - s.n_start + 1));
  states.push_back(initial_state<D>(W, init, s, opt));
  for (int n = s.n_start; n < s.n_end; ++n) {
    FlowState<D> next = euler_step<D>(W, states.back(), s.time(n + 1), opt);
    states.back().phi_gap = next.phi_gap;
    if (observer) observer(states.back());
    states.push_back(std::move(next));
  }
  auto& last = states.back();
  const GibbsResult<D> pi = apply_pi<D>(W, opt.V, last.density, last.density.geometry());
  last.phi_gap = phi<D>(W, opt.V, last.density, last.density) - phi<D>(W, opt.V, last.density, pi.density);
  if (observer) observer(last);
  return states;
}

// Default smoothing radius for feeding empirical measures into the flow.
inline double default_smoothing_radius(double T) { return std::clamp(1.0 / T, 1e-3, 0.5); }

// Largest C7 such that g(F_n) <= phi gap at every recorded state with F_n > 0.
template <int D>
double fit_rate_constant(const std::vector<FlowState<D>>& states, RateParams base = {}) {
  auto ok = [&](double c7) {
    RateParams p = base;
    p.C7 = c7;
    for (const auto& st : states) {
      if (!st.relative_free_energy || *st.relative_free_energy <= 0.0) continue;
      if (rate_function(p, *st.relative_free_energy) > st.phi_gap) return false;
    }
    return true;
  };
  double lo = 1e-8, hi = 1e8;
  if (!ok(lo)) return lo;
  if (ok(hi)) return hi;
  for (int i = 0; i < 200 && hi / lo > 1.0 + 1e-12; ++i) {
    const double mid = std::sqrt(lo * hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

struct EnvelopeReport {
  double fraction_satisfied = 0.0;
  std::size_t steps = 0;
  double C7 = 0.0;
  double fitted_a = 0.0;  // F ~ C exp(-a (log t)^{1/(k+1)})
  double a_lower = 0.0;   // 5% residual-bootstrap quantile
  double a_upper = 0.0;
  double log_C = 0.0;
  double fit_residual = 0.0;
  std::vector<EnvelopeSample> envelope;
};

// Overlays y' = -g(y)/(2t), y(T_first) = max(F_first, 1), on the recorded
// relative free energies, and fits the decay shape of F.
template <int D>
EnvelopeReport envelope_compare(const std::vector<FlowState<D>>& states, const RateParams& params,
                                std::uint64_t bootstrap_seed = 1) {
  detail::require(!states.empty(), "envelope comparison needs states");
  for (const auto& s : states)
    detail::require(s.relative_free_energy.has_value(), "states must carry relative free energies");
  EnvelopeReport r;
  r.C7 = params.C7;
  r.steps = states.size();
  std::vector<double> times;
  for (const auto& s : states) times.push_back(s.time);
  const double y0 = std::max(*states.front().relative_free_energy, 1.0);
  r.envelope = energy_envelope(params, y0, states.front().time, times);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < states.size(); ++i)
    if (*states[i].relative_free_energy <= r.envelope[i].y + 1e-12) ++ok;
  r.fraction_satisfied = static_cast<double>(ok) / states.size();

  std::vector<double> x, y;
  for (const auto& s : states) {
    const double F = *s.relative_free_energy;
    if (F <= 1e-13 || s.time <= 1.0) continue;
    x.push_back(std::pow(std::log(s.time), 1.0 / (params.k + 1)));
    y.push_back(std::log(F));
  }
  if (x.size() >= 3) {
    const LinearFit f = least_squares(x, y);
    r.fitted_a = -f.slope;
    r.log_C = f.intercept;
    r.fit_residual = f.residual_rms;
    const SlopeBand band = bootstrap_slope(x, y, 1000, 0.05, bootstrap_seed);
    r.a_lower = -band.upper;
    r.a_upper = -band.lower;
  }
  return r;
}

}  // namespace selfint
