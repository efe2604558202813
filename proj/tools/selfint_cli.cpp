#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "selfint/io.hpp"
#include "selfint/selfint.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace selfint;

namespace {

struct KeySpec {
  std::string key;
  std::string type;  // real, int, bool, string, list, enum:a|b; a trailing '?' allows empty
  std::string def;
  std::string doc;
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> s = {
      {"experiment.name", "string", "selfint", "label copied into reports"},
      {"experiment.dimension", "enum:1|2", "1", "spatial dimension d"},

      {"potential.kind", "enum:quadratic-symmetric|quadratic-shifted|even-polynomial", "quadratic-symmetric",
       "interaction family"},
      {"potential.coefficients", "list", "1",
       "quadratic kinds: the single factor c; even-polynomial: c_0, c_1, ... multiplying |x|^i"},
      {"potential.convexity_constant", "real?", "", "C_W; empty derives it from the coefficients"},
      {"potential.symmetric", "bool?", "", "claimed symmetry; empty derives it from the kind"},
      {"potential.bound_degree", "int?", "", "k of P(r) = A(1 + r^k); empty picks a valid default"},
      {"potential.bound_scale", "real?", "", "A of P(r) = A(1 + r^k); empty picks a valid default"},

      {"external.coefficients", "list?", "", "separable V(x) = sum_axis sum_i c_i x_axis^i; empty means no V"},

      {"run.seed", "int", "1", "master seed; replica r uses stream (seed, r)"},
      {"run.replicas", "int", "1", "independent replicas for simulate, diagnose and appendix2"},

      {"simulation.dt", "real", "0.01", "Euler-Maruyama step"},
      {"simulation.t_start", "real", "1", "start time; 0 runs the Picard bootstrap first"},
      {"simulation.t_end", "real", "100", "final time"},
      {"simulation.x0", "list", "0", "initial point, one entry per axis"},
      {"simulation.noise_scale", "real", "1.4142135623730951", "diffusion factor in front of dB"},
      {"simulation.history", "enum:running-moments|full-history|reservoir", "running-moments", "drift evaluation"},
      {"simulation.reservoir_size", "int", "4096", "atoms kept in reservoir mode"},
      {"simulation.record_every", "int", "1", "path thinning; diagnose needs 1"},
      {"simulation.center_every", "int", "10", "steps between Newton recomputations of the center"},
      {"simulation.center_jump", "real", "0.5", "change of |X - c| forcing a Newton recomputation"},
      {"simulation.ou_process", "bool", "false", "also run the coupled comparison process Z"},
      {"simulation.burn_in", "real", "10", "time after which Z domination is checked"},
      {"simulation.eps_disc", "real?", "", "domination slack; empty uses 0.05 sqrt(dt / 0.001)"},

      {"schedule.exponent", "real", "1.5", "T_n = n^exponent"},
      {"schedule.n_start", "int", "1", "first schedule index"},
      {"schedule.n_end", "int", "400", "last schedule index"},

      {"grid.half_width", "real", "8", "grid box half width per axis"},
      {"grid.cells", "int", "1024", "cells per axis"},

      {"fixpoint.init", "enum:uniform|gaussian", "uniform", "initial density"},
      {"fixpoint.init_half_width", "real", "5", "support half width of the uniform start"},
      {"fixpoint.damping", "real", "0.5", "mixing weight of Pi(rho) per iteration"},
      {"fixpoint.tol", "real", "1e-10", "stop when successive iterates are this close"},
      {"fixpoint.max_iter", "int", "1000", "iteration cap"},

      {"flow.start", "list", "0", "atom location smoothed into the initial density"},
      {"flow.smoothing", "real?", "", "smoothing radius h; empty uses clamp(1 / T_start, 1e-3, 0.5)"},
      {"flow.recenter_fraction", "real", "0.1", "shift the grid once the center moves this fraction of the half width"},
      {"flow.C7", "real?", "", "rate constant of g; empty fits the largest admissible value"},
      {"flow.eps0", "real", "0.1353352832366127", "threshold eps_0 of g"},
      {"flow.eps1", "real", "1", "threshold eps_1 of g"},
      {"flow.tp_tolerance", "real", "0.01", "final centered T_P to the stationary density"},
      {"flow.envelope_fraction", "real", "0.95", "required share of steps under the envelope"},

      {"compare.first", "string", "", "measure CSV (density or particle format)"},
      {"compare.second", "string", "", "measure CSV (density or particle format)"},
      {"compare.metric", "enum:tp|w2|both", "both", "distances to report"},
      {"compare.centered", "bool", "true", "translate each measure to its own center first"},

      {"diagnose.input", "string", "", "directory written by simulate; empty simulates afresh"},
      {"diagnose.t_first", "real", "10", "first logarithmic checkpoint"},
      {"diagnose.per_decade", "int", "10", "checkpoints per decade"},
      {"diagnose.w2_threshold", "real", "0.1", "final W2 counted as converged"},
      {"diagnose.required", "int", "7", "replicas that must converge"},
      {"diagnose.tail_threshold", "real", "0.5", "bound on the center increments over the last half of the windows"},
      {"diagnose.oscillation_ratio", "real", "5", "first-decade over last-decade oscillation"},
      {"diagnose.one_step_n_min", "int", "20", "first window of the one-step error fit"},
      {"diagnose.one_step_n_max", "int", "200", "last window of the one-step error fit"},

      {"appendix2.t_end", "real", "100000", "final time"},
      {"appendix2.dt", "real", "0.01", "Euler step"},
      {"appendix2.noise_scale", "real", "1", "diffusion factor"},
      {"appendix2.samples_per_decade", "int", "50", "logarithmic sampling density"},
      {"appendix2.fit_lo", "real", "100", "fit range start"},
      {"appendix2.fit_hi", "real", "100000", "fit range end"},
      {"appendix2.slope_lo", "real", "0.9", "accepted slope range"},
      {"appendix2.slope_hi", "real", "1.1", "accepted slope range"},

      {"certify.radius", "real", "10", "sample box half width"},
      {"certify.samples", "int", "201", "samples per axis"},

      {"output.dir", "string", "out", "artifact directory"},
      {"output.histogram_bins", "int", "200", "occupation histogram bins per axis"},
      {"output.histogram_half_width", "real", "6", "histogram half width around the final center"},
  };
  return s;
}

std::string schema_text() {
  std::ostringstream os;
  os << "; Configuration schema for selfint_cli.\n"
     << "; Every key lives in a [section]; unknown keys are rejected.\n"
     << "; Types: real, int, bool, string, list (comma separated reals), enum:a|b.\n"
     << "; A trailing '?' marks keys that may be left empty.\n";
  std::string section;
  for (const auto& k : schema()) {
    const auto dot = k.key.find('.');
    const std::string sec = k.key.substr(0, dot);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    os << "; " << k.type << ": " << k.doc << '\n' << k.key.substr(dot + 1) << " =" << (k.def.empty() ? "" : " ")
       << k.def << '\n';
  }
  return os.str();
}

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
}

double parse_real(const std::string& s, const std::string& key) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || !std::isfinite(v)) throw InvalidInput(key + ": not a finite real: '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& key) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') throw InvalidInput(key + ": not an integer: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw InvalidInput(key + ": not a boolean: '" + s + "'");
}

std::vector<double> parse_list(const std::string& s, const std::string& key) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(parse_real(trim(item), key));
  return v;
}

const KeySpec& spec_of(const std::string& key) {
  for (const auto& k : schema())
    if (k.key == key) return k;
  throw InvalidInput("unknown configuration key '" + key + "'");
}

void check_value(const KeySpec& k, const std::string& v) {
  std::string type = k.type;
  const bool optional = !type.empty() && type.back() == '?';
  if (optional) type.pop_back();
  if (v.empty()) {
    if (optional || type == "string") return;
    throw InvalidInput(k.key + ": value required");
  }
  if (type == "real") parse_real(v, k.key);
  else if (type == "int") parse_int(v, k.key);
  else if (type == "bool") parse_bool(v, k.key);
  else if (type == "list") parse_list(v, k.key);
  else if (type.rfind("enum:", 0) == 0) {
    std::stringstream ss(type.substr(5));
    std::string opt;
    while (std::getline(ss, opt, '|'))
      if (opt == v) return;
    throw InvalidInput(k.key + ": '" + v + "' is not one of " + type.substr(5));
  }
}

class Config {
 public:
  Config() {
    for (const auto& k : schema()) values_[k.key] = k.def;
  }

  void load_file(const std::string& path) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw InvalidInput("config: " + std::string(e.what()));
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw InvalidInput("config: key '" + section + "' is outside any section");
      for (const auto& [key, node] : body) set(section + "." + key, node.get_value<std::string>());
    }
  }

  void set(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    check_value(spec_of(key), v);
    values_[key] = v;
  }

  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw InvalidInput("override '" + assignment + "' needs section.key=value");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
  }

  const std::string& str(const std::string& key) const { return values_.at(spec_of(key).key); }
  bool has(const std::string& key) const { return !str(key).empty(); }
  double real(const std::string& key) const { return parse_real(str(key), key); }
  long long integer(const std::string& key) const { return parse_int(str(key), key); }
  bool flag(const std::string& key) const { return parse_bool(str(key), key); }
  std::vector<double> list(const std::string& key) const { return parse_list(str(key), key); }

  // Everything but the output location, which never changes results.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : values_)
      if (k != "output.dir") s += k + "=" + v + "\n";
    return s;
  }

  std::string hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : canonical()) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [k, v] : values_)
      if (k != "output.dir") j[k] = v;
    return j;
  }

  void write_ini(const fs::path& path) const {
    std::ofstream f(path);
    std::string section;
    for (const auto& k : schema()) {
      if (k.key == "output.dir") continue;
      const auto dot = k.key.find('.');
      const std::string sec = k.key.substr(0, dot);
      if (sec != section) {
        f << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
        section = sec;
      }
      const std::string& v = values_.at(k.key);
      f << k.key.substr(dot + 1) << " =" << (v.empty() ? "" : " ") << v << '\n';
    }
  }

 private:
  std::map<std::string, std::string> values_;
};

struct Run {
  std::string command;
  Config cfg;
  fs::path out;
  unsigned threads = 1;
  std::vector<std::string> artifacts;
  std::vector<DiagnosticsReport> reports;

  fs::path file(const std::string& name) {
    artifacts.push_back(name);
    return out / name;
  }
};

template <int D>
Point<D> to_point(const std::vector<double>& v, const std::string& key) {
  if (v.size() != static_cast<std::size_t>(D))
    throw InvalidInput(key + ": expected " + std::to_string(D) + " entries");
  Point<D> p{};
  for (int d = 0; d < D; ++d) p[d] = v[d];
  return p;
}

template <int D>
Potential<D> make_interaction(const Config& c) {
  const PotentialKind kind = parse_potential_kind(c.str("potential.kind"));
  const auto coeffs = c.list("potential.coefficients");
  auto single = [&] {
    if (coeffs.size() != 1) throw InvalidInput("potential.coefficients: quadratic kinds take one factor");
    return coeffs[0];
  };
  Potential<D> W = kind == PotentialKind::QuadraticSymmetric ? Potential<D>::quadratic_symmetric(single())
                   : kind == PotentialKind::QuadraticShifted ? Potential<D>::quadratic_shifted(single())
                                                             : Potential<D>::even_polynomial(coeffs);
  if (c.has("potential.convexity_constant")) W.set_convexity_constant(c.real("potential.convexity_constant"));
  if (c.has("potential.symmetric")) W.set_symmetric(c.flag("potential.symmetric"));
  if (c.has("potential.bound_degree") || c.has("potential.bound_scale")) {
    PolyBound b = W.bound();
    if (c.has("potential.bound_degree")) b.degree = static_cast<int>(c.integer("potential.bound_degree"));
    if (c.has("potential.bound_scale")) b.scale = c.real("potential.bound_scale");
    W.set_bound(b);
  }
  return W;
}

template <int D>
OptionalPotential<D> make_external(const Config& c) {
  if (!c.has("external.coefficients")) return std::nullopt;
  return Potential<D>::external(c.list("external.coefficients"));
}

Schedule make_schedule(const Config& c) {
  Schedule s;
  s.exponent = c.real("schedule.exponent");
  s.n_start = static_cast<int>(c.integer("schedule.n_start"));
  s.n_end = static_cast<int>(c.integer("schedule.n_end"));
  s.validate();
  return s;
}

SimConfig make_sim(const Config& c, std::uint64_t replica) {
  SimConfig s;
  s.dt = c.real("simulation.dt");
  s.t_start = c.real("simulation.t_start");
  s.t_end = c.real("simulation.t_end");
  s.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  s.replica = replica;
  s.noise_scale = c.real("simulation.noise_scale");
  s.history = parse_history_mode(c.str("simulation.history"));
  s.reservoir_size = static_cast<std::size_t>(c.integer("simulation.reservoir_size"));
  s.record_every = static_cast<int>(c.integer("simulation.record_every"));
  s.center_every = static_cast<int>(c.integer("simulation.center_every"));
  s.center_jump = c.real("simulation.center_jump");
  s.schedule = make_schedule(c);
  return s;
}

std::size_t replicas(const Config& c) {
  const long long r = c.integer("run.replicas");
  if (r < 1) throw InvalidInput("run.replicas must be >= 1");
  return static_cast<std::size_t>(r);
}

template <int D>
GridGeometry<D> make_grid(const Config& c, const Point<D>& center) {
  const long long cells = c.integer("grid.cells");
  if (cells < 2) throw InvalidInput("grid.cells must be >= 2");
  return GridGeometry<D>::centered(center, c.real("grid.half_width"), static_cast<int>(cells));
}

FixedPointOptions make_fixpoint_options(const Config& c) {
  FixedPointOptions o;
  o.damping = c.real("fixpoint.damping");
  o.tol = c.real("fixpoint.tol");
  o.max_iter = static_cast<int>(c.integer("fixpoint.max_iter"));
  return o;
}

// Stationary density rho_inf (centered when V is absent), from a Gaussian start.
template <int D>
GridDensity<D> stationary_density(const Potential<D>& W, const OptionalPotential<D>& V, const Config& c) {
  const auto g = make_grid<D>(c, zero_point<D>());
  const auto init = GridDensity<D>::from_function(g, [](const Point<D>& x) { return std::exp(-0.5 * dot<D>(x, x)); });
  return solve_fixed_point<D>(W, V, init, make_fixpoint_options(c)).density;
}

template <int D>
void write_path_csv(const fs::path& path, const TrajectoryRecord<D>& r) {
  std::ofstream f(path);
  const bool z = !r.z.empty();
  if constexpr (D == 1) f << "t,x,c" << (z ? ",z" : "") << '\n';
  else f << "t,x0,x1,c0,c1" << (z ? ",z" : "") << '\n';
  for (std::size_t i = 0; i < r.sample_times.size(); ++i) {
    f << format_double(r.sample_times[i]);
    for (int d = 0; d < D; ++d) f << ',' << format_double(r.positions[i][d]);
    for (int d = 0; d < D; ++d) f << ',' << format_double(r.centers[i][d]);
    if (z) f << ',' << format_double(r.z[i]);
    f << '\n';
  }
}

template <int D>
TrajectoryRecord<D> read_path_csv(const fs::path& path, const SimConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(f, line);
  const bool z = line.find(",z") != std::string::npos;
  TrajectoryRecord<D> r;
  r.dt = cfg.dt;
  r.t_start = cfg.t_start;
  r.initial_weight = cfg.t_start;
  r.record_every = cfg.record_every;
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    const auto v = detail::parse_row(line, 1 + 2 * D + (z ? 1 : 0), path.string());
    r.sample_times.push_back(v[0]);
    Point<D> x{}, c{};
    for (int d = 0; d < D; ++d) {
      x[d] = v[1 + d];
      c[d] = v[1 + D + d];
    }
    r.positions.push_back(x);
    r.centers.push_back(c);
    if (z) r.z.push_back(v.back());
  }
  if (r.sample_times.size() < 2) throw InvalidInput("path " + path.string() + " has fewer than two samples");
  return r;
}

// Occupation histogram around the final center; unthinned records use the
// exact occupation weights, thinned ones weigh samples equally.
template <int D>
void write_histogram_csv(const fs::path& path, const TrajectoryRecord<D>& r, const Config& c) {
  const int bins = static_cast<int>(c.integer("output.histogram_bins"));
  const double hw = c.real("output.histogram_half_width");
  if (bins < 1 || !(hw > 0.0)) throw InvalidInput("output.histogram_bins and half width must be positive");
  const auto g = GridGeometry<D>::centered(r.centers.back(), hw, bins);
  std::vector<double> mass(g.size(), 0.0);
  auto deposit = [&](const Point<D>& x, double w) {
    std::size_t flat = 0, stride = 1;
    for (int d = 0; d < D; ++d) {
      const int i = static_cast<int>(std::floor((x[d] - g.lo[d]) / g.step[d]));
      if (i < 0 || i >= g.cells[d]) return;
      flat += static_cast<std::size_t>(i) * stride;
      stride *= static_cast<std::size_t>(g.cells[d]);
    }
    mass[flat] += w;
  };
  if (r.full()) {
    r.occupation(r.sample_times.back()).for_each_atom([&](const Point<D>& x, double w) { deposit(x, w); });
  } else {
    for (const auto& x : r.positions) deposit(x, 1.0 / r.positions.size());
  }
  for (double& m : mass) m /= g.cell_volume();
  write_grid_csv<D>(path.string(), GridDensity<D>(g, mass));
}

template <int D>
void cmd_simulate(Run& run) {
  const Config& c = run.cfg;
  const auto W = make_interaction<D>(c);
  const auto V = make_external<D>(c);
  const Point<D> x0 = to_point<D>(c.list("simulation.x0"), "simulation.x0");
  const bool ou = c.flag("simulation.ou_process");
  if (ou && V) throw InvalidInput("the comparison process is defined without an external potential");
  const std::optional<double> eps = c.has("simulation.eps_disc") ? std::optional(c.real("simulation.eps_disc")) : std::nullopt;
  const std::size_t n = replicas(c);
  const auto results = parallel_map(n, run.threads, [&](std::size_t i) {
    const SimConfig s = make_sim(c, i);
    if (ou) return ou_domination<D>(W, s, x0, c.real("simulation.burn_in"), eps);
    return OuResult<D>{simulate<D>(W, V, x0, s), OuReport{}};
  });

  DiagnosticsReport rep;
  rep.experiment = "simulate";
  std::size_t checked = 0, violations = 0, reflections = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = results[i].record;
    const std::string tag = "_r" + std::to_string(i);
    write_path_csv<D>(run.file("path" + tag + ".csv"), r);
    write_histogram_csv<D>(run.file("histogram" + tag + ".csv"), r, c);
    run.artifacts.push_back("histogram" + tag + ".csv.meta");
    rep.series.push_back({"final_center_axis0" + tag, r.sample_times.back(), r.centers.back()[0]});
    rep.series.push_back({"final_position_axis0" + tag, r.sample_times.back(), r.positions.back()[0]});
    for (std::size_t k = 0; k < r.L_values.size(); ++k) rep.series.push_back({"L_n" + tag, r.L_times[k], r.L_values[k]});
    checked += results[i].report.steps_checked;
    violations += results[i].report.violations;
    reflections += results[i].report.reflections;
  }
  if (ou) {
    const double frac = checked ? static_cast<double>(violations) / checked : 0.0;
    rep.fits.push_back({"ou_domination", {{"steps_checked", static_cast<double>(checked)},
                                          {"violations", static_cast<double>(violations)},
                                          {"reflections", static_cast<double>(reflections)},
                                          {"eps_disc", results.front().report.eps_disc}}, 0.0});
    rep.verdicts.push_back({"ou_domination", frac <= 0.01, 0.01 - frac});
  }
  run.reports.push_back(std::move(rep));
}

template <int D>
void cmd_fixpoint(Run& run) {
  const Config& c = run.cfg;
  const auto W = make_interaction<D>(c);
  const auto V = make_external<D>(c);
  const auto g = make_grid<D>(c, zero_point<D>());
  const double a = c.real("fixpoint.init_half_width");
  const bool uniform = c.str("fixpoint.init") == "uniform";
  const auto init = GridDensity<D>::from_function(g, [&](const Point<D>& x) {
    if (!uniform) return std::exp(-0.5 * dot<D>(x, x));
    for (int d = 0; d < D; ++d)
      if (std::abs(x[d]) > a) return 0.0;
    return 1.0;
  });

  DiagnosticsReport rep;
  rep.experiment = "fixpoint";
  std::ofstream log(run.file("fixpoint_log.csv"));
  log << "iteration,residual,free_energy\n";
  const auto res = solve_fixed_point<D>(W, V, init, make_fixpoint_options(c),
                                        [&](int it, double residual, const GridDensity<D>& rho) {
                                          const double F = free_energy<D>(W, V, rho).total;
                                          log << it << ',' << format_double(residual) << ',' << format_double(F) << '\n';
                                          rep.series.push_back({"residual", static_cast<double>(it), residual});
                                        });
  write_grid_csv<D>(run.file("density.csv").string(), res.density);
  run.artifacts.push_back("density.csv.meta");
  const EnergyBreakdown e = free_energy<D>(W, V, res.density);
  rep.fits.push_back({"fixed_point", {{"iterations", static_cast<double>(res.iterations)},
                                      {"entropy", e.entropy}, {"free_energy", e.total}}, res.residual});
  rep.verdicts.push_back({"fixpoint_converged", res.residual < make_fixpoint_options(c).tol,
                          make_fixpoint_options(c).tol - res.residual});
  if (W.kind() == PotentialKind::QuadraticSymmetric && !V) {
    // Closed form: N(0, 1/c) per axis.
    const double k = W.coefficients()[2] * 2.0;
    double err = 0.0;
    for (std::size_t i = 0; i < res.density.size(); ++i) {
      const Point<D> x = res.density.geometry().cell_center(i);
      const double exact = std::pow(k / (2.0 * M_PI), 0.5 * D) * std::exp(-0.5 * k * dot<D>(x, x));
      err = std::max(err, std::abs(res.density[i] - exact));
    }
    rep.fits.push_back({"gaussian_oracle", {{"sup_error", err}}, 0.0});
    rep.verdicts.push_back({"gaussian_sup_error", err <= 1e-3, 1e-3 - err});
  }
  run.reports.push_back(std::move(rep));
}

template <int D>
void cmd_flow(Run& run) {
  const Config& c = run.cfg;
  const auto W = make_interaction<D>(c);
  const auto V = make_external<D>(c);
  const Schedule s = make_schedule(c);
  const Point<D> start = to_point<D>(c.list("flow.start"), "flow.start");
  const double h = c.has("flow.smoothing") ? c.real("flow.smoothing") : default_smoothing_radius(s.time(s.n_start));
  const auto init = smooth<D>(ParticleMeasure<D>::dirac(start), h, make_grid<D>(c, start));
  const auto rho = stationary_density<D>(W, V, c);

  FlowOptions<D> opt;
  opt.V = V;
  opt.rho_inf = rho;
  opt.recenter_fraction = c.real("flow.recenter_fraction");
  const auto states = run_flow<D>(W, init, s, opt);

  DiagnosticsReport rep;
  rep.experiment = "flow";
  {
    std::ofstream f(run.file("flow_steps.csv"));
    f << "n,T,F,relative_F";
    for (int d = 0; d < D; ++d) f << ",center" << (D == 1 ? "" : std::to_string(d));
    f << ",step_tp,phi_gap\n";
    for (const auto& st : states) {
      f << st.n << ',' << format_double(st.time) << ',' << format_double(st.free_energy.total) << ','
        << format_double(*st.relative_free_energy);
      for (int d = 0; d < D; ++d) f << ',' << format_double(st.center[d]);
      f << ',' << format_double(st.step_distance) << ',' << format_double(st.phi_gap) << '\n';
      rep.series.push_back({"relative_free_energy", st.time, *st.relative_free_energy});
    }
  }
  write_grid_csv<D>(run.file("final_density.csv").string(), states.back().density);
  run.artifacts.push_back("final_density.csv.meta");

  double worst = -INFINITY;
  for (std::size_t i = 1; i < states.size(); ++i)
    worst = std::max(worst, *states[i].relative_free_energy - *states[i - 1].relative_free_energy);
  rep.verdicts.push_back({"free_energy_nonincreasing", worst <= 1e-8, 1e-8 - worst});
  if constexpr (D == 1) {
    const double tp = centered_distance<D>(W, states.back().density, rho, DistanceKind::Tp).value;
    const double tol = c.real("flow.tp_tolerance");
    rep.fits.push_back({"final_distance", {{"centered_tp", tp}}, 0.0});
    rep.verdicts.push_back({"final_centered_tp", tp <= tol, tol - tp});
  }

  RateParams p;
  p.eps0 = c.real("flow.eps0");
  p.eps1 = c.real("flow.eps1");
  p.k = W.bound().degree;
  p.C7 = c.has("flow.C7") ? c.real("flow.C7") : fit_rate_constant<D>(states, p);
  p.validate();
  const EnvelopeReport env = envelope_compare<D>(states, p, static_cast<std::uint64_t>(c.integer("run.seed")));
  {
    std::ofstream f(run.file("envelope.csv"));
    f << "t,relative_F,envelope\n";
    for (std::size_t i = 0; i < states.size(); ++i)
      f << format_double(states[i].time) << ',' << format_double(*states[i].relative_free_energy) << ','
        << format_double(env.envelope[i].y) << '\n';
  }
  rep.fits.push_back({"rate_shape", {{"a", env.fitted_a}, {"a_lower", env.a_lower}, {"a_upper", env.a_upper},
                                     {"log_C", env.log_C}, {"C7", env.C7}, {"k", static_cast<double>(p.k)}},
                      env.fit_residual});
  const double need = c.real("flow.envelope_fraction");
  rep.verdicts.push_back({"envelope_domination", env.fraction_satisfied >= need, env.fraction_satisfied - need});
  rep.verdicts.push_back({"decay_exponent_positive", env.a_lower > 0.0, env.a_lower});
  run.reports.push_back(std::move(rep));
}

template <int D>
void cmd_compare(Run& run) {
  const Config& c = run.cfg;
  if (!c.has("compare.first") || !c.has("compare.second"))
    throw InvalidInput("compare needs compare.first and compare.second");
  const auto W = make_interaction<D>(c);
  const auto m1 = read_measure_csv<D>(c.str("compare.first"));
  const auto m2 = read_measure_csv<D>(c.str("compare.second"));
  const std::string metric = c.str("compare.metric");
  const bool centered = c.flag("compare.centered");

  DiagnosticsReport rep;
  rep.experiment = "compare";
  std::ofstream f(run.file("distances.jsonl"));
  auto emit = [&](DistanceKind kind, const std::string& name) {
    const DistanceResult<D> d = std::visit(
        [&](const auto& a, const auto& b) -> DistanceResult<D> {
          if (centered) return centered_distance<D>(W, a, b, kind);
          if (kind == DistanceKind::W2) return w2_distance(a, b);
          if constexpr (D == 1) return tp_distance_1d(W.bound(), a, b);
          throw UnsupportedInput("T_P is available in one dimension only");
        },
        m1, m2);
    json j = to_json(d);
    j["metric"] = name;
    j["centered"] = centered;
    j["first"] = c.str("compare.first");
    j["second"] = c.str("compare.second");
    f << j.dump() << '\n';
    rep.series.push_back({name, 0.0, d.value});
  };
  if (metric == "tp" || metric == "both") emit(DistanceKind::Tp, "tp");
  if (metric == "w2" || metric == "both") emit(DistanceKind::W2, "w2");
  run.reports.push_back(std::move(rep));
}

template <int D>
void cmd_diagnose(Run& run) {
  if constexpr (D != 1) {
    throw UnsupportedInput("diagnose needs one-dimensional T_P and grid W2");
  } else {
    Config c = run.cfg;
    const bool from_disk = c.has("diagnose.input");
    if (from_disk) {
      // Model and simulation settings come from the recorded run.
      const fs::path in = c.str("diagnose.input");
      std::ifstream mf(in / "manifest.json");
      if (!mf) throw InvalidInput("no manifest.json in " + in.string());
      const json m = json::parse(mf);
      for (const auto& [k, v] : m.at("config").items()) {
        const std::string sec = k.substr(0, k.find('.'));
        if (sec == "potential" || sec == "external" || sec == "simulation" || sec == "run" || sec == "schedule" ||
            sec == "experiment")
          c.set(k, v.template get<std::string>());
      }
      run.cfg = c;
    }
    if (c.integer("simulation.record_every") != 1) throw InvalidInput("diagnose needs simulation.record_every = 1");
    const auto W = make_interaction<1>(c);
    const auto V = make_external<1>(c);
    if (V) throw UnsupportedInput("diagnose compares against the centered stationary density; drop the external potential");
    const std::size_t n = replicas(c);
    const Point<1> x0 = to_point<1>(c.list("simulation.x0"), "simulation.x0");
    const auto records = parallel_map(n, run.threads, [&](std::size_t i) {
      if (from_disk)
        return read_path_csv<1>(fs::path(c.str("diagnose.input")) / ("path_r" + std::to_string(i) + ".csv"),
                                make_sim(c, i));
      return simulate<1>(W, V, x0, make_sim(c, i));
    });
    const auto rho = stationary_density<1>(W, V, c);
    write_grid_csv<1>(run.file("rho_inf.csv").string(), rho);
    run.artifacts.push_back("rho_inf.csv.meta");

    ErgodicityOptions eo;
    eo.t_first = c.real("diagnose.t_first");
    eo.per_decade = static_cast<int>(c.integer("diagnose.per_decade"));
    eo.threshold = c.real("diagnose.w2_threshold");
    eo.required = static_cast<std::size_t>(c.integer("diagnose.required"));
    eo.bootstrap_seed = static_cast<std::uint64_t>(c.integer("run.seed"));
    if (eo.required > n) throw InvalidInput("diagnose.required exceeds run.replicas");
    run.reports.push_back(ergodicity_check<1>(W, records, rho, eo));

    const Schedule s = make_schedule(c);
    CenterConvergenceOptions co;
    co.tail_threshold = c.real("diagnose.tail_threshold");
    co.oscillation_ratio = c.real("diagnose.oscillation_ratio");
    for (std::size_t i = 0; i < n; ++i) {
      auto r = center_convergence<1>(records[i], s, co);
      r.experiment += "_r" + std::to_string(i);
      run.reports.push_back(std::move(r));
    }
    run.reports.push_back(one_step_error<1>(W, records.front(), s,
                                            static_cast<int>(c.integer("diagnose.one_step_n_min")),
                                            static_cast<int>(c.integer("diagnose.one_step_n_max"))));
    std::ofstream f(run.file("w2_checkpoints.csv"));
    f << "replica,t,w2\n";
    for (const auto& p : run.reports.front().series) {
      const std::string prefix = "w2_replica_";
      if (p.label.rfind(prefix, 0) == 0)
        f << p.label.substr(prefix.size()) << ',' << format_double(p.time) << ',' << format_double(p.value) << '\n';
    }
  }
}

void cmd_appendix2(Run& run) {
  const Config& c = run.cfg;
  const std::size_t n = replicas(c);
  const auto seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  const auto paths = parallel_map(n, run.threads, [&](std::size_t i) {
    return appendix2_system(c.real("appendix2.t_end"), c.real("appendix2.dt"), seed, i,
                            c.real("appendix2.noise_scale"), 1.0,
                            static_cast<int>(c.integer("appendix2.samples_per_decade")));
  });
  DiagnosticsReport rep = appendix2_report(paths, c.real("appendix2.fit_lo"), c.real("appendix2.fit_hi"),
                                           c.real("appendix2.slope_lo"), c.real("appendix2.slope_hi"));
  std::ofstream f(run.file("appendix2.csv"));
  f << "t,c_mean";
  for (std::size_t i = 0; i < n; ++i) f << ",c_r" << i;
  f << '\n';
  const auto mean = rep.values("c_mean");
  for (std::size_t k = 0; k < paths.front().times.size(); ++k) {
    f << format_double(paths.front().times[k]) << ',' << format_double(mean[k]);
    for (const auto& p : paths) f << ',' << format_double(p.c[k]);
    f << '\n';
  }
  run.reports.push_back(std::move(rep));
}

template <int D>
void cmd_certify(Run& run) {
  const Config& c = run.cfg;
  const auto W = make_interaction<D>(c);
  const auto r = certify<D>(W, c.real("certify.radius"), static_cast<int>(c.integer("certify.samples")));
  DiagnosticsReport rep;
  rep.experiment = "certify";
  rep.fits.push_back({"certificate", {{"min_curvature", r.min_curvature},
                                      {"convexity_constant", W.convexity_constant()},
                                      {"max_domination_ratio", r.max_domination_ratio},
                                      {"symmetry_defect", r.symmetry_defect},
                                      {"max_submultiplicative_ratio", r.max_submultiplicative_ratio},
                                      {"bound_scale", W.bound().scale},
                                      {"bound_degree", static_cast<double>(W.bound().degree)}}, 0.0});
  rep.verdicts.push_back({"uniform_convexity", r.convexity_ok, r.min_curvature - W.convexity_constant()});
  rep.verdicts.push_back({"polynomial_domination", r.domination_ok, 1.0 - r.max_domination_ratio});
  rep.verdicts.push_back({"symmetry", r.symmetry_ok, -r.symmetry_defect});
  rep.verdicts.push_back({"submultiplicative_bound", r.submultiplicative_ok, 1.0 - r.max_submultiplicative_ratio});
  run.reports.push_back(std::move(rep));
}

template <int D>
void dispatch(Run& run) {
  const std::string& cmd = run.command;
  if (cmd == "simulate") cmd_simulate<D>(run);
  else if (cmd == "fixpoint") cmd_fixpoint<D>(run);
  else if (cmd == "flow") cmd_flow<D>(run);
  else if (cmd == "compare") cmd_compare<D>(run);
  else if (cmd == "diagnose") cmd_diagnose<D>(run);
  else if (cmd == "appendix2") cmd_appendix2(run);
  else if (cmd == "certify") cmd_certify<D>(run);
  else throw InvalidInput("unknown command " + cmd);
}

void finish(Run& run) {
  {
    std::ofstream f(run.file("reports.jsonl"));
    for (const auto& r : run.reports) f << to_json(r).dump() << '\n';
  }
  std::string summary;
  for (const auto& r : run.reports) summary += summary_text(r);
  {
    std::ofstream f(run.file("summary.txt"));
    f << summary;
  }
  std::cout << summary;
  run.cfg.write_ini(run.out / "config.resolved.ini");
  run.artifacts.push_back("config.resolved.ini");

  bool pass = true;
  for (const auto& r : run.reports) pass = pass && r.pass();
  json m;
  m["command"] = run.command;
  m["experiment"] = run.cfg.str("experiment.name");
  m["seed"] = run.cfg.integer("run.seed");
  m["config_hash"] = "fnv1a64:" + run.cfg.hash();
  m["config"] = run.cfg.to_json();
  m["artifacts"] = run.artifacts;
  m["pass"] = pass;
  m["versions"] = {{"selfint", SELFINT_VERSION},
                   {"compiler", __VERSION__},
                   {"cxx_standard", __cplusplus},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"boost", BOOST_LIB_VERSION}};
  std::ofstream f(run.out / "manifest.json");
  f << m.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-interacting diffusion laboratory"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<long long> seed;
  std::optional<long long> replica_count;
  std::vector<std::string> overrides;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  bool assert_mode = false;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "run the self-interacting SDE; path and histogram CSVs per replica"},
      {"flow", "Euler-discretized measure flow from a smoothed atom"},
      {"fixpoint", "stationary density by damped iteration of the Gibbs map"},
      {"compare", "T_P / W2 distances between two measure CSVs"},
      {"diagnose", "ergodicity, center convergence and one-step error reports"},
      {"appendix2", "center drift of the non-symmetric reduced system"},
      {"certify", "sample the convexity, domination and symmetry hypotheses"},
      {"schema", "print the configuration schema"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "INI configuration file");
    sub->add_option("--seed", seed, "override run.seed");
    sub->add_option("--out", out_dir, "override output.dir");
    sub->add_option("--threads", threads, "worker cap for replica ensembles");
    sub->add_option("--replicas", replica_count, "override run.replicas");
    sub->add_option("--set", overrides, "section.key=value override (repeatable)");
    sub->add_flag("--assert", assert_mode, "exit 1 when any verdict fails");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  Run run;
  run.command = app.get_subcommands().front()->get_name();
  if (run.command == "schema") {
    std::cout << schema_text();
    return 0;
  }
  try {
    if (!config_path.empty()) run.cfg.load_file(config_path);
    for (const auto& o : overrides) run.cfg.apply_override(o);
    if (seed) run.cfg.set("run.seed", std::to_string(*seed));
    if (replica_count) run.cfg.set("run.replicas", std::to_string(*replica_count));
    if (!out_dir.empty()) run.cfg.set("output.dir", out_dir);
    run.threads = std::max(1u, threads);
    run.out = run.cfg.str("output.dir");
    fs::create_directories(run.out);
    if (run.cfg.integer("experiment.dimension") == 1) dispatch<1>(run);
    else dispatch<2>(run);
    finish(run);
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const UnsupportedInput& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 3;
  }

  bool pass = true;
  for (const auto& r : run.reports) pass = pass && r.pass();
  if (run.command == "certify" && !pass) return 1;
  if (assert_mode && !pass) return 1;
  return 0;
}
