#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "measure.hpp"
#include "transport.hpp"

namespace selfint {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidInput("cannot open '" + path + "' for writing");
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot open '" + path + "'");
  return f;
}

inline std::vector<double> parse_row(const std::string& line, std::size_t expected, const std::string& path) {
  std::vector<double> v;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(cell, &used));
      if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw InvalidInput("bad number '" + cell + "' in " + path);
    }
  }
  if (v.size() != expected) throw InvalidInput("wrong column count in " + path + ": " + line);
  return v;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Density CSV (x,density or x,y,density at cell centers) plus a .meta file
// holding the grid: dimension, lo, hi and cells per axis.
template <int D>
void write_grid_csv(const std::string& path, const GridDensity<D>& m) {
  const auto& g = m.geometry();
  {
    auto f = detail::open_out(path);
    f << (D == 1 ? "x,density\n" : "x,y,density\n");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const Point<D> x = g.cell_center(i);
      for (int d = 0; d < D; ++d) f << format_double(x[d]) << ',';
      f << format_double(m[i]) << '\n';
    }
  }
  auto meta = detail::open_out(path + ".meta");
  meta << "dimension=" << D << '\n';
  for (int d = 0; d < D; ++d) {
    meta << "lo" << d << '=' << format_double(g.lo[d]) << '\n';
    meta << "hi" << d << '=' << format_double(g.hi(d)) << '\n';
    meta << "cells" << d << '=' << g.cells[d] << '\n';
  }
}

template <int D>
GridDensity<D> read_grid_csv(const std::string& path) {
  std::map<std::string, std::string> kv;
  {
    auto meta = detail::open_in(path + ".meta");
    std::string line;
    while (std::getline(meta, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
  }
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw InvalidInput("grid header " + path + ".meta lacks '" + k + "'");
    return it->second;
  };
  if (std::stoi(need("dimension")) != D) throw InvalidInput("grid dimension mismatch in " + path);
  GridGeometry<D> g;
  for (int d = 0; d < D; ++d) {
    const double lo = std::stod(need("lo" + std::to_string(d)));
    const double hi = std::stod(need("hi" + std::to_string(d)));
    g.cells[d] = std::stoi(need("cells" + std::to_string(d)));
    g.lo[d] = lo;
    g.step[d] = (hi - lo) / g.cells[d];
  }
  auto f = detail::open_in(path);
  std::string line;
  std::getline(f, line);
  std::vector<double> v;
  while (std::getline(f, line)) {
    if (detail::trim(line).empty()) continue;
    v.push_back(detail::parse_row(line, D + 1, path)[D]);
  }
  return GridDensity<D>(g, std::move(v));
}

// Particle CSV: position,weight (x,y,weight in 2-D).
template <int D>
void write_particles_csv(const std::string& path, const ParticleMeasure<D>& m) {
  auto f = detail::open_out(path);
  f << (D == 1 ? "position,weight\n" : "x,y,weight\n");
  for (const auto& a : m.atoms()) {
    for (int d = 0; d < D; ++d) f << format_double(a.position[d]) << ',';
    f << format_double(a.weight) << '\n';
  }
}

template <int D>
ParticleMeasure<D> read_particles_csv(const std::string& path) {
  auto f = detail::open_in(path);
  std::string line;
  std::getline(f, line);
  ParticleMeasure<D> m;
  while (std::getline(f, line)) {
    if (detail::trim(line).empty()) continue;
    const auto v = detail::parse_row(line, D + 1, path);
    Point<D> x{};
    for (int d = 0; d < D; ++d) x[d] = v[d];
    m.add(x, v[D]);
  }
  if (m.empty()) throw InvalidInput("no atoms in " + path);
  return m;
}

template <int D>
using AnyMeasure = std::variant<ParticleMeasure<D>, GridDensity<D>>;

// Reads either representation, telling them apart by the CSV header.
template <int D>
AnyMeasure<D> read_measure_csv(const std::string& path) {
  std::string header;
  {
    auto f = detail::open_in(path);
    std::getline(f, header);
  }
  if (detail::trim(header).find("density") != std::string::npos) return read_grid_csv<D>(path);
  if (detail::trim(header).find("weight") != std::string::npos) return read_particles_csv<D>(path);
  throw InvalidInput("unrecognized measure CSV header in " + path + ": " + header);
}

inline nlohmann::json to_json(const DiagnosticsReport& r) {
  nlohmann::json j;
  j["experiment"] = r.experiment;
  j["series"] = nlohmann::json::array();
  for (const auto& p : r.series) j["series"].push_back({{"label", p.label}, {"time", p.time}, {"value", p.value}});
  j["fits"] = nlohmann::json::array();
  for (const auto& f : r.fits) j["fits"].push_back({{"model", f.model}, {"parameters", f.parameters}, {"residual", f.residual}});
  j["verdicts"] = nlohmann::json::array();
  for (const auto& v : r.verdicts)
    j["verdicts"].push_back({{"criterion", v.criterion}, {"pass", v.pass}, {"margin", v.margin}});
  j["pass"] = r.pass();
  return j;
}

template <int D>
nlohmann::json to_json(const DistanceResult<D>& d) {
  nlohmann::json j{{"value", d.value}, {"method", to_string(d.method)}};
  if (d.centered_at) {
    std::vector<double> c(d.centered_at->begin(), d.centered_at->end());
    j["centered_at"] = c;
  } else {
    j["centered_at"] = nullptr;
  }
  return j;
}

// Human-readable summary: fits and verdicts, one per line.
inline std::string summary_text(const DiagnosticsReport& r) {
  std::ostringstream os;
  os << "experiment " << r.experiment << '\n';
  for (const auto& f : r.fits) {
    os << "  fit " << f.model << ':';
    for (const auto& [k, v] : f.parameters) os << ' ' << k << '=' << format_double(v);
    os << " residual=" << format_double(f.residual) << '\n';
  }
  for (const auto& v : r.verdicts)
    os << "  " << (v.pass ? "PASS " : "FAIL ") << v.criterion << " margin=" << format_double(v.margin) << '\n';
  return os.str();
}

}  // namespace selfint
