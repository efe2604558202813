#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "errors.hpp"

namespace selfint {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  double slope_stderr = 0.0;
  std::size_t n = 0;
};

// Ordinary least squares y ~ intercept + slope * x.
inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size(), "fit needs equally many x and y values");
  detail::require(x.size() >= 2, "fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw NumericFailure("degenerate regressor in least squares");
  LinearFit f;
  f.n = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    ss += r * r;
  }
  f.residual_rms = std::sqrt(ss / n);
  f.slope_stderr = x.size() > 2 ? std::sqrt(ss / (n - 2.0) / sxx) : 0.0;
  return f;
}

struct SlopeBand {
  double lower = 0.0;
  double upper = 0.0;
};

// Residual bootstrap band for the slope: the (q, 1 - q) quantiles over
// n_boot refits on resampled residuals.
inline SlopeBand bootstrap_slope(const std::vector<double>& x, const std::vector<double>& y,
                                 int n_boot = 1000, double q = 0.05, std::uint64_t seed = 1) {
  detail::require(n_boot >= 10, "bootstrap needs at least 10 resamples");
  detail::require(q > 0.0 && q < 0.5, "bootstrap quantile must lie in (0, 0.5)");
  const LinearFit base = least_squares(x, y);
  std::vector<double> resid(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) resid[i] = y[i] - base.intercept - base.slope * x[i];
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(n_boot));
  std::vector<double> yb(x.size());
  for (int b = 0; b < n_boot; ++b) {
    for (std::size_t i = 0; i < x.size(); ++i)
      yb[i] = base.intercept + base.slope * x[i] + resid[pick(rng)];
    slopes.push_back(least_squares(x, yb).slope);
  }
  std::sort(slopes.begin(), slopes.end());
  auto quant = [&](double p) {
    const double pos = p * (slopes.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, slopes.size() - 1);
    return slopes[lo] + (pos - lo) * (slopes[hi] - slopes[lo]);
  };
  return {quant(q), quant(1.0 - q)};
}

}  // namespace selfint
