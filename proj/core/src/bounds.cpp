#include "recursim/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "recursim/errors.hpp"

namespace recursim::bounds {

double unexplained_power(double fc, double fs, int n) {
  if (n < 1) throw InvalidArgument("filter order must be at least 1");
  if (!(fc > 0.0)) throw InvalidArgument("cutoff must be positive");
  if (!(fs > 2.0 * fc)) throw InvalidArgument("sampling rate must exceed twice the cutoff");
  const double e = 2.0 * n - 1.0;
  return 2.0 * fc / e * std::pow(fc / fs, e);
}

double output_error_power(double g0, double fs, double pu_eps) {
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be positive");
  const double r = g0 / fs;
  return r * r * pu_eps;
}

double rmse_bound_exponent(int n) {
  if (n < 1) throw InvalidArgument("filter order must be at least 1");
  return -20.0 * (1.0 + n - 0.5);
}

SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 4) throw InvalidArgument("slope fit needs at least 4 points");
  double lo = points.front().first;
  double hi = lo;
  for (const auto& [f, v] : points) {
    if (!(f > 0.0)) throw InvalidArgument("slope fit abscissae must be positive");
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("slope fit values must be positive");
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  if (std::log10(hi / lo) < 1.0 - 1e-9) throw InvalidArgument("slope fit must span at least one decade");

  const auto n = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [f, v] : points) {
    sx += std::log10(f);
    sy += 20.0 * std::log10(v);
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [f, v] : points) {
    const double dx = std::log10(f) - mx;
    const double dy = 20.0 * std::log10(v) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  SlopeFit fit;
  fit.slope_db_per_decade = sxy / sxx;
  fit.intercept = my - fit.slope_db_per_decade * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace recursim::bounds
