#pragma once

#include <utility>
#include <vector>

namespace recursim::bounds {

/// Power left unexplained by an ideal one-step predictor of white noise passed
/// through an n-th order all-pole low-pass at fc, sampled at fs:
/// (2 fc / (2n - 1)) * (fc / fs)^(2n - 1). Requires fs > 2 fc and n >= 1.
double unexplained_power(double fc, double fs, int n);

/// (g0 / fs)^2 * pu_eps.
double output_error_power(double g0, double fs, double pu_eps);

/// Slope of the output RMSE bound against fs: -20 (n + 1/2) dB/decade.
double rmse_bound_exponent(int n);

struct SlopeFit {
  double slope_db_per_decade = 0.0;
  double intercept = 0.0;  // dB at fs = 1 Hz
  double r_squared = 0.0;
};

/// OLS of 20 log10(value) on log10(fs). Needs >= 4 points spanning >= 1 decade
/// with strictly positive values.
SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

}  // namespace recursim::bounds
