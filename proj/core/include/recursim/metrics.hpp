#pragma once

#include <cmath>
#include <span>

#include "recursim/signals.hpp"

namespace recursim {

/// Output-error metrics on mean-removed series.
struct ErrorMetrics {
  double y_rms = 0.0;       // RMS of the mean-removed difference (V)
  double y_relative = 0.0;  // y_rms / RMS of the mean-removed reference
};

/// Throws UndefinedRelative when `y_val` has zero variance.
ErrorMetrics metrics(std::span<const double> y_val, std::span<const double> y_mod);
ErrorMetrics metrics(const SampledSignal& y_val, const SampledSignal& y_mod);

inline double to_db(double ratio) { return 20.0 * std::log10(ratio); }

}  // namespace recursim
