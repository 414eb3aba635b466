#include "recursim/metrics.hpp"

#include <cmath>

#include "recursim/errors.hpp"

namespace recursim {

ErrorMetrics metrics(std::span<const double> y_val, std::span<const double> y_mod) {
  if (y_val.size() != y_mod.size()) throw InvalidArgument("metrics need equal-length series");
  if (y_val.empty()) throw InvalidArgument("metrics need at least one sample");
  const auto n = static_cast<double>(y_val.size());
  double mv = 0.0;
  double mm = 0.0;
  for (std::size_t i = 0; i < y_val.size(); ++i) {
    mv += y_val[i];
    mm += y_mod[i];
  }
  mv /= n;
  mm /= n;
  double err = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < y_val.size(); ++i) {
    const double v = y_val[i] - mv;
    const double d = v - (y_mod[i] - mm);
    err += d * d;
    ref += v * v;
  }
  if (ref == 0.0) throw UndefinedRelative("reference output has zero variance");
  ErrorMetrics m;
  m.y_rms = std::sqrt(err / n);
  m.y_relative = m.y_rms / std::sqrt(ref / n);
  return m;
}

ErrorMetrics metrics(const SampledSignal& y_val, const SampledSignal& y_mod) {
  return metrics(y_val.samples(), y_mod.samples());
}

}  // namespace recursim
