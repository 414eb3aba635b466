#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "fft.hpp"
#include "recursim/errors.hpp"
#include "recursim/signals.hpp"

namespace recursim::signals {

double SpectrumEstimate::total_power() const {
  double acc = 0.0;
  for (double p : power) acc += p;
  return acc;
}

SpectrumEstimate power_spectrum(const SampledSignal& signal, const std::string& window,
                                const WelchOptions& opts) {
  return power_spectrum(signal, parse_window(window), opts);
}

SpectrumEstimate power_spectrum(const SampledSignal& signal, Window window,
                                const WelchOptions& opts) {
  const std::size_t n = signal.size();
  if (n < 64) throw InvalidArgument("power spectrum needs at least 64 samples");
  if (opts.segments == 0) throw InvalidArgument("Welch needs at least one segment");
  if (!(opts.overlap >= 0.0 && opts.overlap < 1.0)) {
    throw InvalidArgument("Welch overlap must lie in [0, 1)");
  }

  const double span = 1.0 + static_cast<double>(opts.segments - 1) * (1.0 - opts.overlap);
  const auto len = static_cast<std::size_t>(std::floor(static_cast<double>(n) / span));
  if (len < 16) throw InvalidArgument("Welch segments shorter than 16 samples");
  const auto step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(len) * (1.0 - opts.overlap))));
  const std::size_t count = opts.segments == 1 ? 1 : 1 + (n - len) / step;

  std::vector<double> w(len, 1.0);
  if (window == Window::kHann) {
    for (std::size_t i = 0; i < len; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(len));
    }
  }
  double wsum2 = 0.0;
  for (double v : w) wsum2 += v * v;

  const std::size_t nb = len / 2 + 1;
  SpectrumEstimate est;
  est.window = window;
  est.freqs.resize(nb);
  est.power.assign(nb, 0.0);
  for (std::size_t k = 0; k < nb; ++k) {
    est.freqs[k] = static_cast<double>(k) * signal.fs() / static_cast<double>(len);
  }

  std::vector<double> seg(len);
  const auto x = signal.samples();
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t off = s * step;
    for (std::size_t i = 0; i < len; ++i) seg[i] = x[off + i] * w[i];
    const auto bins = detail::rfft(seg);
    for (std::size_t k = 0; k < nb; ++k) {
      const bool edge = (k == 0) || (len % 2 == 0 && k == len / 2);
      const double scale = edge ? 1.0 : 2.0;
      est.power[k] += scale * std::norm(bins[k]) / (static_cast<double>(len) * wsum2);
    }
  }
  for (double& p : est.power) p /= static_cast<double>(count);
  return est;
}

SampledSignal fft_lowpass(const SampledSignal& signal, double cutoff_hz) {
  const std::size_t n = signal.size();
  auto bins = detail::rfft(signal.samples());
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const double f = static_cast<double>(k) * signal.fs() / static_cast<double>(n);
    if (f >= cutoff_hz) bins[k] = 0.0;
  }
  return SampledSignal(detail::irfft(bins, n), signal.fs(), signal.period_len());
}

SampledSignal decimate(const SampledSignal& signal, std::size_t factor, bool prefilter,
                       double cutoff_fraction) {
  if (factor == 0) throw InvalidArgument("decimation factor must be at least 1");
  if (signal.size() % factor != 0) {
    throw InvalidArgument("decimation factor " + std::to_string(factor) +
                          " does not divide the record length " + std::to_string(signal.size()));
  }
  if (factor == 1) return signal;
  if (!(cutoff_fraction > 0.0 && cutoff_fraction <= 0.5)) {
    throw InvalidArgument("prefilter cutoff fraction must lie in (0, 0.5]");
  }
  const double fs_new = signal.fs() / static_cast<double>(factor);
  const SampledSignal src = prefilter ? fft_lowpass(signal, cutoff_fraction * fs_new) : signal;

  std::vector<double> out;
  out.reserve(signal.size() / factor);
  const auto x = src.samples();
  for (std::size_t i = 0; i < x.size(); i += factor) out.push_back(x[i]);
  std::optional<std::size_t> p;
  if (signal.period_len() && *signal.period_len() % factor == 0) p = *signal.period_len() / factor;
  return SampledSignal(std::move(out), fs_new, p);
}

}  // namespace recursim::signals
