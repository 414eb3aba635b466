#include "recursim/signals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "recursim/errors.hpp"

namespace recursim {

SampledSignal::SampledSignal(std::vector<double> samples, double fs,
                             std::optional<std::size_t> period_len)
    : samples_(std::move(samples)), fs_(fs), period_len_(period_len) {
  if (!(fs_ > 0.0) || !std::isfinite(fs_)) {
    throw InvalidArgument("sampling rate must be positive and finite");
  }
  if (samples_.empty()) throw InvalidArgument("signal must contain at least one sample");
  if (period_len_) {
    if (*period_len_ == 0 || samples_.size() % *period_len_ != 0) {
      throw InvalidArgument("period length must divide the sample count");
    }
  }
  for (double v : samples_) {
    if (!std::isfinite(v)) throw InvalidArgument("signal contains a non-finite sample");
  }
}

double SampledSignal::mean() const {
  return std::accumulate(samples_.begin(), samples_.end(), 0.0) /
         static_cast<double>(samples_.size());
}

double SampledSignal::rms() const {
  double acc = 0.0;
  for (double v : samples_) acc += v * v;
  return std::sqrt(acc / static_cast<double>(samples_.size()));
}

SampledSignal SampledSignal::slice(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > samples_.size()) {
    throw InvalidArgument("slice out of range");
  }
  std::vector<double> out(samples_.begin() + static_cast<std::ptrdiff_t>(first),
                          samples_.begin() + static_cast<std::ptrdiff_t>(first + count));
  std::optional<std::size_t> p;
  if (period_len_ && count % *period_len_ == 0) p = period_len_;
  return SampledSignal(std::move(out), fs_, p);
}

namespace signals {

Window parse_window(const std::string& name) {
  if (name == "rectangular" || name == "rect" || name == "boxcar") return Window::kRectangular;
  if (name == "hann" || name == "hanning") return Window::kHann;
  throw InvalidArgument("unknown window '" + name + "'");
}

std::string window_name(Window w) {
  return w == Window::kRectangular ? "rectangular" : "hann";
}

SampledSignal gen_white_noise(std::uint64_t seed, std::size_t n, double sigma, double fs) {
  if (n == 0) throw InvalidArgument("white noise length must be positive");
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be positive");
  if (!(sigma >= 0.0)) throw InvalidArgument("standard deviation must be non-negative");
  std::vector<double> out(n, 0.0);
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    for (double& v : out) v = dist(rng);
  }
  return SampledSignal(std::move(out), fs);
}

namespace {

void check_multisine(const MultisineSpec& spec) {
  if (spec.period_len < 4) throw InvalidArgument("multisine period must be at least 4 samples");
  if (!(spec.fs > 0.0)) throw InvalidArgument("sampling rate must be positive");
  if (spec.periods == 0) throw InvalidArgument("multisine needs at least one period");
  if (spec.f_lo < 0.0 || spec.f_hi < spec.f_lo) throw InvalidArgument("invalid excited band");
  if (spec.f_hi > spec.fs / 2.0) throw InvalidArgument("excited band exceeds Nyquist");
  if (!(spec.rms_amplitude >= 0.0)) throw InvalidArgument("rms amplitude must be non-negative");
}

}  // namespace

std::vector<std::size_t> excited_bins(const MultisineSpec& spec) {
  check_multisine(spec);
  const double f0 = spec.fs / static_cast<double>(spec.period_len);
  const double tol = 1e-9;
  auto k_lo = static_cast<std::size_t>(std::max(1.0, std::ceil(spec.f_lo / f0 - tol)));
  auto k_hi = static_cast<std::size_t>(std::floor(spec.f_hi / f0 + tol));
  // Strictly below the Nyquist bin so every line is a proper cosine pair.
  k_hi = std::min(k_hi, (spec.period_len - 1) / 2);

  std::vector<std::size_t> candidates;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    if (k % 2 == 1) candidates.push_back(k);
  }
  if (candidates.empty()) throw InvalidArgument("excited band contains no odd frequency line");

  std::mt19937_64 rng(spec.seed);
  if (spec.group_size < 2) return candidates;
  std::vector<std::size_t> bins;
  const std::size_t g = spec.group_size;
  std::size_t i = 0;
  for (; i + g <= candidates.size(); i += g) {
    std::uniform_int_distribution<std::size_t> pick(0, g - 1);
    const std::size_t drop = pick(rng);
    for (std::size_t j = 0; j < g; ++j) {
      if (j != drop) bins.push_back(candidates[i + j]);
    }
  }
  for (; i < candidates.size(); ++i) bins.push_back(candidates[i]);
  return bins;
}

SampledSignal gen_odd_multisine(const MultisineSpec& spec) {
  const std::vector<std::size_t> bins = excited_bins(spec);
  const std::size_t n = spec.period_len;

  // Phases come from a stream distinct from the line selection.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::vector<double> phases(bins.size());
  for (double& p : phases) p = phase_dist(rng);

  std::vector<double> period(n, 0.0);
  const double amp = spec.rms_amplitude * std::sqrt(2.0 / static_cast<double>(bins.size()));
  if (amp > 0.0) {
    const double w = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const std::size_t k = bins[b];
      for (std::size_t t = 0; t < n; ++t) {
        // Reduce k*t modulo n so the phase argument stays exact for long periods.
        const auto idx = static_cast<double>((k * t) % n);
        period[t] += amp * std::cos(w * idx + phases[b]);
      }
    }
  }

  std::vector<double> out;
  out.reserve(n * spec.periods);
  for (std::size_t p = 0; p < spec.periods; ++p) out.insert(out.end(), period.begin(), period.end());
  return SampledSignal(std::move(out), spec.fs, n);
}

SampledSignal zoh_hold(const SampledSignal& signal, std::size_t oversample) {
  if (oversample == 0) throw InvalidArgument("hold factor must be at least 1");
  std::vector<double> out;
  out.reserve(signal.size() * oversample);
  for (double v : signal.samples()) out.insert(out.end(), oversample, v);
  std::optional<std::size_t> p;
  if (signal.period_len()) p = *signal.period_len() * oversample;
  return SampledSignal(std::move(out), signal.fs() * static_cast<double>(oversample), p);
}

double dft_magnitude(std::span<const double> x, std::size_t k) {
  const std::size_t n = x.size();
  const double w = 2.0 * std::numbers::pi / static_cast<double>(n);
  double re = 0.0;
  double im = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double arg = w * static_cast<double>((k * t) % n);
    re += x[t] * std::cos(arg);
    im -= x[t] * std::sin(arg);
  }
  return std::hypot(re, im);
}

}  // namespace signals
}  // namespace recursim
