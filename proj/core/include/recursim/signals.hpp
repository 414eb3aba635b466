#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace recursim {

/// Uniformly sampled real-valued record.
///
/// The constructor enforces fs > 0, a non-empty finite sample set, and (if
/// given) a period length that divides the sample count.
class SampledSignal {
 public:
  SampledSignal(std::vector<double> samples, double fs,
                std::optional<std::size_t> period_len = std::nullopt);

  std::span<const double> samples() const noexcept { return samples_; }
  const std::vector<double>& values() const noexcept { return samples_; }
  double fs() const noexcept { return fs_; }
  std::optional<std::size_t> period_len() const noexcept { return period_len_; }
  std::size_t size() const noexcept { return samples_.size(); }
  double operator[](std::size_t i) const { return samples_[i]; }

  double mean() const;
  double rms() const;

  /// Samples [first, first + count) as a new record; the period length is
  /// kept only if it still divides the new count.
  SampledSignal slice(std::size_t first, std::size_t count) const;

 private:
  std::vector<double> samples_;
  double fs_;
  std::optional<std::size_t> period_len_;
};

namespace signals {

enum class Window { kRectangular, kHann };

/// Parses "rectangular"/"rect"/"boxcar" and "hann"/"hanning".
Window parse_window(const std::string& name);
std::string window_name(Window w);

struct MultisineSpec {
  std::size_t period_len = 0;
  double fs = 0.0;
  double f_lo = 0.0;
  double f_hi = 0.0;
  double rms_amplitude = 1.0;
  std::uint64_t seed = 0;
  std::size_t periods = 1;
  // Odd-random grid: in each group of `group_size` consecutive odd
  // candidates, one line chosen at random is left unexcited.
  std::size_t group_size = 4;
};

struct SpectrumEstimate {
  std::vector<double> freqs;  // Hz, strictly increasing, 0..fs/2
  std::vector<double> power;  // V^2 per bin, one-sided
  Window window = Window::kHann;

  double total_power() const;
};

struct WelchOptions {
  std::size_t segments = 8;
  double overlap = 0.5;
};

SampledSignal gen_white_noise(std::uint64_t seed, std::size_t n, double sigma, double fs);

/// Odd random-phase multisine, `periods` repetitions of one period.
SampledSignal gen_odd_multisine(const MultisineSpec& spec);

/// DFT bin indices that `gen_odd_multisine` excites for `spec`.
std::vector<std::size_t> excited_bins(const MultisineSpec& spec);

SampledSignal zoh_hold(const SampledSignal& signal, std::size_t oversample);

SpectrumEstimate power_spectrum(const SampledSignal& signal, Window window,
                                const WelchOptions& opts = {});
SpectrumEstimate power_spectrum(const SampledSignal& signal, const std::string& window,
                                const WelchOptions& opts = {});

/// Keeps every `factor`-th sample. With `prefilter`, an FFT-domain ideal
/// low-pass at `cutoff_fraction * fs / factor` is applied to the whole record
/// first (circular, zero phase).
SampledSignal decimate(const SampledSignal& signal, std::size_t factor, bool prefilter,
                       double cutoff_fraction = 0.45);

/// Zero-phase ideal low-pass over the full record; bins at or above `cutoff_hz`
/// are removed.
SampledSignal fft_lowpass(const SampledSignal& signal, double cutoff_hz);

/// Magnitude of the (unnormalised) DFT of the record at integer bin `k`.
double dft_magnitude(std::span<const double> x, std::size_t k);

}  // namespace signals
}  // namespace recursim
