#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "recursim/errors.hpp"
#include "recursim/plant_sim.hpp"
#include "recursim/signals.hpp"

using namespace recursim;
using namespace recursim::signals;

namespace {

// Plain O(n) DFT bin, independent of the library helpers.
std::complex<double> dft_bin(std::span<const double> x, std::size_t k) {
  std::complex<double> acc = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(t) / n);
  }
  return acc;
}

double sample_std(std::span<const double> x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(x.size() - 1));
}

}  // namespace

TEST(SampledSignal, RejectsInvalidConstruction) {
  EXPECT_THROW(SampledSignal({1.0}, 0.0), InvalidArgument);
  EXPECT_THROW(SampledSignal({}, 1.0), InvalidArgument);
  EXPECT_THROW(SampledSignal({1.0, 2.0, 3.0}, 1.0, 2), InvalidArgument);
  EXPECT_THROW(SampledSignal({1.0, NAN}, 1.0), InvalidArgument);
  EXPECT_NO_THROW(SampledSignal({1.0, 2.0}, 1.0, 2));
}

TEST(SampledSignal, SliceKeepsPeriodOnlyWhenItDivides) {
  SampledSignal s({1, 2, 3, 4, 5, 6}, 2.0, 2);
  EXPECT_EQ(s.slice(2, 4).period_len(), std::optional<std::size_t>(2));
  EXPECT_FALSE(s.slice(1, 3).period_len());
  EXPECT_DOUBLE_EQ(s.slice(1, 3)[0], 2.0);
  EXPECT_THROW(s.slice(4, 3), InvalidArgument);
}

TEST(WhiteNoise, ZeroSigmaGivesZeros) {
  const auto s = gen_white_noise(7, 4, 0.0, 1.0);
  for (double v : s.samples()) EXPECT_EQ(v, 0.0);
}

TEST(WhiteNoise, SampleStdMatchesSigma) {
  const auto s = gen_white_noise(7, 78125, 0.99, 78125.0);
  const double sd = sample_std(s.samples());
  EXPECT_GE(sd, 0.97);
  EXPECT_LE(sd, 1.01);
}

TEST(WhiteNoise, DeterministicPerSeed) {
  const auto a = gen_white_noise(11, 1000, 1.0, 10.0);
  const auto b = gen_white_noise(11, 1000, 1.0, 10.0);
  const auto c = gen_white_noise(12, 1000, 1.0, 10.0);
  EXPECT_EQ(a.values(), b.values());
  EXPECT_NE(a.values(), c.values());
}

TEST(WhiteNoise, RejectsBadArguments) {
  EXPECT_THROW(gen_white_noise(1, 0, 1.0, 1.0), InvalidArgument);
  EXPECT_THROW(gen_white_noise(1, 10, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(gen_white_noise(1, 10, 1.0, -5.0), InvalidArgument);
}

TEST(OddMultisine, OnlyOddBinsInBandAreExcited) {
  MultisineSpec spec;
  spec.period_len = 78125;
  spec.fs = 78125.0;
  spec.f_hi = 100.0;
  spec.rms_amplitude = 0.127;
  spec.seed = 3;
  const auto s = gen_odd_multisine(spec);
  const auto x = s.samples();
  double peak = 0.0;
  for (std::size_t k = 1; k <= 101; k += 2) peak = std::max(peak, std::abs(dft_bin(x, k)));
  ASSERT_GT(peak, 0.0);
  for (std::size_t k = 0; k <= 110; k += 2) {
    EXPECT_LT(std::abs(dft_bin(x, k)) / peak, 1e-10) << "even bin " << k;
  }
  for (std::size_t k = 103; k <= 121; k += 2) {
    EXPECT_LT(std::abs(dft_bin(x, k)) / peak, 1e-10) << "out-of-band bin " << k;
  }
  for (std::size_t k : excited_bins(spec)) {
    EXPECT_EQ(k % 2, 1u);
    EXPECT_LE(k, 100u);
    EXPECT_GT(std::abs(dft_bin(x, k)) / peak, 0.5);
  }
}

TEST(OddMultisine, RmsAndDropPattern) {
  MultisineSpec spec;
  spec.period_len = 4096;
  spec.fs = 4096.0;
  spec.f_hi = 400.0;
  spec.rms_amplitude = 0.5;
  spec.seed = 9;
  spec.periods = 3;
  const auto s = gen_odd_multisine(spec);
  EXPECT_EQ(s.size(), 3u * 4096u);
  EXPECT_EQ(s.period_len(), std::optional<std::size_t>(4096));
  EXPECT_NEAR(s.rms(), 0.5, 1e-12);
  // 200 odd candidates in [1, 400]: one of every four is a detection line.
  EXPECT_EQ(excited_bins(spec).size(), 150u);
  for (std::size_t t = 0; t < 4096; ++t) EXPECT_EQ(s[t], s[t + 8192]);
}

TEST(OddMultisine, ZeroAmplitudeIsZero) {
  MultisineSpec spec;
  spec.period_len = 256;
  spec.fs = 256.0;
  spec.f_hi = 50.0;
  spec.rms_amplitude = 0.0;
  for (double v : gen_odd_multisine(spec).samples()) EXPECT_EQ(v, 0.0);
}

TEST(OddMultisine, EvenBinTwoIsNull) {
  MultisineSpec spec;
  spec.period_len = 1024;
  spec.fs = 1024.0;
  spec.f_hi = 200.0;
  spec.seed = 1;
  const auto x = gen_odd_multisine(spec);
  double scale = 0.0;
  for (double v : x.samples()) scale += std::abs(v);
  EXPECT_LT(std::abs(dft_bin(x.samples(), 2)) / scale, 1e-12);
}

TEST(OddMultisine, RejectsBandAboveNyquist) {
  MultisineSpec spec;
  spec.period_len = 100;
  spec.fs = 100.0;
  spec.f_hi = 60.0;
  EXPECT_THROW(gen_odd_multisine(spec), InvalidArgument);
}

TEST(ZohHold, FactorOneIsIdentity) {
  SampledSignal s({1.0, -2.0, 3.5}, 5.0);
  const auto h = zoh_hold(s, 1);
  EXPECT_EQ(h.values(), s.values());
  EXPECT_EQ(h.fs(), 5.0);
}

TEST(ZohHold, RepeatsEachSample) {
  const auto h = zoh_hold(SampledSignal({1.0, 2.0}, 1.0), 3);
  EXPECT_EQ(h.values(), (std::vector<double>{1, 1, 1, 2, 2, 2}));
  EXPECT_EQ(h.fs(), 3.0);
  EXPECT_THROW(zoh_hold(SampledSignal({1.0}, 1.0), 0), InvalidArgument);
}

TEST(PowerSpectrum, SinusoidOnBinIsSingleLine) {
  const std::size_t n = 1024;
  const std::size_t k = 37;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    x[t] = std::sin(2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
  }
  const auto est = power_spectrum(SampledSignal(x, 1024.0), Window::kRectangular, {.segments = 1, .overlap = 0.0});
  ASSERT_EQ(est.power.size(), n / 2 + 1);
  for (std::size_t i = 0; i < est.power.size(); ++i) {
    if (i == k) {
      EXPECT_NEAR(est.power[i], 0.5, 1e-12);
    } else {
      EXPECT_LT(est.power[i], 1e-24);
    }
  }
  EXPECT_DOUBLE_EQ(est.freqs[k], 37.0);
}

TEST(PowerSpectrum, WhiteNoiseIsFlat) {
  const auto s = gen_white_noise(5, 1 << 16, 1.0, 1000.0);
  const auto est = power_spectrum(s, "hann", {.segments = 64, .overlap = 0.5});
  // Average over blocks of 16 bins; each block should sit near the mean level.
  const double mean = est.total_power() / static_cast<double>(est.power.size());
  for (std::size_t b = 1; b + 16 < est.power.size(); b += 16) {
    double acc = 0.0;
    for (std::size_t i = b; i < b + 16; ++i) acc += est.power[i];
    acc /= 16.0;
    EXPECT_GT(acc / mean, 0.8);
    EXPECT_LT(acc / mean, 1.25);
  }
  EXPECT_NEAR(est.total_power(), 1.0, 0.05);
}

TEST(PowerSpectrum, ButterworthRollOff) {
  const double fs = 20000.0;
  const auto noise = gen_white_noise(21, 1 << 17, 1.0, fs);
  const auto y = plant::simulate_lti(plant::butterworth_lowpass(4, 100.0), noise);
  const auto est = power_spectrum(y, Window::kHann, {.segments = 16, .overlap = 0.5});
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < est.freqs.size(); ++i) {
    const double f = est.freqs[i];
    if (f < 400.0 || f > 2000.0) continue;
    const double lx = std::log10(f);
    const double ly = 10.0 * std::log10(est.power[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  const double md = static_cast<double>(m);
  const double slope = (sxy - sx * sy / md) / (sxx - sx * sx / md);
  EXPECT_NEAR(slope, -80.0, 0.15 * 80.0);
}

TEST(PowerSpectrum, RejectsUnknownWindow) {
  const auto s = gen_white_noise(1, 256, 1.0, 1.0);
  EXPECT_THROW(power_spectrum(s, "kaiser"), InvalidArgument);
  EXPECT_EQ(parse_window("hanning"), Window::kHann);
  EXPECT_EQ(parse_window("boxcar"), Window::kRectangular);
}

TEST(Decimate, IdentityAndStride) {
  SampledSignal s({1.0, 2.0, 3.0, 4.0}, 4.0);
  EXPECT_EQ(decimate(s, 1, false).values(), s.values());
  const auto d = decimate(s, 2, false);
  EXPECT_EQ(d.values(), (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(d.fs(), 2.0);
  EXPECT_THROW(decimate(s, 3, false), InvalidArgument);
  EXPECT_THROW(decimate(s, 0, false), InvalidArgument);
}

TEST(Decimate, PrefilterRemovesContentAboveCutoff) {
  const std::size_t n = 4096;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t);
    x[t] = std::sin(2.0 * std::numbers::pi * 10.0 * tt / 4096.0) +
           std::sin(2.0 * std::numbers::pi * 1500.0 * tt / 4096.0);
  }
  const SampledSignal s(x, 4096.0);
  const auto filtered = decimate(s, 4, true);
  ASSERT_EQ(filtered.size(), 1024u);
  for (std::size_t t = 0; t < filtered.size(); ++t) {
    const double expect = std::sin(2.0 * std::numbers::pi * 10.0 * static_cast<double>(t) / 1024.0);
    EXPECT_NEAR(filtered[t], expect, 1e-9);
  }
}

TEST(FftLowpass, KeepsPassbandExactly) {
  const std::size_t n = 512;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = std::cos(2.0 * std::numbers::pi * 5.0 * static_cast<double>(t) / 512.0);
  const auto y = fft_lowpass(SampledSignal(x, 512.0), 100.0);
  for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(y[t], x[t], 1e-12);
}
