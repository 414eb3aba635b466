#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace recursim::detail {

/// Real-to-complex FFT of arbitrary length n, returning n/2+1 bins.
std::vector<std::complex<double>> rfft(std::span<const double> x);

/// Inverse of `rfft` for a record of length n (includes the 1/n factor).
std::vector<double> irfft(std::span<const std::complex<double>> bins, std::size_t n);

}  // namespace recursim::detail
