#include "fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

namespace recursim::detail {
namespace {

// FFTW's planner is not reentrant; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {}
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  void* ptr;
};

class Plan {
 public:
  explicit Plan(fftw_plan p) : plan_(p) {}
  ~Plan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

}  // namespace

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const std::size_t n = x.size();
  const std::size_t nb = n / 2 + 1;
  FftwBuffer in(sizeof(double) * n);
  FftwBuffer out(sizeof(fftw_complex) * nb);
  auto* in_d = static_cast<double*>(in.ptr);
  auto* out_c = static_cast<fftw_complex*>(out.ptr);
  fftw_plan raw;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    raw = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_d, out_c, FFTW_ESTIMATE);
  }
  Plan plan(raw);
  std::copy(x.begin(), x.end(), in_d);
  plan.execute();
  std::vector<std::complex<double>> result(nb);
  for (std::size_t k = 0; k < nb; ++k) result[k] = {out_c[k][0], out_c[k][1]};
  return result;
}

std::vector<double> irfft(std::span<const std::complex<double>> bins, std::size_t n) {
  const std::size_t nb = n / 2 + 1;
  FftwBuffer in(sizeof(fftw_complex) * nb);
  FftwBuffer out(sizeof(double) * n);
  auto* in_c = static_cast<fftw_complex*>(in.ptr);
  auto* out_d = static_cast<double*>(out.ptr);
  fftw_plan raw;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    raw = fftw_plan_dft_c2r_1d(static_cast<int>(n), in_c, out_d, FFTW_ESTIMATE);
  }
  Plan plan(raw);
  for (std::size_t k = 0; k < nb; ++k) {
    in_c[k][0] = k < bins.size() ? bins[k].real() : 0.0;
    in_c[k][1] = k < bins.size() ? bins[k].imag() : 0.0;
  }
  plan.execute();
  std::vector<double> result(out_d, out_d + n);
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : result) v *= scale;
  return result;
}

}  // namespace recursim::detail
