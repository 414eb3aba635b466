#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "recursim/signals.hpp"

namespace recursim {

/// Continuous-time rational transfer function num(s)/den(s), coefficients in
/// ascending powers of s. Construction rejects improper or unstable plants.
class LtiPlant {
 public:
  LtiPlant(std::vector<double> num, std::vector<double> den);

  const std::vector<double>& num() const noexcept { return num_; }
  const std::vector<double>& den() const noexcept { return den_; }
  std::size_t order() const noexcept { return den_.size() - 1; }
  int relative_degree() const noexcept {
    return static_cast<int>(den_.size()) - static_cast<int>(num_.size());
  }
  double dc_gain() const { return num_.front() / den_.front(); }
  Eigen::VectorXcd poles() const;
  /// Largest pole magnitude in Hz.
  double bandwidth_hz() const;
  /// |G(j 2 pi f)|.
  double magnitude(double f_hz) const;

 private:
  std::vector<double> num_;
  std::vector<double> den_;
};

/// m y'' + d y' + k1 y + k3 y^3 = u.
struct DuffingPlant {
  double m = 1.0;
  double d = 0.0;
  double k1 = 1.0;
  double k3 = 0.0;

  void validate() const;
  double resonance_hz() const;
  /// The linear part 1 / (m s^2 + d s + k1).
  LtiPlant linear_part() const;

  /// m = 1, resonance 70 Hz, damping ratio 0.05. k3 makes the RMS cubic
  /// force `cubic_fraction` of the RMS linear force for a Gaussian
  /// displacement of RMS `y_rms`.
  static DuffingPlant silverbox_like(double y_rms, double cubic_fraction = 0.1);
  /// Same, with the force ratio taken on a given linear-response record.
  static DuffingPlant silverbox_like(std::span<const double> y_linear, double cubic_fraction = 0.1);
};

using Plant = std::variant<LtiPlant, DuffingPlant>;

namespace plant {

/// Controllable canonical realization in the normalized variable p = s / w_scale,
/// so that the companion entries stay O(1). Physical dynamics: A = w_scale * a,
/// B = w_scale * b.
struct Realization {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::RowVectorXd c;
  double d = 0.0;
  double w_scale = 1.0;
};

struct DiscreteModel {
  Eigen::MatrixXd ad;
  Eigen::VectorXd bd;
  Eigen::RowVectorXd c;
  double d = 0.0;
};

Realization realize(const LtiPlant& plant);

/// Exact step-invariant discretization (input held over each sample period).
DiscreteModel discretize_zoh(const LtiPlant& plant, double fs);

/// All-pole Butterworth low-pass with unity DC gain.
LtiPlant butterworth_lowpass(int order, double fc_hz);

/// First-order 1 / (s / (2 pi fc) + 1).
LtiPlant first_order_lowpass(double fc_hz);

SampledSignal simulate_lti(const LtiPlant& plant, const SampledSignal& input);

/// Fixed-step RK4, one step per input sample, input held constant over the step.
SampledSignal simulate_duffing(const DuffingPlant& plant, const SampledSignal& input);

SampledSignal simulate(const Plant& plant, const SampledSignal& input);

struct SimChainConfig {
  LtiPlant generator_filter = butterworth_lowpass(4, 100.0);
  /// Virtual-continuous rate is oversample * fs_target.
  std::size_t oversample = 32;
  double noise_u_sigma = 0.0;
  double noise_y_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

struct ChainOutput {
  SampledSignal u;
  SampledSignal y;
};

/// Generator filter -> plant at the virtual rate, then both plant input and
/// output are sampled at fs_target by keeping every R-th sample. The excitation
/// may be given at any rate that divides the virtual rate; it is zero-order held
/// up to it. An LTI plant is simulated as its exact series connection with the
/// generator; a Duffing plant integrates the generator output held per virtual step.
ChainOutput run_chain(const SimChainConfig& config, const Plant& plant,
                      const SampledSignal& excitation, double fs_target);
/// The input half of the chain: generator filter, sampling and input noise.
SampledSignal run_generator(const SimChainConfig& config, const SampledSignal& excitation,
                            double fs_target);

/// g_c(k / fs) for k < len, from the strictly proper part of the plant.
std::vector<double> impulse_invariant(const LtiPlant& plant, double fs, std::size_t len);

/// |g_d(0)| / max_k |g_d(k)| of the impulse-invariant response. The default
/// length covers ten of the slowest time constants.
double direct_term_ratio(const LtiPlant& plant, double fs,
                         std::optional<std::size_t> len = std::nullopt);

}  // namespace plant
}  // namespace recursim
