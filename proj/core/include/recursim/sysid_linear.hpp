#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "recursim/signals.hpp"

namespace recursim::sysid {

/// One-step-ahead linear predictor u_hat(t) = sum_k coeffs[k-1] * u(t-k).
struct ArPredictor {
  std::size_t order = 0;
  std::vector<double> coeffs;
  double fit_rmse = 0.0;
};

/// Least squares over t = order .. N-1. Throws DegenerateInput for a constant record.
ArPredictor fit_ar_predictor(const SampledSignal& u, std::size_t order);

struct Prediction {
  SampledSignal u_hat;  // zero for t < order
  double rmse = 0.0;    // over t >= order
};

Prediction predict_one_step(const ArPredictor& model, const SampledSignal& u);

/// y(t) = B(q) / F(q) u(t - nk), B = b0 + b1 q^-1 + ..., F = 1 + f1 q^-1 + ...
/// `f` stores the monic polynomial including its leading 1.
struct OeModel {
  std::size_t nb = 1;
  std::size_t nf = 0;
  std::size_t nk = 0;
  std::vector<double> b{1.0};
  std::vector<double> f{1.0};

  void validate() const;
  bool stable() const;
};

struct FitReport {
  double rmse = 0.0;
  double relative_rmse = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double condition_estimate = 0.0;
  double cost_tolerance = 1e-9;
  std::size_t max_iterations = 200;
};

struct LmOptions {
  std::size_t max_iterations = 200;
  double lambda0 = 1e-3;
  double lambda_factor = 10.0;
  double rel_cost_tol = 1e-9;
};

struct OeFit {
  OeModel model;
  FitReport report;
};

/// Samples excluded from every cost function: max(nf, nb + nk, 50).
std::size_t oe_burn_in(std::size_t nb, std::size_t nf, std::size_t nk);

/// Levenberg-Marquardt on the simulation error, started from an ARX fit.
OeFit fit_oe(const SampledSignal& u, const SampledSignal& y, std::size_t nb, std::size_t nf,
             std::size_t nk, const LmOptions& opts = {},
             const std::optional<OeModel>& start = std::nullopt);

/// Free-run simulation from rest.
SampledSignal simulate_oe(const OeModel& model, const SampledSignal& u);

/// True when every root of the monic polynomial lies strictly inside the unit circle.
bool schur_stable(const std::vector<double>& monic);

}  // namespace recursim::sysid
