#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "recursim/metrics.hpp"
#include "recursim/monomials.hpp"
#include "recursim/signals.hpp"
#include "recursim/sysid_linear.hpp"

namespace recursim::pnlss {

/// x(t+1) = A x(t) + B u(t) + E zeta(t)
/// y(t)   = C x(t) + D u(t) + F eta(t)
struct PnlssModel {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
  Eigen::RowVectorXd C;
  double D = 0.0;
  Eigen::MatrixXd E;
  Eigen::RowVectorXd F;
  MonomialBasis basis_state;
  MonomialBasis basis_out;

  std::size_t na() const noexcept { return static_cast<std::size_t>(A.rows()); }
  /// Throws InvalidArgument on inconsistent dimensions.
  void check_dimensions() const;
  double spectral_radius() const;

  /// Linear model with E = 0 and F = 0 on the given bases.
  static PnlssModel from_linear(const Eigen::MatrixXd& A, const Eigen::VectorXd& B,
                                const Eigen::RowVectorXd& C, double D, int max_degree,
                                bool force_direct_zero);
};

struct LinearSs {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
  Eigen::RowVectorXd C;
  double D = 0.0;
};

/// Observable canonical form of a discrete transfer function with monic denominator.
LinearSs oe_to_state_space(const sysid::OeModel& model);

/// OE(nb = na + 1, nf = na, nk = 0) fit converted to observable canonical form.
/// With `force_direct_zero` the fit is OE(na, na, 1) and D = 0.
LinearSs init_linear_ss(const SampledSignal& u, const SampledSignal& y, std::size_t na,
                        bool force_direct_zero = false);

/// Simulates from x0; `x0` empty means rest. Throws InstabilityError on divergence.
SampledSignal simulate_pnlss(const PnlssModel& model, const SampledSignal& u,
                             const Eigen::VectorXd& x0 = {});

struct PnlssFitConfig {
  std::size_t na = 2;
  int degree = 3;
  std::size_t max_iters = 100;
  double lm_lambda0 = 1e-3;
  /// D = 0 and no input-bearing monomials in the output equation.
  bool force_direct_zero = false;
  /// Keep the last realization aside for validation when more than one is given.
  bool hold_out_last = true;
  double rel_cost_tol = 1e-9;
  /// Candidates must stay bounded when the training inputs are scaled by this
  /// factor; 0 disables the check.
  double amplitude_margin = 1.25;
};

struct PnlssFit {
  PnlssModel model;
  sysid::FitReport train;
  ErrorMetrics train_metrics;
  std::optional<ErrorMetrics> validation;
  bool validation_skipped = false;
  /// The fitted model blew up on the held-out input; validation errors are +inf.
  bool validation_diverged = false;
  std::vector<double> cost_history;  // pooled cost after each accepted step
};

PnlssFit fit_pnlss(const std::vector<SampledSignal>& u, const std::vector<SampledSignal>& y,
                   const PnlssFitConfig& config);

// Parameter-vector plumbing shared by the fitter and the gradient tests.

/// Order: vec(A) column-major, B, C, [D], vec(E) column-major, F.
Eigen::VectorXd pack_parameters(const PnlssModel& model, bool include_d);
void unpack_parameters(PnlssModel& model, const Eigen::VectorXd& theta, bool include_d);

/// Simulated output and d y / d theta for `pack_parameters` ordering. The first
/// `warmup` samples are simulated but dropped from both results.
struct Sensitivity {
  Eigen::VectorXd y;
  Eigen::MatrixXd jac;
};
Sensitivity simulate_with_jacobian(const PnlssModel& model, std::span<const double> u,
                                   std::size_t warmup, bool include_d);

}  // namespace recursim::pnlss
