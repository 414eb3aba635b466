#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "recursim/errors.hpp"
#include "recursim/metrics.hpp"
#include "recursim/plant_sim.hpp"
#include "recursim/pnlss.hpp"
#include "recursim/signals.hpp"

using namespace recursim;
using namespace recursim::pnlss;

namespace {

PnlssModel small_model(int degree, bool force_direct_zero, double nl_scale, std::uint64_t seed) {
  Eigen::MatrixXd A(2, 2);
  A << 0.6, 0.3, -0.3, 0.5;
  Eigen::VectorXd B(2);
  B << 1.0, 0.4;
  Eigen::RowVectorXd C(2);
  C << 0.8, -0.2;
  auto m = PnlssModel::from_linear(A, B, C, force_direct_zero ? 0.0 : 0.1, degree, force_direct_zero);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, nl_scale);
  for (Eigen::Index i = 0; i < m.E.size(); ++i) m.E.data()[i] = n01(rng);
  for (Eigen::Index i = 0; i < m.F.size(); ++i) m.F.data()[i] = n01(rng);
  return m;
}

std::vector<SampledSignal> multisine_set(std::size_t count, std::size_t period, double rms) {
  std::vector<SampledSignal> out;
  for (std::size_t r = 0; r < count; ++r) {
    signals::MultisineSpec spec;
    spec.period_len = period;
    spec.fs = 1.0;
    spec.f_hi = 0.3;
    spec.rms_amplitude = rms;
    spec.seed = 100 + r;
    spec.periods = 2;
    out.push_back(signals::gen_odd_multisine(spec));
  }
  return out;
}

// Steady-state response: simulate three periods and keep the last two.
SampledSignal steady_state(const PnlssModel& m, const SampledSignal& u) {
  const std::size_t p = *u.period_len();
  std::vector<double> ext(u.values().end() - static_cast<std::ptrdiff_t>(p), u.values().end());
  ext.insert(ext.end(), u.values().begin(), u.values().end());
  const auto y = simulate_pnlss(m, SampledSignal(ext, u.fs()));
  return SampledSignal(std::vector<double>(y.values().begin() + static_cast<std::ptrdiff_t>(p), y.values().end()),
                       u.fs(), p);
}

}  // namespace

TEST(SimulatePnlss, LinearModelMatchesStateSpaceRecursion) {
  const auto m = small_model(3, false, 0.0, 1);
  const auto u = signals::gen_white_noise(4, 300, 1.0, 1.0);
  const auto y = simulate_pnlss(m, u);
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  for (std::size_t t = 0; t < u.size(); ++t) {
    EXPECT_NEAR(y[t], m.C.dot(x) + m.D * u[t], 1e-12);
    x = m.A * x + m.B * u[t];
  }
}

TEST(SimulatePnlss, ZeroInputFromRestIsZero) {
  const auto m = small_model(3, false, 0.1, 2);
  const auto y = simulate_pnlss(m, SampledSignal(std::vector<double>(100, 0.0), 1.0));
  for (double v : y.samples()) EXPECT_EQ(v, 0.0);
}

TEST(SimulatePnlss, NoDirectFeedthroughWhenForcedZero) {
  const auto m = small_model(3, true, 0.05, 3);
  auto base = signals::gen_white_noise(5, 50, 0.5, 1.0).values();
  auto bumped = base;
  bumped[20] += 1.0;
  const auto y0 = simulate_pnlss(m, SampledSignal(base, 1.0));
  const auto y1 = simulate_pnlss(m, SampledSignal(bumped, 1.0));
  for (std::size_t t = 0; t <= 20; ++t) EXPECT_EQ(y0[t], y1[t]);
  EXPECT_NE(y0[21], y1[21]);
}

TEST(SimulatePnlss, DivergenceReportsStep) {
  auto m = small_model(2, false, 0.0, 4);
  m.A << 1.5, 0.0, 0.0, 1.5;
  try {
    simulate_pnlss(m, SampledSignal(std::vector<double>(5000, 1.0), 1.0));
    FAIL() << "expected divergence";
  } catch (const InstabilityError& e) {
    EXPECT_GT(e.step(), 1u);
  }
}

TEST(SimulatePnlss, RejectsBadInitialState) {
  const auto m = small_model(2, false, 0.0, 5);
  EXPECT_THROW(simulate_pnlss(m, SampledSignal({1.0, 2.0}, 1.0), Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST(PnlssJacobian, MatchesCentralDifferences) {
  for (bool include_d : {true, false}) {
    const auto m = small_model(3, !include_d, 0.05, 6);
    const auto u = signals::gen_white_noise(7, 200, 0.3, 1.0);
    const std::size_t warmup = 20;
    const auto sens = simulate_with_jacobian(m, u.samples(), warmup, include_d);
    const Eigen::VectorXd theta = pack_parameters(m, include_d);
    Eigen::MatrixXd fd(sens.jac.rows(), sens.jac.cols());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(theta(k)));
      PnlssModel mp = m;
      PnlssModel mm = m;
      Eigen::VectorXd tp = theta;
      Eigen::VectorXd tm = theta;
      tp(k) += h;
      tm(k) -= h;
      unpack_parameters(mp, tp, include_d);
      unpack_parameters(mm, tm, include_d);
      const auto yp = simulate_with_jacobian(mp, u.samples(), warmup, include_d).y;
      const auto ym = simulate_with_jacobian(mm, u.samples(), warmup, include_d).y;
      fd.col(k) = (yp - ym) / (2.0 * h);
    }
    const double rel = (fd - sens.jac).norm() / sens.jac.norm();
    EXPECT_LT(rel, 1e-5) << "include_d " << include_d;
  }
}

TEST(PnlssParameters, PackUnpackRoundTrip) {
  const auto m = small_model(3, false, 0.2, 8);
  const auto theta = pack_parameters(m, true);
  PnlssModel copy = PnlssModel::from_linear(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2),
                                            Eigen::RowVectorXd::Zero(2), 0.0, 3, false);
  unpack_parameters(copy, theta, true);
  EXPECT_EQ(pack_parameters(copy, true), theta);
  EXPECT_THROW(unpack_parameters(copy, Eigen::VectorXd::Zero(3), true), InvalidArgument);
}

TEST(InitLinearSs, RecoversKnownLinearSystem) {
  const auto truth = small_model(2, false, 0.0, 9);
  const auto u = signals::gen_white_noise(10, 3000, 1.0, 1.0);
  const auto y = simulate_pnlss(truth, u);
  const auto ss = init_linear_ss(u, y, 2);
  const auto fitted = PnlssModel::from_linear(ss.A, ss.B, ss.C, ss.D, 2, false);
  const auto ym = simulate_pnlss(fitted, u);
  EXPECT_LT(metrics(y, ym).y_relative, 1e-6);
}

TEST(InitLinearSs, StaticGain) {
  const auto u = signals::gen_white_noise(11, 500, 1.0, 1.0);
  std::vector<double> y(u.size());
  for (std::size_t t = 0; t < u.size(); ++t) y[t] = 2.0 * u[t];
  const auto ss = init_linear_ss(u, SampledSignal(y, 1.0), 1);
  EXPECT_NEAR(ss.A(0, 0), 0.0, 1e-6);
  const double dc = ss.D + ss.C.dot(ss.B) / (1.0 - ss.A(0, 0));
  EXPECT_NEAR(ss.D, 2.0, 1e-6);
  EXPECT_NEAR(dc, 2.0, 1e-6);
}

TEST(InitLinearSs, CapturesLowLevelDuffingResponse) {
  const double fs = 800.0;
  plant::SimChainConfig cfg;
  cfg.oversample = 32;
  signals::MultisineSpec spec;
  spec.period_len = 800;
  spec.fs = fs;
  spec.f_hi = 100.0;
  spec.rms_amplitude = 0.127;
  spec.seed = 12;
  spec.periods = 3;
  const auto exc = signals::gen_odd_multisine(spec);
  const auto lin = plant::run_chain(cfg, DuffingPlant::silverbox_like(0.0).linear_part(), exc, fs);
  // Low excitation: cubic force a hundredth of the linear one.
  const auto duff = DuffingPlant::silverbox_like(lin.y.samples(), 0.01);
  const auto out = plant::run_chain(cfg, duff, exc, fs);
  const auto u = out.u.slice(800, 1600);
  const auto y = out.y.slice(800, 1600);
  const auto ss = init_linear_ss(u, y, 2, true);
  const auto m = PnlssModel::from_linear(ss.A, ss.B, ss.C, ss.D, 3, true);
  const auto ym = simulate_pnlss(m, u);
  const double rel = metrics(y.slice(200, 1400), ym.slice(200, 1400)).y_relative;
  EXPECT_LT(rel * rel, 0.1);
}

TEST(FitPnlss, RecoversSmallNonlinearModel) {
  const auto truth = small_model(2, false, 0.05, 13);
  const auto us = multisine_set(4, 512, 0.5);
  std::vector<SampledSignal> ys;
  for (const auto& u : us) ys.push_back(steady_state(truth, u));
  PnlssFitConfig cfg;
  cfg.na = 2;
  cfg.degree = 2;
  cfg.max_iters = 200;
  const auto fit = fit_pnlss(us, ys, cfg);
  ASSERT_TRUE(fit.validation.has_value());
  EXPECT_FALSE(fit.validation_skipped);
  EXPECT_LT(fit.validation->y_relative, 1e-4);
  EXPECT_LT(fit.train_metrics.y_relative, 1e-4);
}

TEST(FitPnlss, LinearDataLeavesNonlinearTermsSmall) {
  const auto truth = small_model(3, false, 0.0, 14);
  const auto us = multisine_set(3, 512, 0.5);
  std::vector<SampledSignal> ys;
  for (const auto& u : us) ys.push_back(steady_state(truth, u));
  PnlssFitConfig cfg;
  cfg.max_iters = 30;
  const auto fit = fit_pnlss(us, ys, cfg);
  PnlssModel lin = fit.model;
  lin.E.setZero();
  lin.F.setZero();
  const auto full = steady_state(fit.model, us[0]);
  const auto reduced = steady_state(lin, us[0]);
  double diff = 0.0;
  double power = 0.0;
  for (std::size_t t = 0; t < full.size(); ++t) {
    diff += (full[t] - reduced[t]) * (full[t] - reduced[t]);
    power += full[t] * full[t];
  }
  EXPECT_LT(diff / power, 0.01);
}

TEST(FitPnlss, SingleRealizationSkipsValidation) {
  const auto truth = small_model(2, false, 0.0, 15);
  const auto us = multisine_set(1, 256, 0.5);
  const std::vector<SampledSignal> ys{steady_state(truth, us[0])};
  PnlssFitConfig cfg;
  cfg.degree = 2;
  cfg.max_iters = 5;
  const auto fit = fit_pnlss(us, ys, cfg);
  EXPECT_TRUE(fit.validation_skipped);
  EXPECT_FALSE(fit.validation.has_value());
}

TEST(FitPnlss, CostHistoryIsMonotone) {
  const auto truth = small_model(2, false, 0.05, 16);
  const auto us = multisine_set(3, 256, 0.5);
  std::vector<SampledSignal> ys;
  for (const auto& u : us) ys.push_back(steady_state(truth, u));
  PnlssFitConfig cfg;
  cfg.degree = 2;
  cfg.max_iters = 20;
  const auto fit = fit_pnlss(us, ys, cfg);
  for (std::size_t i = 1; i < fit.cost_history.size(); ++i) {
    EXPECT_LE(fit.cost_history[i], fit.cost_history[i - 1]);
  }
}

TEST(FitPnlss, RejectsMismatchedRealizations) {
  const auto us = multisine_set(2, 256, 0.5);
  std::vector<SampledSignal> ys{us[0]};
  EXPECT_THROW(fit_pnlss(us, ys, {}), InvalidArgument);
  PnlssFitConfig bad;
  bad.degree = 1;
  EXPECT_THROW(fit_pnlss(us, us, bad), InvalidArgument);
}

TEST(OeToStateSpace, MatchesTransferFunction) {
  const sysid::OeModel oe{2, 2, 1, {0.3, -0.1}, {1.0, -1.2, 0.5}};
  const auto ss = oe_to_state_space(oe);
  const auto m = PnlssModel::from_linear(ss.A, ss.B, ss.C, ss.D, 2, false);
  const auto u = signals::gen_white_noise(17, 300, 1.0, 1.0);
  const auto y_ss = simulate_pnlss(m, u);
  const auto y_oe = sysid::simulate_oe(oe, u);
  for (std::size_t t = 0; t < u.size(); ++t) EXPECT_NEAR(y_ss[t], y_oe[t], 1e-12);
}
