#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "recursim/errors.hpp"
#include "recursim/plant_sim.hpp"
#include "recursim/signals.hpp"
#include "recursim/sysid_linear.hpp"

using namespace recursim;
using namespace recursim::sysid;

namespace {

SampledSignal ar1(double a, std::size_t n, std::uint64_t seed) {
  const auto e = signals::gen_white_noise(seed, n, 1.0, 1.0);
  std::vector<double> x(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) x[t] = a * x[t - 1] + e[t];
  return SampledSignal(std::move(x), 1.0);
}

// Direct-form difference equation, independent of simulate_oe.
std::vector<double> oe_filter(const std::vector<double>& b, const std::vector<double>& f, std::size_t nk,
                              std::span<const double> u) {
  std::vector<double> y(u.size(), 0.0);
  for (std::size_t t = 0; t < u.size(); ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (t >= nk + i) acc += b[i] * u[t - nk - i];
    }
    for (std::size_t j = 1; j < f.size(); ++j) {
      if (t >= j) acc -= f[j] * y[t - j];
    }
    y[t] = acc;
  }
  return y;
}

}  // namespace

TEST(ArPredictor, RecoversAr1Coefficient) {
  const auto u = ar1(0.9, 10000, 3);
  const auto model = fit_ar_predictor(u, 1);
  ASSERT_EQ(model.coeffs.size(), 1u);
  EXPECT_GE(model.coeffs[0], 0.88);
  EXPECT_LE(model.coeffs[0], 0.92);

  // Normal-equations oracle over t = 1 .. N-1.
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t t = 1; t < u.size(); ++t) {
    sxx += u[t - 1] * u[t - 1];
    sxy += u[t - 1] * u[t];
  }
  EXPECT_NEAR(model.coeffs[0], sxy / sxx, 1e-10);
}

TEST(ArPredictor, WhiteNoiseIsUnpredictable) {
  const auto u = signals::gen_white_noise(9, 20000, 1.0, 1.0);
  const auto model = fit_ar_predictor(u, 10);
  const double ratio = model.fit_rmse / u.rms();
  EXPECT_GE(ratio, 0.95);
  EXPECT_LE(ratio, 1.0);
}

TEST(ArPredictor, NarrowbandSignalIsPredictable) {
  signals::MultisineSpec spec;
  spec.period_len = 8192;
  spec.fs = 8192.0;
  spec.f_hi = 20.0;
  spec.seed = 4;
  const auto u = signals::gen_odd_multisine(spec);
  const auto model = fit_ar_predictor(u, 20);
  EXPECT_LT(model.fit_rmse / u.rms(), 0.01);
}

TEST(ArPredictor, ConstantInputIsDegenerate) {
  EXPECT_THROW(fit_ar_predictor(SampledSignal(std::vector<double>(100, 2.0), 1.0), 2), DegenerateInput);
}

TEST(ArPredictor, PredictionOnTrainingRecordMatchesFitRmse) {
  const auto u = ar1(0.5, 2000, 5);
  const auto model = fit_ar_predictor(u, 3);
  const auto pred = predict_one_step(model, u);
  EXPECT_NEAR(pred.rmse, model.fit_rmse, 1e-12);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(pred.u_hat[t], 0.0);
}

TEST(ArPredictor, ZeroSignalPredictsZero) {
  ArPredictor model{2, {0.5, -0.2}, 0.0};
  const auto pred = predict_one_step(model, SampledSignal(std::vector<double>(50, 0.0), 1.0));
  for (double v : pred.u_hat.samples()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(pred.rmse, 0.0);
}

TEST(SimulateOe, IdentityAndDelay) {
  const SampledSignal u({1.0, -2.0, 3.0, 0.5}, 1.0);
  OeModel id;
  EXPECT_EQ(simulate_oe(id, u).values(), u.values());

  OeModel delay{1, 0, 1, {0.5}, {1.0}};
  const auto y = simulate_oe(delay, u);
  EXPECT_EQ(y.values(), (std::vector<double>{0.0, 0.5, -1.0, 1.5}));
}

TEST(SimulateOe, RejectsUnstableDenominator) {
  OeModel bad{1, 1, 0, {1.0}, {1.0, -1.5}};
  EXPECT_FALSE(bad.stable());
  EXPECT_THROW(simulate_oe(bad, SampledSignal({1.0, 2.0}, 1.0)), InvalidArgument);
}

TEST(SimulateOe, MatchesDifferenceEquation) {
  const OeModel m{2, 2, 1, {0.3, -0.1}, {1.0, -1.2, 0.5}};
  const auto u = signals::gen_white_noise(1, 500, 1.0, 1.0);
  const auto y = simulate_oe(m, u);
  const auto oracle = oe_filter(m.b, m.f, m.nk, u.samples());
  for (std::size_t t = 0; t < oracle.size(); ++t) EXPECT_NEAR(y[t], oracle[t], 1e-12);
}

TEST(SchurStable, KnownPolynomials) {
  EXPECT_TRUE(schur_stable({1.0, -1.2, 0.5}));
  EXPECT_FALSE(schur_stable({1.0, -2.5, 1.0}));
  EXPECT_TRUE(schur_stable({1.0}));
}

TEST(FitOe, RecoversGeneratingModel) {
  const std::vector<double> b{0.2, 0.1};
  const std::vector<double> f{1.0, -1.3, 0.6};
  const auto u = signals::gen_white_noise(17, 4000, 1.0, 1000.0);
  const SampledSignal y(oe_filter(b, f, 0, u.samples()), 1000.0);
  const auto fit = fit_oe(u, y, 2, 2, 0);
  ASSERT_EQ(fit.model.b.size(), 2u);
  ASSERT_EQ(fit.model.f.size(), 3u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(fit.model.b[i], b[i], 1e-6);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(fit.model.f[i], f[i], 1e-6);
  EXPECT_TRUE(fit.report.converged);

  const auto sim = simulate_oe(fit.model, u);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    num += (sim[t] - y[t]) * (sim[t] - y[t]);
    den += y[t] * y[t];
  }
  EXPECT_LT(std::sqrt(num / den), 1e-6);
}

TEST(FitOe, DelayedModelCannotFitDirectTerm) {
  // First-order plant sampled slowly: the direct term dominates.
  const double fs = 4000.0;
  plant::SimChainConfig cfg;
  cfg.oversample = 16;
  const auto exc = signals::gen_white_noise(6, 8192, 1.0, fs);
  const auto chain = plant::run_chain(cfg, plant::first_order_lowpass(1000.0), exc, fs);
  const auto nk0 = fit_oe(chain.u, chain.y, 2, 2, 0);
  const auto nk1 = fit_oe(chain.u, chain.y, 2, 2, 1);
  EXPECT_GT(nk1.report.rmse, nk0.report.rmse);
}

TEST(FitOe, LengthMismatchIsRejected) {
  const auto u = signals::gen_white_noise(1, 200, 1.0, 1.0);
  const auto y = signals::gen_white_noise(2, 199, 1.0, 1.0);
  EXPECT_THROW(fit_oe(u, y, 1, 1, 0), InvalidArgument);
}

TEST(FitOe, ReportCarriesSettings) {
  const auto u = signals::gen_white_noise(3, 1000, 1.0, 1.0);
  const SampledSignal y(oe_filter({0.5}, {1.0, -0.5}, 1, u.samples()), 1.0);
  LmOptions opts;
  opts.max_iterations = 50;
  const auto fit = fit_oe(u, y, 1, 1, 1, opts);
  EXPECT_EQ(fit.report.max_iterations, 50u);
  EXPECT_LE(fit.report.iterations, 50u);
  EXPECT_TRUE(fit.model.stable());
  EXPECT_NEAR(fit.model.b[0], 0.5, 1e-8);
  EXPECT_NEAR(fit.model.f[1], -0.5, 1e-8);
}

TEST(FitOe, BurnIn) {
  EXPECT_EQ(oe_burn_in(2, 2, 0), 50u);
  EXPECT_EQ(oe_burn_in(40, 60, 30), 70u);
}
