#include <benchmark/benchmark.h>

#include "recursim/plant_sim.hpp"
#include "recursim/pnlss.hpp"
#include "recursim/signals.hpp"
#include "recursim/sysid_linear.hpp"

using namespace recursim;

namespace {

SampledSignal filtered_noise(std::size_t n, double fs) {
  return plant::simulate_lti(plant::butterworth_lowpass(4, fs / 20.0), signals::gen_white_noise(1, n, 1.0, fs));
}

pnlss::PnlssModel demo_model() {
  Eigen::MatrixXd A(2, 2);
  A << 0.6, 0.3, -0.3, 0.5;
  auto m = pnlss::PnlssModel::from_linear(A, Eigen::Vector2d(1.0, 0.4), Eigen::RowVector2d(0.8, -0.2), 0.0, 3, true);
  m.E.setConstant(0.01);
  m.F.setConstant(-0.01);
  return m;
}

void BM_GenOddMultisine(benchmark::State& state) {
  signals::MultisineSpec spec;
  spec.period_len = static_cast<std::size_t>(state.range(0));
  spec.fs = static_cast<double>(spec.period_len);
  spec.f_hi = spec.fs / 20.0;
  for (auto _ : state) benchmark::DoNotOptimize(signals::gen_odd_multisine(spec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenOddMultisine)->Arg(1024)->Arg(8192);

void BM_PowerSpectrum(benchmark::State& state) {
  const auto x = signals::gen_white_noise(2, static_cast<std::size_t>(state.range(0)), 1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(signals::power_spectrum(x, signals::Window::kHann));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PowerSpectrum)->Arg(1 << 14)->Arg(1 << 18);

void BM_SimulateLti(benchmark::State& state) {
  const auto f = plant::butterworth_lowpass(static_cast<int>(state.range(0)), 100.0);
  const auto x = signals::gen_white_noise(3, 1 << 16, 1.0, 78125.0);
  for (auto _ : state) benchmark::DoNotOptimize(plant::simulate_lti(f, x));
  state.SetItemsProcessed(state.iterations() * (1 << 16));
}
BENCHMARK(BM_SimulateLti)->Arg(1)->Arg(4)->Arg(8);

void BM_SimulateDuffing(benchmark::State& state) {
  const auto p = DuffingPlant::silverbox_like(2e-6);
  const auto x = signals::gen_white_noise(4, 1 << 16, 0.1, 51200.0);
  for (auto _ : state) benchmark::DoNotOptimize(plant::simulate_duffing(p, x));
  state.SetItemsProcessed(state.iterations() * (1 << 16));
}
BENCHMARK(BM_SimulateDuffing);

void BM_FitArPredictor(benchmark::State& state) {
  const auto u = filtered_noise(1 << 15, 20000.0);
  for (auto _ : state) benchmark::DoNotOptimize(sysid::fit_ar_predictor(u, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_FitArPredictor)->Arg(2)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_FitOe(benchmark::State& state) {
  const auto u = filtered_noise(static_cast<std::size_t>(state.range(0)), 20000.0);
  const auto y = plant::simulate_lti(plant::first_order_lowpass(1000.0), u);
  for (auto _ : state) benchmark::DoNotOptimize(sysid::fit_oe(u, y, 2, 2, 0));
}
BENCHMARK(BM_FitOe)->Arg(4096)->Arg(16384)->Unit(benchmark::kMillisecond);

void BM_PnlssJacobian(benchmark::State& state) {
  const auto m = demo_model();
  const auto u = signals::gen_white_noise(5, static_cast<std::size_t>(state.range(0)), 0.5, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(pnlss::simulate_with_jacobian(m, u.samples(), 0, false));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PnlssJacobian)->Arg(1024)->Arg(8192);

void BM_FitPnlss(benchmark::State& state) {
  const auto truth = demo_model();
  std::vector<SampledSignal> us;
  std::vector<SampledSignal> ys;
  for (std::uint64_t r = 0; r < 3; ++r) {
    signals::MultisineSpec spec;
    spec.period_len = 512;
    spec.fs = 1.0;
    spec.f_hi = 0.3;
    spec.rms_amplitude = 0.5;
    spec.seed = r;
    us.push_back(signals::gen_odd_multisine(spec));
    ys.push_back(pnlss::simulate_pnlss(truth, us.back()));
  }
  pnlss::PnlssFitConfig cfg;
  cfg.force_direct_zero = true;
  cfg.max_iters = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(pnlss::fit_pnlss(us, ys, cfg));
}
BENCHMARK(BM_FitPnlss)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
