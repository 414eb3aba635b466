#include "recursim/plant_sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "recursim/errors.hpp"

namespace recursim {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> trim_high(std::vector<double> c) {
  while (c.size() > 1 && c.back() == 0.0) c.pop_back();
  return c;
}

std::complex<double> polyval(const std::vector<double>& c, std::complex<double> s) {
  std::complex<double> acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * s + *it;
  return acc;
}

}  // namespace

LtiPlant::LtiPlant(std::vector<double> num, std::vector<double> den)
    : num_(trim_high(std::move(num))), den_(trim_high(std::move(den))) {
  if (num_.empty() || den_.empty()) throw InvalidArgument("empty transfer function coefficients");
  for (double v : num_) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite numerator coefficient");
  }
  for (double v : den_) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite denominator coefficient");
  }
  if (den_.back() == 0.0) throw InvalidArgument("denominator is identically zero");
  if (num_.size() > den_.size()) throw InvalidArgument("improper plant: deg(num) > deg(den)");
  if (den_.front() == 0.0) throw InvalidArgument("unstable plant: pole at the origin");
  const Eigen::VectorXcd p = poles();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p[i].real() < 0.0)) throw InvalidArgument("unstable plant: pole with non-negative real part");
  }
}

Eigen::VectorXcd LtiPlant::poles() const {
  const std::size_t n = order();
  if (n == 0) return {};
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                               static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i + 1 < n; ++i) comp(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(i)) = 1.0;
  // Roots in p = s / ws keep the companion entries near unity for any bandwidth.
  const double ws = std::pow(std::abs(den_[0] / den_[n]), 1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    comp(0, static_cast<Eigen::Index>(n - 1 - i)) =
        -den_[i] / den_[n] / std::pow(ws, static_cast<double>(n - i));
  }
  return ws * Eigen::EigenSolver<Eigen::MatrixXd>(comp, false).eigenvalues();
}

double LtiPlant::bandwidth_hz() const {
  const Eigen::VectorXcd p = poles();
  double w = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) w = std::max(w, std::abs(p[i]));
  return w / kTwoPi;
}

double LtiPlant::magnitude(double f_hz) const {
  const std::complex<double> s(0.0, kTwoPi * f_hz);
  return std::abs(polyval(num_, s) / polyval(den_, s));
}

void DuffingPlant::validate() const {
  if (!(m > 0.0)) throw InvalidArgument("Duffing mass must be positive");
  if (!(d >= 0.0)) throw InvalidArgument("Duffing damping must be non-negative");
  if (!(k1 > 0.0)) throw InvalidArgument("Duffing linear stiffness must be positive");
  if (!std::isfinite(k3)) throw InvalidArgument("Duffing cubic stiffness must be finite");
}

double DuffingPlant::resonance_hz() const { return std::sqrt(k1 / m) / kTwoPi; }

LtiPlant DuffingPlant::linear_part() const { return LtiPlant({1.0}, {k1, d, m}); }

DuffingPlant DuffingPlant::silverbox_like(double y_rms, double cubic_fraction) {
  DuffingPlant p;
  p.m = 1.0;
  p.k1 = std::pow(kTwoPi * 70.0, 2);
  p.d = 2.0 * 0.05 * std::sqrt(p.k1 * p.m);
  // For Gaussian y, rms(y^3) = sqrt(15) * rms(y)^3.
  p.k3 = y_rms > 0.0 ? cubic_fraction * p.k1 / (std::sqrt(15.0) * y_rms * y_rms) : 0.0;
  return p;
}

DuffingPlant DuffingPlant::silverbox_like(std::span<const double> y_linear, double cubic_fraction) {
  DuffingPlant p = silverbox_like(0.0, cubic_fraction);
  double s2 = 0.0;
  double s6 = 0.0;
  for (double v : y_linear) {
    s2 += v * v;
    s6 += v * v * v * v * v * v;
  }
  if (s6 > 0.0) p.k3 = cubic_fraction * p.k1 * std::sqrt(s2 / s6);
  return p;
}

namespace plant {

Realization realize(const LtiPlant& plant) {
  const std::size_t n = plant.order();
  const auto& den = plant.den();
  std::vector<double> num = plant.num();
  num.resize(n + 1, 0.0);

  Realization r;
  if (n == 0) {
    r.a.resize(0, 0);
    r.b.resize(0);
    r.c.resize(0);
    r.d = num[0] / den[0];
    return r;
  }
  r.w_scale = std::pow(std::abs(den[0] / den[n]), 1.0 / static_cast<double>(n));

  // Coefficients of the same transfer function in p = s / w_scale, monic in p.
  std::vector<double> alpha(n + 1);
  std::vector<double> beta(n + 1);
  const double lead = den[n] * std::pow(r.w_scale, static_cast<double>(n));
  for (std::size_t i = 0; i <= n; ++i) {
    const double wp = std::pow(r.w_scale, static_cast<double>(i));
    alpha[i] = den[i] * wp / lead;
    beta[i] = num[i] * wp / lead;
  }
  r.d = beta[n];

  const auto ni = static_cast<Eigen::Index>(n);
  r.a = Eigen::MatrixXd::Zero(ni, ni);
  for (Eigen::Index i = 0; i + 1 < ni; ++i) r.a(i, i + 1) = 1.0;
  for (Eigen::Index i = 0; i < ni; ++i) r.a(ni - 1, i) = -alpha[static_cast<std::size_t>(i)];
  r.b = Eigen::VectorXd::Zero(ni);
  r.b(ni - 1) = 1.0;
  r.c.resize(ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    r.c(i) = beta[static_cast<std::size_t>(i)] - r.d * alpha[static_cast<std::size_t>(i)];
  }
  return r;
}

DiscreteModel discretize_zoh(const LtiPlant& plant, double fs) {
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be positive");
  const Realization r = realize(plant);
  const Eigen::Index n = r.a.rows();
  DiscreteModel m;
  m.c = r.c;
  m.d = r.d;
  if (n == 0) {
    m.ad.resize(0, 0);
    m.bd.resize(0);
    return m;
  }
  const double tau = r.w_scale / fs;
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = r.a * tau;
  aug.topRightCorner(n, 1) = r.b * tau;
  const Eigen::MatrixXd e = aug.exp();
  m.ad = e.topLeftCorner(n, n);
  m.bd = e.topRightCorner(n, 1);
  return m;
}

LtiPlant butterworth_lowpass(int order, double fc_hz) {
  if (order < 1) throw InvalidArgument("Butterworth order must be at least 1");
  if (!(fc_hz > 0.0)) throw InvalidArgument("Butterworth cutoff must be positive");
  const double wc = kTwoPi * fc_hz;
  // Normalized poles on the unit circle; den(s) = prod (s / wc - p_k).
  std::vector<std::complex<double>> poly{1.0};
  for (int k = 1; k <= order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order - 1) / (2.0 * order);
    const std::complex<double> pk = std::polar(1.0, theta);
    std::vector<std::complex<double>> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i + 1] += poly[i];
      next[i] -= pk * poly[i];
    }
    poly = std::move(next);
  }
  std::vector<double> den(poly.size());
  for (std::size_t i = 0; i < poly.size(); ++i) {
    den[i] = poly[i].real() / std::pow(wc, static_cast<double>(i));
  }
  // Product of the normalized poles is (+/-)1; fix the sign so G(0) = 1.
  const double g0 = den[0];
  for (double& v : den) v /= g0;
  return LtiPlant({1.0}, std::move(den));
}

LtiPlant first_order_lowpass(double fc_hz) {
  if (!(fc_hz > 0.0)) throw InvalidArgument("cutoff must be positive");
  return LtiPlant({1.0}, {1.0, 1.0 / (kTwoPi * fc_hz)});
}

SampledSignal simulate_lti(const LtiPlant& plant, const SampledSignal& input) {
  const double fs = input.fs();
  if (plant.order() > 0 && fs < 8.0 * plant.bandwidth_hz()) {
    throw InvalidArgument("input rate must be at least 8x the plant bandwidth");
  }
  const DiscreteModel m = discretize_zoh(plant, fs);
  const auto n = static_cast<std::size_t>(m.ad.rows());

  // Row-major copies keep the inner loop allocation-free.
  std::vector<double> ad(n * n);
  std::vector<double> bd(n);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) {
    bd[i] = m.bd(static_cast<Eigen::Index>(i));
    c[i] = m.c(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < n; ++j) {
      ad[i * n + j] = m.ad(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }

  std::vector<double> x(n, 0.0);
  std::vector<double> xn(n, 0.0);
  std::vector<double> out(input.size());
  const auto u = input.samples();
  for (std::size_t k = 0; k < u.size(); ++k) {
    double y = m.d * u[k];
    for (std::size_t i = 0; i < n; ++i) y += c[i] * x[i];
    out[k] = y;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = bd[i] * u[k];
      for (std::size_t j = 0; j < n; ++j) acc += ad[i * n + j] * x[j];
      xn[i] = acc;
    }
    std::swap(x, xn);
  }
  return SampledSignal(std::move(out), fs, input.period_len());
}

SampledSignal simulate_duffing(const DuffingPlant& p, const SampledSignal& input) {
  p.validate();
  const double fs = input.fs();
  if (fs < 50.0 * p.resonance_hz()) {
    throw InvalidArgument("Duffing simulation needs at least 50 samples per resonance period");
  }
  const double h = 1.0 / fs;
  const double scale = std::max(input.rms() / p.k1, 1e-300);
  const double limit = 1e6 * scale;

  auto accel = [&p](double y, double v, double u) {
    return (u - p.d * v - p.k1 * y - p.k3 * y * y * y) / p.m;
  };

  std::vector<double> out(input.size());
  double y = 0.0;
  double v = 0.0;
  const auto u = input.samples();
  for (std::size_t k = 0; k < u.size(); ++k) {
    out[k] = y;
    const double uk = u[k];
    const double k1y = v;
    const double k1v = accel(y, v, uk);
    const double k2y = v + 0.5 * h * k1v;
    const double k2v = accel(y + 0.5 * h * k1y, v + 0.5 * h * k1v, uk);
    const double k3y = v + 0.5 * h * k2v;
    const double k3v = accel(y + 0.5 * h * k2y, v + 0.5 * h * k2v, uk);
    const double k4y = v + h * k3v;
    const double k4v = accel(y + h * k3y, v + h * k3v, uk);
    y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if (!std::isfinite(y) || !std::isfinite(v) || std::abs(y) > limit) {
      throw InstabilityError("Duffing integration diverged", k + 1);
    }
  }
  return SampledSignal(std::move(out), fs, input.period_len());
}

SampledSignal simulate(const Plant& plant, const SampledSignal& input) {
  return std::visit(
      [&input](const auto& p) -> SampledSignal {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LtiPlant>) {
          return simulate_lti(p, input);
        } else {
          return simulate_duffing(p, input);
        }
      },
      plant);
}

namespace {

SampledSignal hold_to_virtual(const SimChainConfig& config, const SampledSignal& excitation,
                              double fs_target) {
  if (!(fs_target > 0.0)) throw InvalidArgument("target sampling rate must be positive");
  if (config.oversample == 0) throw InvalidArgument("oversampling factor must be at least 1");
  const double virtual_fs = fs_target * static_cast<double>(config.oversample);
  const double ratio = virtual_fs / excitation.fs();
  const double hold = std::round(ratio);
  if (hold < 1.0 || std::abs(ratio - hold) > 1e-9 * ratio) {
    throw InvalidArgument("excitation rate does not divide the virtual-continuous rate");
  }
  SampledSignal held = hold > 1.0 ? signals::zoh_hold(excitation, static_cast<std::size_t>(hold))
                                  : SampledSignal(excitation.values(), virtual_fs, excitation.period_len());
  if (held.size() % config.oversample != 0) {
    throw InvalidArgument("oversampling factor does not divide the virtual record length");
  }
  return held;
}

std::vector<double> every_rth(const SampledSignal& x, std::size_t r) {
  std::vector<double> out;
  out.reserve(x.size() / r);
  for (std::size_t i = 0; i < x.size(); i += r) out.push_back(x[i]);
  return out;
}

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
  }
  return c;
}

// An LTI plant is driven through the exact series connection so its output
// does not inherit the hold error of the virtual-rate generator output.
SampledSignal simulate_behind_generator(const LtiPlant& generator, const Plant& plant,
                                        const SampledSignal& held, const SampledSignal& uc) {
  if (const auto* lti = std::get_if<LtiPlant>(&plant)) {
    const LtiPlant series(poly_mul(generator.num(), lti->num()), poly_mul(generator.den(), lti->den()));
    return simulate_lti(series, held);
  }
  return simulate(plant, uc);
}

std::optional<std::size_t> sampled_period(const SampledSignal& held, std::size_t r) {
  if (held.period_len() && *held.period_len() % r == 0) return *held.period_len() / r;
  return std::nullopt;
}

// Both noise streams are drawn in lockstep so u is the same whether or not y
// is produced.
void add_noise(const SimChainConfig& config, std::vector<double>& u, std::vector<double>* y) {
  if (!(config.noise_u_sigma > 0.0 || config.noise_y_sigma > 0.0)) return;
  std::mt19937_64 rng(config.noise_seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double eu = n01(rng);
    const double ey = n01(rng);
    u[i] += config.noise_u_sigma * eu;
    if (y) (*y)[i] += config.noise_y_sigma * ey;
  }
}

}  // namespace

ChainOutput run_chain(const SimChainConfig& config, const Plant& plant,
                      const SampledSignal& excitation, double fs_target) {
  const SampledSignal held = hold_to_virtual(config, excitation, fs_target);
  const SampledSignal uc = simulate_lti(config.generator_filter, held);
  const SampledSignal yc = simulate_behind_generator(config.generator_filter, plant, held, uc);
  const std::size_t r = config.oversample;
  std::vector<double> u = every_rth(uc, r);
  std::vector<double> y = every_rth(yc, r);
  add_noise(config, u, &y);
  const auto period = sampled_period(held, r);
  return {SampledSignal(std::move(u), fs_target, period), SampledSignal(std::move(y), fs_target, period)};
}

SampledSignal run_generator(const SimChainConfig& config, const SampledSignal& excitation,
                            double fs_target) {
  const SampledSignal held = hold_to_virtual(config, excitation, fs_target);
  const SampledSignal uc = simulate_lti(config.generator_filter, held);
  std::vector<double> u = every_rth(uc, config.oversample);
  add_noise(config, u, nullptr);
  return SampledSignal(std::move(u), fs_target, sampled_period(held, config.oversample));
}

std::vector<double> impulse_invariant(const LtiPlant& plant, double fs, std::size_t len) {
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be positive");
  std::vector<double> g(len, 0.0);
  const Realization r = realize(plant);
  const Eigen::Index n = r.a.rows();
  if (n == 0 || len == 0) return g;
  const Eigen::MatrixXd phi = (r.a * (r.w_scale / fs)).exp();
  Eigen::VectorXd x = r.b * r.w_scale;
  for (std::size_t k = 0; k < len; ++k) {
    g[k] = r.c.dot(x);
    x = phi * x;
  }
  return g;
}

double direct_term_ratio(const LtiPlant& plant, double fs, std::optional<std::size_t> len) {
  std::size_t count = 16;
  if (len) {
    count = *len;
  } else {
    const Eigen::VectorXcd p = plant.poles();
    double slowest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < p.size(); ++i) slowest = std::min(slowest, -p[i].real());
    if (std::isfinite(slowest)) {
      const double want = std::ceil(10.0 * fs / slowest);
      count = static_cast<std::size_t>(std::clamp(want, 16.0, 1e7));
    }
  }
  const std::vector<double> g = impulse_invariant(plant, fs, count);
  double peak = 0.0;
  for (double v : g) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0.0;
  return std::abs(g.front()) / peak;
}

}  // namespace plant
}  // namespace recursim
