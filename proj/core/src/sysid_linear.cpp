#include "recursim/sysid_linear.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "recursim/errors.hpp"
#include "recursim/metrics.hpp"

namespace recursim::sysid {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::VectorXcd poly_roots(const std::vector<double>& monic) {
  const auto n = static_cast<Index>(monic.size()) - 1;
  if (n <= 0) return {};
  MatrixXd comp = MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) comp(0, i) = -monic[static_cast<std::size_t>(i + 1)];
  for (Index i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
  return Eigen::EigenSolver<MatrixXd>(comp, false).eigenvalues();
}

std::vector<double> poly_from_roots(const Eigen::VectorXcd& roots) {
  std::vector<std::complex<double>> p{1.0};
  for (Index i = 0; i < roots.size(); ++i) {
    std::vector<std::complex<double>> next(p.size() + 1, 0.0);
    for (std::size_t j = 0; j < p.size(); ++j) {
      next[j] += p[j];
      next[j + 1] -= roots[i] * p[j];
    }
    p = std::move(next);
  }
  std::vector<double> out(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) out[j] = p[j].real();
  return out;
}

// Mirrors roots outside the unit circle back inside.
std::vector<double> stabilize(const std::vector<double>& monic) {
  Eigen::VectorXcd r = poly_roots(monic);
  for (Index i = 0; i < r.size(); ++i) {
    const double mag = std::abs(r[i]);
    if (mag >= 1.0) r[i] = std::polar(std::min(1.0 / mag, 0.99), std::arg(r[i]));
  }
  return poly_from_roots(r);
}

struct OeParams {
  std::size_t nb;
  std::size_t nf;
  std::size_t nk;
};

// theta = [b0 .. b_{nb-1}, f1 .. f_nf]
std::vector<double> simulate_theta(const OeParams& p, const VectorXd& theta,
                                   std::span<const double> u) {
  const std::size_t n = u.size();
  std::vector<double> y(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.nb; ++i) {
      const std::size_t lag = p.nk + i;
      if (t >= lag) acc += theta(static_cast<Index>(i)) * u[t - lag];
    }
    for (std::size_t j = 1; j <= p.nf && j <= t; ++j) {
      acc -= theta(static_cast<Index>(p.nb + j - 1)) * y[t - j];
    }
    y[t] = acc;
  }
  return y;
}

// x / F(q) with zero initial conditions.
std::vector<double> filter_by_f(const OeParams& p, const VectorXd& theta,
                                std::span<const double> x) {
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = x[t];
    for (std::size_t j = 1; j <= p.nf && j <= t; ++j) {
      acc -= theta(static_cast<Index>(p.nb + j - 1)) * out[t - j];
    }
    out[t] = acc;
  }
  return out;
}

bool theta_stable(const OeParams& p, const VectorXd& theta) {
  std::vector<double> f(p.nf + 1, 1.0);
  for (std::size_t j = 1; j <= p.nf; ++j) f[j] = theta(static_cast<Index>(p.nb + j - 1));
  return schur_stable(f);
}

double cost_of(std::span<const double> y, const std::vector<double>& yhat, std::size_t burn) {
  double c = 0.0;
  for (std::size_t t = burn; t < y.size(); ++t) {
    const double e = y[t] - yhat[t];
    c += e * e;
  }
  return c;
}

}  // namespace

bool schur_stable(const std::vector<double>& monic) {
  const Eigen::VectorXcd r = poly_roots(monic);
  for (Index i = 0; i < r.size(); ++i) {
    if (!(std::abs(r[i]) < 1.0)) return false;
  }
  return true;
}

ArPredictor fit_ar_predictor(const SampledSignal& u, std::size_t order) {
  if (order == 0) throw InvalidArgument("predictor order must be at least 1");
  const std::size_t n = u.size();
  if (n < 10 * order) throw InvalidArgument("record must hold at least 10x the predictor order");
  const auto x = u.samples();
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) {
    throw DegenerateInput("constant input gives a rank-deficient predictor regressor");
  }

  const auto rows = static_cast<Index>(n - order);
  const auto cols = static_cast<Index>(order);
  MatrixXd phi(rows, cols);
  VectorXd target(rows);
  for (Index r = 0; r < rows; ++r) {
    const std::size_t t = static_cast<std::size_t>(r) + order;
    target(r) = x[t];
    for (Index k = 0; k < cols; ++k) phi(r, k) = x[t - 1 - static_cast<std::size_t>(k)];
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(phi);
  if (qr.rank() == 0) throw DegenerateInput("predictor regressor has rank zero");
  const VectorXd a = qr.solve(target);

  ArPredictor model;
  model.order = order;
  model.coeffs.assign(a.data(), a.data() + a.size());
  model.fit_rmse = predict_one_step(model, u).rmse;
  return model;
}

Prediction predict_one_step(const ArPredictor& model, const SampledSignal& u) {
  if (model.coeffs.size() != model.order || model.order == 0) {
    throw InvalidArgument("predictor coefficients do not match its order");
  }
  const std::size_t n = u.size();
  if (n <= model.order) throw InvalidArgument("record must be longer than the predictor order");
  const auto x = u.samples();
  std::vector<double> hat(n, 0.0);
  double acc = 0.0;
  for (std::size_t t = model.order; t < n; ++t) {
    double p = 0.0;
    for (std::size_t k = 0; k < model.order; ++k) p += model.coeffs[k] * x[t - 1 - k];
    hat[t] = p;
    const double e = x[t] - p;
    acc += e * e;
  }
  const double rmse = std::sqrt(acc / static_cast<double>(n - model.order));
  return {SampledSignal(std::move(hat), u.fs(), u.period_len()), rmse};
}

void OeModel::validate() const {
  if (nk > 1) throw InvalidArgument("OE delay nk must be 0 or 1");
  if (nb == 0) throw InvalidArgument("OE model needs at least one numerator coefficient");
  if (b.size() != nb) throw InvalidArgument("OE numerator length does not match nb");
  if (f.size() != nf + 1 || f.front() != 1.0) {
    throw InvalidArgument("OE denominator must be monic with nf + 1 coefficients");
  }
}

bool OeModel::stable() const { return schur_stable(f); }

std::size_t oe_burn_in(std::size_t nb, std::size_t nf, std::size_t nk) {
  return std::max({nf, nb + nk, std::size_t{50}});
}

SampledSignal simulate_oe(const OeModel& model, const SampledSignal& u) {
  model.validate();
  if (!model.stable()) throw InvalidArgument("OE denominator is not stable");
  VectorXd theta(static_cast<Index>(model.nb + model.nf));
  for (std::size_t i = 0; i < model.nb; ++i) theta(static_cast<Index>(i)) = model.b[i];
  for (std::size_t j = 1; j <= model.nf; ++j) theta(static_cast<Index>(model.nb + j - 1)) = model.f[j];
  auto y = simulate_theta({model.nb, model.nf, model.nk}, theta, u.samples());
  return SampledSignal(std::move(y), u.fs(), u.period_len());
}

namespace {

// Least squares y(t) + sum f_j y(t-j) = sum b_i u(t-nk-i) over t >= burn,
// with F forced stable.
VectorXd arx_solve(const OeParams& p, std::span<const double> us, std::span<const double> ys,
                   std::size_t burn) {
  const auto rows = static_cast<Index>(us.size() - burn);
  const auto np = static_cast<Index>(p.nb + p.nf);
  MatrixXd phi(rows, np);
  VectorXd target(rows);
  for (Index r = 0; r < rows; ++r) {
    const std::size_t t = burn + static_cast<std::size_t>(r);
    target(r) = ys[t];
    for (std::size_t i = 0; i < p.nb; ++i) phi(r, static_cast<Index>(i)) = us[t - p.nk - i];
    for (std::size_t j = 1; j <= p.nf; ++j) phi(r, static_cast<Index>(p.nb + j - 1)) = -ys[t - j];
  }
  VectorXd theta = Eigen::ColPivHouseholderQR<MatrixXd>(phi).solve(target);
  if (!theta.allFinite()) theta.setZero();
  if (p.nf > 0 && !theta_stable(p, theta)) {
    std::vector<double> f(p.nf + 1, 1.0);
    for (std::size_t j = 1; j <= p.nf; ++j) f[j] = theta(static_cast<Index>(p.nb + j - 1));
    f = stabilize(f);
    for (std::size_t j = 1; j <= p.nf; ++j) theta(static_cast<Index>(p.nb + j - 1)) = f[j];
  }
  return theta;
}

// Steiglitz-McBride: ARX refits on data prefiltered by the current 1/F.
VectorXd steiglitz_mcbride(const OeParams& p, std::span<const double> us,
                           std::span<const double> ys, std::size_t burn, VectorXd theta) {
  for (int k = 0; k < 20; ++k) {
    const std::vector<double> uf = filter_by_f(p, theta, us);
    const std::vector<double> yf = filter_by_f(p, theta, ys);
    const VectorXd next = arx_solve(p, uf, yf, burn);
    const double change = (next - theta).norm() / std::max(theta.norm(), 1e-300);
    theta = next;
    if (change < 1e-10) break;
  }
  return theta;
}

constexpr std::size_t kRandomStarts = 8;

// Random stable denominator; the numerator then solves a linear least-squares
// problem on the 1/F-filtered input.
VectorXd random_start(const OeParams& p, std::span<const double> us, std::span<const double> ys,
                      std::size_t burn, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXcd roots(static_cast<Index>(p.nf));
  Index i = 0;
  while (i < roots.size()) {
    const double r = 0.98 * std::sqrt(unit(rng));
    if (i + 1 < roots.size()) {
      const double ang = std::numbers::pi * unit(rng);
      roots(i++) = std::polar(r, ang);
      roots(i++) = std::polar(r, -ang);
    } else {
      roots(i++) = unit(rng) < 0.5 ? r : -r;
    }
  }
  const std::vector<double> f = poly_from_roots(roots);
  VectorXd theta = VectorXd::Zero(static_cast<Index>(p.nb + p.nf));
  for (std::size_t j = 1; j <= p.nf; ++j) theta(static_cast<Index>(p.nb + j - 1)) = f[j];
  const std::vector<double> uf = filter_by_f(p, theta, us);
  const auto rows = static_cast<Index>(us.size() - burn);
  MatrixXd phi(rows, static_cast<Index>(p.nb));
  VectorXd target(rows);
  for (Index r = 0; r < rows; ++r) {
    const std::size_t t = burn + static_cast<std::size_t>(r);
    target(r) = ys[t];
    for (std::size_t k = 0; k < p.nb; ++k) phi(r, static_cast<Index>(k)) = uf[t - p.nk - k];
  }
  const VectorXd b = Eigen::ColPivHouseholderQR<MatrixXd>(phi).solve(target);
  if (b.allFinite()) theta.head(static_cast<Index>(p.nb)) = b;
  return theta;
}

struct LmResult {
  VectorXd theta;
  std::vector<double> yhat;
  double cost = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

LmResult lm_refine(const OeParams& p, std::span<const double> us, std::span<const double> ys,
                   std::size_t burn, VectorXd theta, const LmOptions& opts, double floor_cost) {
  const std::size_t n = us.size();
  const auto rows = static_cast<Index>(n - burn);
  const auto np = static_cast<Index>(p.nb + p.nf);

  LmResult res;
  res.yhat = simulate_theta(p, theta, us);
  res.cost = cost_of(ys, res.yhat, burn);
  res.converged = res.cost <= floor_cost;
  double lambda = opts.lambda0;
  MatrixXd jac(rows, np);
  VectorXd resid(rows);

  while (!res.converged && res.iterations < opts.max_iterations) {
    ++res.iterations;
    const std::vector<double> uf = filter_by_f(p, theta, us);
    const std::vector<double> yf = filter_by_f(p, theta, res.yhat);
    for (Index r = 0; r < rows; ++r) {
      const std::size_t t = burn + static_cast<std::size_t>(r);
      resid(r) = ys[t] - res.yhat[t];
      for (std::size_t i = 0; i < p.nb; ++i) jac(r, static_cast<Index>(i)) = uf[t - p.nk - i];
      for (std::size_t j = 1; j <= p.nf; ++j) jac(r, static_cast<Index>(p.nb + j - 1)) = -yf[t - j];
    }
    // Reduce to a small triangular problem once per iteration; each damping
    // trial then solves [R; sqrt(lambda) D] s = [Q'r; 0].
    Eigen::HouseholderQR<MatrixXd> qr(jac);
    const MatrixXd rmat = qr.matrixQR().topRows(np).triangularView<Eigen::Upper>();
    const VectorXd qtr = (qr.householderQ().transpose() * resid).head(np);
    const VectorXd diag = jac.colwise().norm().transpose().cwiseMax(1e-300);

    bool accepted = false;
    while (!accepted) {
      MatrixXd aug = MatrixXd::Zero(2 * np, np);
      aug.topRows(np) = rmat;
      aug.bottomRows(np) = (std::sqrt(lambda) * diag).asDiagonal();
      VectorXd rhs = VectorXd::Zero(2 * np);
      rhs.head(np) = qtr;
      const VectorXd step = aug.colPivHouseholderQr().solve(rhs);
      const VectorXd cand = theta + step;
      if (step.allFinite() && (p.nf == 0 || theta_stable(p, cand))) {
        std::vector<double> yc = simulate_theta(p, cand, us);
        const double c = cost_of(ys, yc, burn);
        if (std::isfinite(c) && c <= res.cost) {
          const double rel = (res.cost - c) / std::max(res.cost, std::numeric_limits<double>::min());
          theta = cand;
          res.yhat = std::move(yc);
          res.cost = c;
          lambda = std::max(lambda / opts.lambda_factor, 1e-12);
          accepted = true;
          const double moved = step.norm() / std::max(theta.norm(), 1e-300);
          if ((rel < opts.rel_cost_tol && moved < 1e-6) || res.cost <= floor_cost) res.converged = true;
          break;
        }
      }
      lambda *= opts.lambda_factor;
      if (lambda > 1e16) {
        // No descent direction left at working precision.
        res.converged = true;
        break;
      }
    }
  }
  res.theta = std::move(theta);
  return res;
}

}  // namespace

OeFit fit_oe(const SampledSignal& u, const SampledSignal& y, std::size_t nb, std::size_t nf,
             std::size_t nk, const LmOptions& opts, const std::optional<OeModel>& start) {
  if (u.size() != y.size()) throw InvalidArgument("input and output lengths differ");
  if (u.fs() != y.fs()) throw InvalidArgument("input and output sampling rates differ");
  if (nk > 1) throw InvalidArgument("OE delay nk must be 0 or 1");
  if (nb == 0) throw InvalidArgument("OE model needs at least one numerator coefficient");
  const std::size_t burn = oe_burn_in(nb, nf, nk);
  const std::size_t np = nb + nf;
  if (u.size() < burn + 4 * np) throw InvalidArgument("record too short for the OE model");

  const OeParams p{nb, nf, nk};
  const auto us = u.samples();
  const auto ys = y.samples();
  const std::size_t n = us.size();

  double y_energy = 0.0;
  for (std::size_t t = burn; t < n; ++t) y_energy += ys[t] * ys[t];
  const double floor_cost = 1e-28 * std::max(y_energy, std::numeric_limits<double>::min());

  if (start) {
    start->validate();
    if (start->nb != nb || start->nf != nf || start->nk != nk) {
      throw InvalidArgument("starting model structure does not match the requested fit");
    }
    if (!start->stable()) throw InvalidArgument("starting model is unstable");
  }
  std::vector<VectorXd> starts;
  const VectorXd arx = arx_solve(p, us, ys, burn);
  starts.push_back(arx);
  if (start) {
    VectorXd theta(static_cast<Index>(np));
    for (std::size_t i = 0; i < nb; ++i) theta(static_cast<Index>(i)) = start->b[i];
    for (std::size_t j = 1; j <= nf; ++j) theta(static_cast<Index>(nb + j - 1)) = start->f[j];
    starts.push_back(theta);
  }
  if (nf > 0) {
    starts.push_back(steiglitz_mcbride(p, us, ys, burn, arx));
    std::mt19937_64 rng(0x0e5eedULL + 131 * nb + 17 * nf + nk);
    for (std::size_t k = 0; k < kRandomStarts; ++k) starts.push_back(random_start(p, us, ys, burn, rng));
  }

  LmResult best;
  best.cost = std::numeric_limits<double>::infinity();
  if (starts.size() == 1) {
    best = lm_refine(p, us, ys, burn, starts.front(), opts, floor_cost);
  } else {
    LmOptions screen = opts;
    screen.max_iterations = std::min<std::size_t>(opts.max_iterations, 25);
    for (const auto& s0 : starts) {
      LmResult r = lm_refine(p, us, ys, burn, s0, screen, floor_cost);
      if (r.cost < best.cost) best = std::move(r);
    }
    if (!best.converged) {
      const std::size_t used = best.iterations;
      LmOptions rest = opts;
      rest.max_iterations = opts.max_iterations - std::min(opts.max_iterations, used);
      LmResult r = lm_refine(p, us, ys, burn, best.theta, rest, floor_cost);
      r.iterations += used;
      if (r.cost <= best.cost) best = std::move(r);
    }
  }

  OeFit fit;
  fit.model.nb = nb;
  fit.model.nf = nf;
  fit.model.nk = nk;
  fit.model.b.assign(best.theta.data(), best.theta.data() + nb);
  fit.model.f.assign(nf + 1, 1.0);
  for (std::size_t j = 1; j <= nf; ++j) fit.model.f[j] = best.theta(static_cast<Index>(nb + j - 1));

  const std::span<const double> y_tail(ys.data() + burn, n - burn);
  const std::span<const double> m_tail(best.yhat.data() + burn, n - burn);
  fit.report.rmse = std::sqrt(best.cost / static_cast<double>(n - burn));
  try {
    fit.report.relative_rmse = metrics(y_tail, m_tail).y_relative;
  } catch (const UndefinedRelative&) {
    fit.report.relative_rmse = std::numeric_limits<double>::quiet_NaN();
  }
  fit.report.iterations = best.iterations;
  fit.report.converged = best.converged;
  fit.report.cost_tolerance = opts.rel_cost_tol;
  fit.report.max_iterations = opts.max_iterations;

  // Conditioning of the column-scaled Jacobian at the solution.
  const auto rows = static_cast<Index>(n - burn);
  MatrixXd jac(rows, static_cast<Index>(np));
  const std::vector<double> uf = filter_by_f(p, best.theta, us);
  const std::vector<double> yf = filter_by_f(p, best.theta, best.yhat);
  for (Index r = 0; r < rows; ++r) {
    const std::size_t t = burn + static_cast<std::size_t>(r);
    for (std::size_t i = 0; i < nb; ++i) jac(r, static_cast<Index>(i)) = uf[t - nk - i];
    for (std::size_t j = 1; j <= nf; ++j) jac(r, static_cast<Index>(nb + j - 1)) = -yf[t - j];
  }
  const VectorXd scale = jac.colwise().norm().transpose().cwiseMax(1e-300).cwiseInverse();
  const MatrixXd scaled = jac * scale.asDiagonal();
  const VectorXd sv = Eigen::JacobiSVD<MatrixXd>(scaled).singularValues();
  const double lo = std::max(sv.minCoeff(), std::numeric_limits<double>::min());
  fit.report.condition_estimate = (sv.maxCoeff() / lo) * (sv.maxCoeff() / lo);
  return fit;
}

}  // namespace recursim::sysid
