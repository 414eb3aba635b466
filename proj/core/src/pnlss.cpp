#include "recursim/pnlss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "recursim/errors.hpp"

namespace recursim::pnlss {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kStateLimit = 1e10;

struct Layout {
  Index na, nz, ne;
  bool include_d;
  Index oA, oB, oC, oD, oE, oF, total;

  Layout(const PnlssModel& m, bool with_d)
      : na(static_cast<Index>(m.na())),
        nz(static_cast<Index>(m.basis_state.size())),
        ne(static_cast<Index>(m.basis_out.size())),
        include_d(with_d) {
    oA = 0;
    oB = oA + na * na;
    oC = oB + na;
    oD = oC + na;
    oE = oD + (include_d ? 1 : 0);
    oF = oE + na * nz;
    total = oF + ne;
  }
};

// Periodic records are preceded by their last period so the cost sees the
// steady state; otherwise a fixed burn-in is simulated and dropped.
struct Prepared {
  std::vector<double> u;
  std::size_t warmup = 0;
  std::size_t target_offset = 0;
};

Prepared prepare(const SampledSignal& u) {
  Prepared p;
  const auto x = u.samples();
  const auto period = u.period_len();
  if (period && *period < x.size()) {
    p.warmup = *period;
    p.u.reserve(x.size() + *period);
    p.u.insert(p.u.end(), x.end() - static_cast<std::ptrdiff_t>(*period), x.end());
    p.u.insert(p.u.end(), x.begin(), x.end());
  } else {
    p.warmup = std::min<std::size_t>(50, x.size() / 4);
    p.target_offset = p.warmup;
    p.u.assign(x.begin(), x.end());
  }
  return p;
}

// Runs the recursion, optionally recording the states.
std::vector<double> run(const PnlssModel& m, std::span<const double> u, const VectorXd& x0,
                        MatrixXd* states) {
  const Index na = m.A.rows();
  VectorXd x = x0.size() == 0 ? VectorXd::Zero(na) : x0;
  std::vector<double> y(u.size());
  if (states) states->resize(na, static_cast<Index>(u.size()));
  for (std::size_t t = 0; t < u.size(); ++t) {
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(na));
    if (states) states->col(static_cast<Index>(t)) = x;
    double yt = m.C.dot(x) + m.D * u[t];
    if (m.F.size() > 0) yt += m.F.dot(m.basis_out.evaluate(xs, u[t]));
    y[t] = yt;
    VectorXd xn = m.A * x + m.B * u[t];
    if (m.E.cols() > 0) xn += m.E * m.basis_state.evaluate(xs, u[t]);
    if (!xn.allFinite() || xn.norm() > kStateLimit) {
      throw InstabilityError("PNLSS state diverged", t + 1);
    }
    x = std::move(xn);
  }
  return y;
}

double pooled_cost(const PnlssModel& m, const std::vector<Prepared>& data,
                   const std::vector<std::span<const double>>& targets) {
  double c = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const std::vector<double> y = run(m, data[r].u, {}, nullptr);
    const auto& tgt = targets[r];
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      const double e = tgt[i] - y[data[r].warmup + i];
      c += e * e;
    }
  }
  return c;
}

SampledSignal concat(const std::vector<SampledSignal>& parts) {
  std::vector<double> all;
  for (const auto& p : parts) all.insert(all.end(), p.samples().begin(), p.samples().end());
  return SampledSignal(std::move(all), parts.front().fs());
}

// True when the model stays bounded on every training input scaled by
// `margin`: no blow-up and an output peak within a generous multiple of the
// nominal one.
bool amplitude_margin_ok(const PnlssModel& m, const std::vector<Prepared>& data, double margin) {
  if (!(margin > 0.0)) return true;
  try {
    for (const auto& d : data) {
      const std::vector<double> nominal = run(m, d.u, {}, nullptr);
      std::vector<double> scaled(d.u.size());
      for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = margin * d.u[i];
      const std::vector<double> y = run(m, scaled, {}, nullptr);
      double peak_nom = 0.0;
      double peak = 0.0;
      for (double v : nominal) peak_nom = std::max(peak_nom, std::abs(v));
      for (double v : y) peak = std::max(peak, std::abs(v));
      if (!(peak <= 10.0 * margin * peak_nom)) return false;
    }
  } catch (const InstabilityError&) {
    return false;
  }
  return true;
}

}  // namespace

void PnlssModel::check_dimensions() const {
  const Index na = A.rows();
  if (na < 1 || A.cols() != na) throw InvalidArgument("A must be square and non-empty");
  if (B.size() != na || C.size() != na) throw InvalidArgument("B and C must have na entries");
  if (basis_state.state_dim() != static_cast<std::size_t>(na) ||
      basis_out.state_dim() != static_cast<std::size_t>(na)) {
    throw InvalidArgument("monomial bases do not match the state dimension");
  }
  if (E.rows() != na || E.cols() != static_cast<Index>(basis_state.size())) {
    throw InvalidArgument("E must be na x n_zeta");
  }
  if (F.size() != static_cast<Index>(basis_out.size())) throw InvalidArgument("F must have n_eta entries");
}

double PnlssModel::spectral_radius() const {
  const Eigen::VectorXcd ev = Eigen::EigenSolver<MatrixXd>(A, false).eigenvalues();
  double r = 0.0;
  for (Index i = 0; i < ev.size(); ++i) r = std::max(r, std::abs(ev[i]));
  return r;
}

PnlssModel PnlssModel::from_linear(const MatrixXd& A, const VectorXd& B, const Eigen::RowVectorXd& C,
                                   double D, int max_degree, bool force_direct_zero) {
  PnlssModel m;
  m.A = A;
  m.B = B;
  m.C = C;
  m.D = force_direct_zero ? 0.0 : D;
  const auto na = static_cast<std::size_t>(A.rows());
  m.basis_state = MonomialBasis::full(na, max_degree);
  m.basis_out = force_direct_zero ? m.basis_state.without_input() : m.basis_state;
  m.E = MatrixXd::Zero(A.rows(), static_cast<Index>(m.basis_state.size()));
  m.F = Eigen::RowVectorXd::Zero(static_cast<Index>(m.basis_out.size()));
  m.check_dimensions();
  return m;
}

LinearSs oe_to_state_space(const sysid::OeModel& model) {
  model.validate();
  const std::size_t n = std::max(model.nf, model.nk + model.nb - 1);
  std::vector<double> alpha(n + 1, 0.0);
  std::vector<double> beta(n + 1, 0.0);
  for (std::size_t j = 0; j <= model.nf; ++j) alpha[j] = model.f[j];
  for (std::size_t i = 0; i < model.nb; ++i) beta[model.nk + i] = model.b[i];

  LinearSs ss;
  ss.D = beta[0];
  const auto ni = static_cast<Index>(n);
  ss.A = MatrixXd::Zero(ni, ni);
  ss.B = VectorXd::Zero(ni);
  ss.C = Eigen::RowVectorXd::Zero(ni);
  if (n == 0) return ss;
  for (Index i = 0; i < ni; ++i) {
    ss.A(i, 0) = -alpha[static_cast<std::size_t>(i) + 1];
    if (i + 1 < ni) ss.A(i, i + 1) = 1.0;
    ss.B(i) = beta[static_cast<std::size_t>(i) + 1] - ss.D * alpha[static_cast<std::size_t>(i) + 1];
  }
  ss.C(0) = 1.0;
  return ss;
}

LinearSs init_linear_ss(const SampledSignal& u, const SampledSignal& y, std::size_t na,
                        bool force_direct_zero) {
  if (na == 0) throw InvalidArgument("state dimension must be at least 1");
  if (u.size() < 20 * na) throw InvalidArgument("record must hold at least 20x the state dimension");
  const std::size_t nb = force_direct_zero ? na : na + 1;
  const std::size_t nk = force_direct_zero ? 1 : 0;
  const sysid::OeFit fit = sysid::fit_oe(u, y, nb, na, nk);
  return oe_to_state_space(fit.model);
}

SampledSignal simulate_pnlss(const PnlssModel& model, const SampledSignal& u, const VectorXd& x0) {
  model.check_dimensions();
  if (x0.size() != 0 && x0.size() != model.A.rows()) {
    throw InvalidArgument("initial state length does not match the model");
  }
  auto y = run(model, u.samples(), x0, nullptr);
  return SampledSignal(std::move(y), u.fs(), u.period_len());
}

VectorXd pack_parameters(const PnlssModel& m, bool include_d) {
  const Layout L(m, include_d);
  VectorXd th(L.total);
  th.segment(L.oA, L.na * L.na) = Eigen::Map<const VectorXd>(m.A.data(), L.na * L.na);
  th.segment(L.oB, L.na) = m.B;
  th.segment(L.oC, L.na) = m.C.transpose();
  if (include_d) th(L.oD) = m.D;
  th.segment(L.oE, L.na * L.nz) = Eigen::Map<const VectorXd>(m.E.data(), L.na * L.nz);
  th.segment(L.oF, L.ne) = m.F.transpose();
  return th;
}

void unpack_parameters(PnlssModel& m, const VectorXd& th, bool include_d) {
  const Layout L(m, include_d);
  if (th.size() != L.total) throw InvalidArgument("parameter vector has the wrong length");
  m.A = Eigen::Map<const MatrixXd>(th.data() + L.oA, L.na, L.na);
  m.B = th.segment(L.oB, L.na);
  m.C = th.segment(L.oC, L.na).transpose();
  if (include_d) m.D = th(L.oD);
  m.E = Eigen::Map<const MatrixXd>(th.data() + L.oE, L.na, L.nz);
  m.F = th.segment(L.oF, L.ne).transpose();
}

Sensitivity simulate_with_jacobian(const PnlssModel& m, std::span<const double> u,
                                   std::size_t warmup, bool include_d) {
  m.check_dimensions();
  const Layout L(m, include_d);
  const auto n = u.size();
  if (warmup > n) throw InvalidArgument("warm-up longer than the record");

  Sensitivity s;
  s.y.resize(static_cast<Index>(n - warmup));
  s.jac.setZero(static_cast<Index>(n - warmup), L.total);

  VectorXd x = VectorXd::Zero(L.na);
  MatrixXd jx = MatrixXd::Zero(L.na, L.total);
  MatrixXd dzdx, dedx;
  VectorXd dzdu, dedu;
  Eigen::RowVectorXd jy(L.total);
  for (std::size_t t = 0; t < n; ++t) {
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(L.na));
    const double ut = u[t];
    const VectorXd zeta = m.basis_state.evaluate(xs, ut);
    const VectorXd eta = m.basis_out.evaluate(xs, ut);
    m.basis_state.jacobian(xs, ut, dzdx, dzdu);
    m.basis_out.jacobian(xs, ut, dedx, dedu);

    if (t >= warmup) {
      const auto row = static_cast<Index>(t - warmup);
      Eigen::RowVectorXd cx = m.C;
      if (L.ne > 0) cx += m.F * dedx;
      jy.noalias() = cx * jx;
      jy.segment(L.oC, L.na) += x.transpose();
      if (include_d) jy(L.oD) += ut;
      jy.segment(L.oF, L.ne) += eta.transpose();
      s.jac.row(row) = jy;
      double yt = m.C.dot(x) + m.D * ut;
      if (L.ne > 0) yt += m.F.dot(eta);
      s.y(row) = yt;
    }

    MatrixXd ax = m.A;
    if (L.nz > 0) ax += m.E * dzdx;
    MatrixXd jxn = ax * jx;
    for (Index i = 0; i < L.na; ++i) {
      for (Index j = 0; j < L.na; ++j) jxn(i, L.oA + i + j * L.na) += x(j);
      jxn(i, L.oB + i) += ut;
      for (Index j = 0; j < L.nz; ++j) jxn(i, L.oE + i + j * L.na) += zeta(j);
    }
    VectorXd xn = m.A * x + m.B * ut;
    if (L.nz > 0) xn += m.E * zeta;
    if (!xn.allFinite() || xn.norm() > kStateLimit) {
      throw InstabilityError("PNLSS state diverged", t + 1);
    }
    x = std::move(xn);
    jx = std::move(jxn);
  }
  return s;
}

PnlssFit fit_pnlss(const std::vector<SampledSignal>& u, const std::vector<SampledSignal>& y,
                   const PnlssFitConfig& cfg) {
  if (u.empty() || u.size() != y.size()) {
    throw InvalidArgument("need at least one realization with matching input and output");
  }
  if (cfg.na == 0) throw InvalidArgument("state dimension must be at least 1");
  if (cfg.degree < 2) throw InvalidArgument("monomial degree must be at least 2");
  for (std::size_t r = 0; r < u.size(); ++r) {
    if (u[r].size() != y[r].size()) throw InvalidArgument("realization input/output lengths differ");
    if (u[r].size() != u[0].size() || u[r].fs() != u[0].fs() || y[r].fs() != u[0].fs()) {
      throw InvalidArgument("realizations must share length and sampling rate");
    }
  }

  PnlssFit out;
  const bool hold_out = cfg.hold_out_last && u.size() > 1;
  out.validation_skipped = !hold_out;
  const std::size_t n_train = hold_out ? u.size() - 1 : u.size();
  const std::vector<SampledSignal> u_train(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<SampledSignal> y_train(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n_train));

  const LinearSs lin = init_linear_ss(concat(u_train), concat(y_train), cfg.na, cfg.force_direct_zero);
  PnlssModel model = PnlssModel::from_linear(lin.A, lin.B, lin.C, lin.D, cfg.degree, cfg.force_direct_zero);
  if (model.spectral_radius() >= 1.0) throw InvalidArgument("linear initialization is not stable");

  std::vector<Prepared> data;
  std::vector<std::span<const double>> targets;
  for (std::size_t r = 0; r < n_train; ++r) {
    data.push_back(prepare(u_train[r]));
    const auto ys = y_train[r].samples();
    targets.emplace_back(ys.data() + data.back().target_offset, ys.size() - data.back().target_offset);
  }

  // Normalize states to unit RMS over the training data.
  {
    VectorXd ss = VectorXd::Zero(model.A.rows());
    std::size_t count = 0;
    for (const auto& d : data) {
      MatrixXd states;
      run(model, d.u, {}, &states);
      const MatrixXd tail = states.rightCols(states.cols() - static_cast<Index>(d.warmup));
      ss += tail.rowwise().squaredNorm();
      count += static_cast<std::size_t>(tail.cols());
    }
    VectorXd rms = (ss / static_cast<double>(count)).cwiseSqrt();
    for (Index i = 0; i < rms.size(); ++i) {
      if (!(rms(i) > 0.0) || !std::isfinite(rms(i))) rms(i) = 1.0;
    }
    const VectorXd inv = rms.cwiseInverse();
    model.A = inv.asDiagonal() * model.A * rms.asDiagonal();
    model.B = inv.asDiagonal() * model.B;
    model.C = model.C * rms.asDiagonal();
  }

  const bool include_d = !cfg.force_direct_zero;
  double y_energy = 0.0;
  for (const auto& tgt : targets) {
    for (double v : tgt) y_energy += v * v;
  }
  const double floor_cost = 1e-28 * std::max(y_energy, std::numeric_limits<double>::min());

  double cost = pooled_cost(model, data, targets);
  out.cost_history.push_back(cost);
  VectorXd theta = pack_parameters(model, include_d);
  const Index np = theta.size();
  double lambda = cfg.lm_lambda0;
  bool converged = cost <= floor_cost;
  std::size_t iter = 0;
  MatrixXd jtj(np, np);
  VectorXd grad(np);

  auto accumulate = [&]() {
    jtj.setZero();
    grad.setZero();
    for (std::size_t r = 0; r < data.size(); ++r) {
      const Sensitivity s = simulate_with_jacobian(model, data[r].u, data[r].warmup, include_d);
      const auto& tgt = targets[r];
      // Row i of the sensitivity lines up with target sample i.
      const Index rows = static_cast<Index>(tgt.size());
      VectorXd res(rows);
      for (Index i = 0; i < rows; ++i) res(i) = tgt[static_cast<std::size_t>(i)] - s.y(i);
      jtj.noalias() += s.jac.transpose() * s.jac;
      grad.noalias() += s.jac.transpose() * res;
    }
  };

  while (!converged && iter < cfg.max_iters) {
    ++iter;
    accumulate();
    const VectorXd diag = jtj.diagonal().cwiseMax(1e-300);
    bool accepted = false;
    while (!accepted) {
      MatrixXd lhs = jtj;
      lhs.diagonal() += lambda * diag;
      const VectorXd step = lhs.ldlt().solve(grad);
      bool ok = step.allFinite();
      double c = std::numeric_limits<double>::infinity();
      PnlssModel cand = model;
      if (ok) {
        unpack_parameters(cand, theta + step, include_d);
        ok = cand.spectral_radius() < 1.0;
      }
      if (ok) {
        try {
          c = pooled_cost(cand, data, targets);
          ok = amplitude_margin_ok(cand, data, cfg.amplitude_margin);
        } catch (const InstabilityError&) {
          ok = false;
        }
      }
      if (ok && std::isfinite(c) && c <= cost) {
        const double rel = (cost - c) / std::max(cost, std::numeric_limits<double>::min());
        model = std::move(cand);
        theta += step;
        cost = c;
        out.cost_history.push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < cfg.rel_cost_tol || cost <= floor_cost) converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e16) {
        converged = true;
        break;
      }
    }
  }

  out.model = model;
  std::size_t total = 0;
  for (const auto& tgt : targets) total += tgt.size();
  out.train.rmse = std::sqrt(cost / static_cast<double>(total));
  out.train.iterations = iter;
  out.train.converged = converged;
  out.train.cost_tolerance = cfg.rel_cost_tol;
  out.train.max_iterations = cfg.max_iters;
  {
    std::vector<double> meas;
    std::vector<double> sim;
    for (std::size_t r = 0; r < data.size(); ++r) {
      const std::vector<double> ys = run(model, data[r].u, {}, nullptr);
      meas.insert(meas.end(), targets[r].begin(), targets[r].end());
      sim.insert(sim.end(), ys.begin() + static_cast<std::ptrdiff_t>(data[r].warmup), ys.end());
    }
    out.train_metrics = metrics(meas, sim);
    out.train.relative_rmse = out.train_metrics.y_relative;
  }
  {
    accumulate();
    const VectorXd d = jtj.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const MatrixXd scaled = d.asDiagonal() * jtj * d.asDiagonal();
    const VectorXd ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(scaled, Eigen::EigenvaluesOnly).eigenvalues();
    out.train.condition_estimate = ev.maxCoeff() / std::max(ev.minCoeff(), std::numeric_limits<double>::min());
  }

  if (hold_out) {
    const Prepared v = prepare(u.back());
    try {
      const std::vector<double> ys = run(model, v.u, {}, nullptr);
      const auto meas = y.back().samples();
      const std::span<const double> mt(meas.data() + v.target_offset, meas.size() - v.target_offset);
      const std::span<const double> st(ys.data() + v.warmup, mt.size());
      out.validation = metrics(mt, st);
    } catch (const InstabilityError&) {
      const double inf = std::numeric_limits<double>::infinity();
      out.validation = ErrorMetrics{inf, inf};
      out.validation_diverged = true;
    }
  }
  return out;
}

}  // namespace recursim::pnlss
