#include "recursim/monomials.hpp"

#include <functional>

#include "recursim/errors.hpp"

namespace recursim::pnlss {
namespace {

double ipow(double v, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= v;
  return r;
}

// Appends every exponent tuple of `vars` entries summing to `degree`, in
// descending lexicographic order.
void enumerate(std::size_t vars, int degree, std::vector<Exponents>& out) {
  Exponents cur(vars, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
    if (pos + 1 == vars) {
      cur[pos] = left;
      out.push_back(cur);
      return;
    }
    for (int e = left; e >= 0; --e) {
      cur[pos] = e;
      rec(pos + 1, left - e);
    }
  };
  rec(0, degree);
}

}  // namespace

MonomialBasis::MonomialBasis(std::size_t state_dim, int max_degree, std::vector<Exponents> exponents)
    : state_dim_(state_dim), max_degree_(max_degree), exps_(std::move(exponents)) {
  for (const auto& e : exps_) {
    if (e.size() != state_dim_ + 1) throw InvalidArgument("monomial exponent tuple has wrong length");
    int total = 0;
    for (int v : e) {
      if (v < 0) throw InvalidArgument("negative monomial exponent");
      total += v;
    }
    if (total < 2 || total > max_degree_) {
      throw InvalidArgument("monomial degree outside [2, max_degree]");
    }
  }
}

MonomialBasis MonomialBasis::full(std::size_t state_dim, int max_degree) {
  if (max_degree < 2) throw InvalidArgument("monomial degree must be at least 2");
  std::vector<Exponents> exps;
  for (int d = 2; d <= max_degree; ++d) enumerate(state_dim + 1, d, exps);
  return MonomialBasis(state_dim, max_degree, std::move(exps));
}

MonomialBasis MonomialBasis::without_input() const {
  std::vector<Exponents> kept;
  for (const auto& e : exps_) {
    if (e.back() == 0) kept.push_back(e);
  }
  return MonomialBasis(state_dim_, max_degree_, std::move(kept));
}

Eigen::VectorXd MonomialBasis::evaluate(std::span<const double> x, double u) const {
  if (x.size() != state_dim_) throw InvalidArgument("state length does not match the basis");
  Eigen::VectorXd z(static_cast<Eigen::Index>(exps_.size()));
  for (std::size_t m = 0; m < exps_.size(); ++m) {
    const auto& e = exps_[m];
    double v = ipow(u, e.back());
    for (std::size_t i = 0; i < state_dim_; ++i) v *= ipow(x[i], e[i]);
    z(static_cast<Eigen::Index>(m)) = v;
  }
  return z;
}

void MonomialBasis::jacobian(std::span<const double> x, double u, Eigen::MatrixXd& dx,
                             Eigen::VectorXd& du) const {
  const auto nm = static_cast<Eigen::Index>(exps_.size());
  const auto nx = static_cast<Eigen::Index>(state_dim_);
  dx.setZero(nm, nx);
  du.setZero(nm);
  for (std::size_t m = 0; m < exps_.size(); ++m) {
    const auto& e = exps_[m];
    const auto row = static_cast<Eigen::Index>(m);
    for (std::size_t k = 0; k <= state_dim_; ++k) {
      if (e[k] == 0) continue;
      double v = static_cast<double>(e[k]);
      for (std::size_t j = 0; j <= state_dim_; ++j) {
        const double base = j < state_dim_ ? x[j] : u;
        v *= ipow(base, j == k ? e[j] - 1 : e[j]);
      }
      if (k < state_dim_) {
        dx(row, static_cast<Eigen::Index>(k)) = v;
      } else {
        du(row) = v;
      }
    }
  }
}

Eigen::VectorXd eval_monomials(const MonomialBasis& basis, std::span<const double> x, double u) {
  return basis.evaluate(x, u);
}

}  // namespace recursim::pnlss
