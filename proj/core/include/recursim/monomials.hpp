#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace recursim::pnlss {

/// Exponent tuple over (x_1, ..., x_na, u); the last entry is the input exponent.
using Exponents = std::vector<int>;

/// Nonlinear monomials of total degree 2..max_degree in the states and the
/// scalar input. Canonical order: ascending total degree, then descending
/// lexicographic exponent tuples (x1^2, x1 x2, ..., u^2, x1^3, ...).
class MonomialBasis {
 public:
  MonomialBasis() = default;
  MonomialBasis(std::size_t state_dim, int max_degree, std::vector<Exponents> exponents);

  /// Every monomial of degree 2..max_degree in state_dim states and one input.
  static MonomialBasis full(std::size_t state_dim, int max_degree);

  /// Same basis with every monomial that involves the input removed.
  MonomialBasis without_input() const;

  std::size_t state_dim() const noexcept { return state_dim_; }
  int max_degree() const noexcept { return max_degree_; }
  std::size_t size() const noexcept { return exps_.size(); }
  const std::vector<Exponents>& exponents() const noexcept { return exps_; }

  /// zeta(x, u) in canonical order.
  Eigen::VectorXd evaluate(std::span<const double> x, double u) const;

  /// d zeta / d x  (size() x state_dim) and d zeta / d u.
  void jacobian(std::span<const double> x, double u, Eigen::MatrixXd& dx, Eigen::VectorXd& du) const;

 private:
  std::size_t state_dim_ = 0;
  int max_degree_ = 0;
  std::vector<Exponents> exps_;
};

Eigen::VectorXd eval_monomials(const MonomialBasis& basis, std::span<const double> x, double u);

}  // namespace recursim::pnlss
