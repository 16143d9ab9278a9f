#pragma once

#include "xnap/neural/types.hpp"

#include <algorithm>
#include <cmath>

namespace xnap {

/// Central differences of a scalar function with respect to every entry of `param`.
/// `param` is perturbed in place and restored.
template <typename Derived, typename Fn>
Matrix<typename Derived::Scalar> numeric_gradient(Eigen::MatrixBase<Derived>& param, Fn&& loss,
                                                  double eps = 1e-4) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> g(param.rows(), param.cols());
  for (Index j = 0; j < param.cols(); ++j) {
    for (Index i = 0; i < param.rows(); ++i) {
      const Scalar saved = param(i, j);
      param(i, j) = saved + static_cast<Scalar>(eps);
      const double up = static_cast<double>(loss());
      param(i, j) = saved - static_cast<Scalar>(eps);
      const double down = static_cast<double>(loss());
      param(i, j) = saved;
      g(i, j) = static_cast<Scalar>((up - down) / (2.0 * eps));
    }
  }
  return g;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor). The floor keeps entries whose
/// true gradient is ~0 from turning truncation noise into huge ratios.
template <typename A, typename B>
double max_relative_error(const Eigen::MatrixBase<A>& analytic, const Eigen::MatrixBase<B>& numeric,
                          double floor = 1e-6) {
  require_shape(analytic.rows() == numeric.rows() && analytic.cols() == numeric.cols(),
                "max_relative_error: shape mismatch");
  double worst = 0.0;
  for (Index j = 0; j < analytic.cols(); ++j)
    for (Index i = 0; i < analytic.rows(); ++i) {
      const double a = static_cast<double>(analytic(i, j));
      const double n = static_cast<double>(numeric(i, j));
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      worst = std::max(worst, std::abs(a - n) / denom);
    }
  return worst;
}

}  // namespace xnap
