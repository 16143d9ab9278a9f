#pragma once

#include "xnap/neural/types.hpp"

#include <cmath>
#include <span>
#include <string>

namespace xnap {

/// A loss value together with its gradient with respect to the loss input.
template <typename Scalar>
struct LossTerm {
  Scalar value = 0;
  Matrix<Scalar> grad;
};

/// Column-wise numerically stable softmax.
template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

/// Softmax cross-entropy, averaged over the batch columns. Gradient is (softmax - onehot) / N.
template <typename Scalar>
LossTerm<Scalar> cross_entropy(const Matrix<Scalar>& logits, std::span<const Index> classes) {
  require_shape(static_cast<Index>(classes.size()) == logits.cols(), "cross_entropy: one class per column required");
  const Index n = logits.cols();
  LossTerm<Scalar> out;
  out.grad = softmax<Scalar>(logits);
  double total = 0.0;
  for (Index j = 0; j < n; ++j) {
    const Index c = classes[static_cast<std::size_t>(j)];
    if (c < 0 || c >= logits.rows())
      throw std::out_of_range("cross_entropy: class index " + std::to_string(c) + " outside 0.." +
                              std::to_string(logits.rows() - 1));
    const auto col = logits.col(j);
    const Scalar mx = col.maxCoeff();
    const double lse = static_cast<double>(mx) + std::log(static_cast<double>((col.array() - mx).exp().sum()));
    total += lse - static_cast<double>(col(c));
    out.grad(c, j) -= Scalar(1);
  }
  out.value = static_cast<Scalar>(total / static_cast<double>(n));
  out.grad /= static_cast<Scalar>(n);
  return out;
}

/// Subgradient convention for |.|: sign(0) = 0.
template <typename Scalar>
Scalar abs_subgradient(Scalar v) {
  return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
}

/// Mean absolute error over all entries of `pred` (one column per instance).
template <typename Scalar>
LossTerm<Scalar> mae(const Matrix<Scalar>& pred, const Matrix<Scalar>& target) {
  require_shape(pred.rows() == target.rows() && pred.cols() == target.cols(), "mae: shape mismatch");
  const Scalar n = static_cast<Scalar>(pred.cols());
  const Matrix<Scalar> diff = pred - target;
  LossTerm<Scalar> out;
  out.value = diff.array().abs().sum() / n;
  out.grad = diff.unaryExpr([](Scalar v) { return abs_subgradient(v); }) / n;
  return out;
}

/// Sum of absolute values per column, averaged over columns.
template <typename Scalar>
LossTerm<Scalar> l1(const Matrix<Scalar>& values) {
  const Scalar n = static_cast<Scalar>(values.cols());
  LossTerm<Scalar> out;
  out.value = values.array().abs().sum() / n;
  out.grad = values.unaryExpr([](Scalar v) { return abs_subgradient(v); }) / n;
  return out;
}

}  // namespace xnap
