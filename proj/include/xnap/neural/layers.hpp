#pragma once

#include "xnap/neural/types.hpp"

#include <cmath>

namespace xnap {

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else 1/(1-rate).
template <typename Scalar>
Matrix<Scalar> dropout_mask(Index rows, Index cols, double rate, Rng& rng) {
  Matrix<Scalar> mask(rows, cols);
  if (rate >= 1.0) {
    mask.setZero();
    return mask;
  }
  const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) mask(i, j) = uniform01(rng) < rate ? Scalar(0) : keep;
  return mask;
}

template <typename Scalar>
struct Dense {
  Matrix<Scalar> W;  // out x in
  Vector<Scalar> b;  // out

  Index input_size() const { return W.cols(); }
  Index output_size() const { return W.rows(); }

  static Dense zeros(Index out, Index in) {
    return {Matrix<Scalar>::Zero(out, in), Vector<Scalar>::Zero(out)};
  }

  static Dense random(Index out, Index in, Rng& rng) {
    const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(in));
    Dense d;
    d.W = uniform_matrix<Scalar>(out, in, bound, rng);
    d.b = uniform_matrix<Scalar>(out, 1, bound, rng);
    return d;
  }
};

template <typename Scalar>
Matrix<Scalar> dense_forward(const Dense<Scalar>& d, const Matrix<Scalar>& x) {
  require_shape(x.rows() == d.input_size(), "dense_forward: input size mismatch");
  Matrix<Scalar> y = d.W * x;
  y.colwise() += d.b;
  return y;
}

template <typename Scalar>
Matrix<Scalar> dense_backward(const Dense<Scalar>& d, const Matrix<Scalar>& x,
                              const Matrix<Scalar>& dy, Dense<Scalar>& grads) {
  grads.W.noalias() += dy * x.transpose();
  grads.b += dy.rowwise().sum();
  return d.W.transpose() * dy;
}

/// Per-feature normalization over the columns of its input.
template <typename Scalar>
struct BatchNorm {
  static constexpr double momentum = 0.1;
  static constexpr double epsilon = 1e-5;

  Vector<Scalar> gamma;
  Vector<Scalar> beta;
  Vector<Scalar> running_mean;
  Vector<Scalar> running_var;

  Index size() const { return gamma.size(); }

  static BatchNorm identity(Index n) {
    return {Vector<Scalar>::Ones(n), Vector<Scalar>::Zero(n), Vector<Scalar>::Zero(n),
            Vector<Scalar>::Ones(n)};
  }
};

template <typename Scalar>
struct BatchNormCache {
  Mode mode = Mode::infer;
  Matrix<Scalar> normalized;  // x_hat
  Vector<Scalar> inv_std;
  Vector<Scalar> batch_mean;
  Vector<Scalar> batch_var;  // biased
  Index count = 0;
};

/// Train mode normalizes with batch statistics; infer mode with running statistics.
/// Running statistics are never touched here, see batchnorm_update_running.
template <typename Scalar>
Matrix<Scalar> batchnorm_forward(const BatchNorm<Scalar>& bn, const Matrix<Scalar>& x, Mode mode,
                                 BatchNormCache<Scalar>* cache = nullptr) {
  require_shape(x.rows() == bn.size(), "batchnorm_forward: feature size mismatch");
  const Scalar eps = static_cast<Scalar>(BatchNorm<Scalar>::epsilon);
  Vector<Scalar> mean, var;
  if (mode == Mode::train) {
    require_shape(x.cols() > 0, "batchnorm_forward: empty batch");
    mean = x.rowwise().mean();
    var = (x.colwise() - mean).array().square().rowwise().mean().matrix();
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }
  const Vector<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<Scalar> x_hat = ((x.colwise() - mean).array().colwise() * inv_std.array()).matrix();
  Matrix<Scalar> y = (x_hat.array().colwise() * bn.gamma.array()).matrix();
  y.colwise() += bn.beta;
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(x_hat);
    cache->inv_std = inv_std;
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
    cache->count = x.cols();
  }
  return y;
}

/// Exponential moving average with the unbiased batch variance.
template <typename Scalar>
void batchnorm_update_running(BatchNorm<Scalar>& bn, const BatchNormCache<Scalar>& cache) {
  if (cache.mode != Mode::train) return;
  const Scalar m = static_cast<Scalar>(BatchNorm<Scalar>::momentum);
  const Index n = cache.count;
  const Scalar unbias = n > 1 ? static_cast<Scalar>(n) / static_cast<Scalar>(n - 1) : Scalar(1);
  bn.running_mean = (Scalar(1) - m) * bn.running_mean + m * cache.batch_mean;
  bn.running_var = (Scalar(1) - m) * bn.running_var + m * unbias * cache.batch_var;
}

template <typename Scalar>
Matrix<Scalar> batchnorm_backward(const BatchNorm<Scalar>& bn, const BatchNormCache<Scalar>& cache,
                                  const Matrix<Scalar>& dy, BatchNorm<Scalar>& grads) {
  grads.gamma += (dy.array() * cache.normalized.array()).rowwise().sum().matrix();
  grads.beta += dy.rowwise().sum();
  const Matrix<Scalar> d_hat = (dy.array().colwise() * bn.gamma.array()).matrix();
  if (cache.mode == Mode::infer)
    return (d_hat.array().colwise() * cache.inv_std.array()).matrix();

  const Scalar n = static_cast<Scalar>(cache.count);
  const Vector<Scalar> sum_d = d_hat.rowwise().sum();
  const Vector<Scalar> sum_dx = (d_hat.array() * cache.normalized.array()).rowwise().sum().matrix();
  Matrix<Scalar> dx = (n * d_hat.array()).matrix();
  dx.colwise() -= sum_d;
  dx.array() -= cache.normalized.array().colwise() * sum_dx.array();
  dx.array().colwise() *= cache.inv_std.array() / n;
  return dx;
}

}  // namespace xnap
