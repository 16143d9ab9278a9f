#pragma once

#include "xnap/neural/types.hpp"

#include <cmath>
#include <concepts>
#include <vector>

namespace xnap {

/// Flat views over every trainable tensor of a parameter set, in visiting order.
template <typename Scalar>
using TensorViews = std::vector<Eigen::Map<Vector<Scalar>>>;

/// Any parameter set exposing `visit_trainable(f)` with f(name, tensor&).
template <typename Params, typename Scalar = typename Params::Scalar>
TensorViews<Scalar> trainable_views(Params& params) {
  TensorViews<Scalar> views;
  params.visit_trainable([&](const std::string&, auto& t) { views.emplace_back(t.data(), t.size()); });
  return views;
}

template <typename Scalar>
struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-8;

  std::vector<Vector<Scalar>> first;
  std::vector<Vector<Scalar>> second;
  long step = 0;
};

/// Bias-corrected Adam update over matching parameter / gradient views.
template <typename Scalar>
void adam_step(TensorViews<Scalar>& params, const TensorViews<Scalar>& grads, AdamState<Scalar>& state,
               double learning_rate) {
  require_shape(params.size() == grads.size(), "adam_step: parameter/gradient count mismatch");
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.push_back(Vector<Scalar>::Zero(p.size()));
      state.second.push_back(Vector<Scalar>::Zero(p.size()));
    }
  }
  require_shape(state.first.size() == params.size(), "adam_step: state does not match parameters");

  ++state.step;
  const double b1 = AdamState<Scalar>::beta1;
  const double b2 = AdamState<Scalar>::beta2;
  const Scalar c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(b1, static_cast<double>(state.step))));
  const Scalar c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(b2, static_cast<double>(state.step))));
  const Scalar lr = static_cast<Scalar>(learning_rate);
  const Scalar eps = static_cast<Scalar>(AdamState<Scalar>::epsilon);

  for (std::size_t k = 0; k < params.size(); ++k) {
    require_shape(params[k].size() == grads[k].size() && params[k].size() == state.first[k].size(),
                  "adam_step: tensor size mismatch");
    auto& m = state.first[k];
    auto& v = state.second[k];
    const auto g = grads[k].array();
    m.array() = static_cast<Scalar>(b1) * m.array() + static_cast<Scalar>(1.0 - b1) * g;
    v.array() = static_cast<Scalar>(b2) * v.array() + static_cast<Scalar>(1.0 - b2) * g.square();
    params[k].array() -= lr * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
  }
}

template <typename Params, typename Scalar = typename Params::Scalar>
  requires std::same_as<typename Params::Scalar, Scalar>
void adam_step(Params& params, Params& grads, AdamState<Scalar>& state, double learning_rate) {
  auto p = trainable_views(params);
  const auto g = trainable_views(grads);
  adam_step<Scalar>(p, g, state, learning_rate);
}

}  // namespace xnap
