#pragma once

#include "xnap/neural/layers.hpp"
#include "xnap/neural/types.hpp"

#include <cmath>
#include <utility>

namespace xnap {

// Sequences are stored as one matrix of shape (features, steps * batch):
// the columns of step t are [t * batch, (t + 1) * batch).

/// One LSTM layer. The four gate matrices are stacked row-wise in the order
/// forget, input, candidate, output; each acts on the concatenation [h_{t-1}; x_t].
template <typename Scalar>
struct LstmLayer {
  Matrix<Scalar> W;  // 4H x (H + input)
  Vector<Scalar> b;  // 4H

  Index hidden_size() const { return W.rows() / 4; }
  Index input_size() const { return W.cols() - hidden_size(); }

  auto W_f() const { return W.topRows(hidden_size()); }
  auto W_i() const { return W.middleRows(hidden_size(), hidden_size()); }
  auto W_c() const { return W.middleRows(2 * hidden_size(), hidden_size()); }
  auto W_o() const { return W.bottomRows(hidden_size()); }
  auto b_f() const { return b.head(hidden_size()); }
  auto b_i() const { return b.segment(hidden_size(), hidden_size()); }
  auto b_c() const { return b.segment(2 * hidden_size(), hidden_size()); }
  auto b_o() const { return b.tail(hidden_size()); }

  static LstmLayer zeros(Index hidden, Index input) {
    return {Matrix<Scalar>::Zero(4 * hidden, hidden + input), Vector<Scalar>::Zero(4 * hidden)};
  }

  /// U(-1/sqrt(H), 1/sqrt(H)) for every weight and bias.
  static LstmLayer random(Index hidden, Index input, Rng& rng) {
    const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(hidden));
    LstmLayer layer;
    layer.W = uniform_matrix<Scalar>(4 * hidden, hidden + input, bound, rng);
    layer.b = uniform_matrix<Scalar>(4 * hidden, 1, bound, rng);
    return layer;
  }
};

template <typename Scalar>
Matrix<Scalar> sigmoid(const Matrix<Scalar>& a) {
  return (Scalar(1) + (-a.array()).exp()).inverse().matrix();
}

/// Five-equation cell update on column batches: returns (h_t, c_t).
template <typename Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> lstm_cell_step(const LstmLayer<Scalar>& p,
                                                         const Matrix<Scalar>& h_prev,
                                                         const Matrix<Scalar>& c_prev,
                                                         const Matrix<Scalar>& x_t) {
  const Index H = p.hidden_size();
  require_shape(h_prev.rows() == H && c_prev.rows() == H, "lstm_cell_step: state size mismatch");
  require_shape(x_t.rows() == p.input_size(), "lstm_cell_step: input size mismatch");
  require_shape(h_prev.cols() == x_t.cols() && c_prev.cols() == x_t.cols(),
                "lstm_cell_step: batch size mismatch");

  Matrix<Scalar> u(H + x_t.rows(), x_t.cols());
  u << h_prev, x_t;
  Matrix<Scalar> a = p.W * u;
  a.colwise() += p.b;

  const Matrix<Scalar> f = sigmoid<Scalar>(a.topRows(H));
  const Matrix<Scalar> i = sigmoid<Scalar>(a.middleRows(H, H));
  const Matrix<Scalar> g = a.middleRows(2 * H, H).array().tanh().matrix();
  const Matrix<Scalar> o = sigmoid<Scalar>(a.bottomRows(H));

  Matrix<Scalar> c = (f.array() * c_prev.array() + i.array() * g.array()).matrix();
  Matrix<Scalar> h = (o.array() * c.array().tanh()).matrix();
  return {std::move(h), std::move(c)};
}

template <typename Scalar>
struct LstmCache {
  Index steps = 0;
  Index batch = 0;
  Matrix<Scalar> concat;      // (H + in) x steps*batch, [h_{t-1}; x_t]
  Matrix<Scalar> gates;       // 4H x steps*batch, post-activation f, i, g, o
  Matrix<Scalar> cells;       // H x steps*batch
  Matrix<Scalar> tanh_cells;  // H x steps*batch
  Matrix<Scalar> dropout;     // H x steps*batch, empty when dropout was off
};

/// Runs the layer over a whole sequence from h_0 = c_0 = 0. In train mode the
/// outputs pass through inverted dropout with a fresh mask drawn from `rng`.
template <typename Scalar>
Matrix<Scalar> lstm_layer_forward(const LstmLayer<Scalar>& p, const Matrix<Scalar>& input,
                                  Index steps, double dropout_rate, Mode mode, Rng* rng,
                                  LstmCache<Scalar>* cache = nullptr) {
  const Index H = p.hidden_size();
  const Index in = p.input_size();
  require_shape(steps > 0 && input.cols() % steps == 0, "lstm_layer_forward: column count not a multiple of steps");
  require_shape(input.rows() == in, "lstm_layer_forward: input size mismatch");
  const Index B = input.cols() / steps;

  Matrix<Scalar> out(H, steps * B);
  Matrix<Scalar> u(H + in, B);
  Matrix<Scalar> c_prev = Matrix<Scalar>::Zero(H, B);
  u.topRows(H).setZero();
  if (cache) {
    cache->steps = steps;
    cache->batch = B;
    cache->concat.resize(H + in, steps * B);
    cache->gates.resize(4 * H, steps * B);
    cache->cells.resize(H, steps * B);
    cache->tanh_cells.resize(H, steps * B);
  }

  Matrix<Scalar> a(4 * H, B);
  for (Index t = 0; t < steps; ++t) {
    u.bottomRows(in) = input.middleCols(t * B, B);
    a.noalias() = p.W * u;
    a.colwise() += p.b;
    a.topRows(H) = sigmoid<Scalar>(a.topRows(H));
    a.middleRows(H, H) = sigmoid<Scalar>(a.middleRows(H, H));
    a.middleRows(2 * H, H) = a.middleRows(2 * H, H).array().tanh().matrix();
    a.bottomRows(H) = sigmoid<Scalar>(a.bottomRows(H));

    Matrix<Scalar> c = (a.topRows(H).array() * c_prev.array() +
                        a.middleRows(H, H).array() * a.middleRows(2 * H, H).array())
                           .matrix();
    Matrix<Scalar> tc = c.array().tanh().matrix();
    auto h = out.middleCols(t * B, B);
    h = (a.bottomRows(H).array() * tc.array()).matrix();

    if (cache) {
      cache->concat.middleCols(t * B, B) = u;
      cache->gates.middleCols(t * B, B) = a;
      cache->cells.middleCols(t * B, B) = c;
      cache->tanh_cells.middleCols(t * B, B) = tc;
    }
    u.topRows(H) = h;
    c_prev = std::move(c);
  }

  if (mode == Mode::train && dropout_rate > 0.0) {
    require_shape(rng != nullptr, "lstm_layer_forward: train-mode dropout needs an rng");
    Matrix<Scalar> mask = dropout_mask<Scalar>(H, steps * B, dropout_rate, *rng);
    out.array() *= mask.array();
    if (cache) cache->dropout = std::move(mask);
  } else if (cache) {
    cache->dropout.resize(0, 0);
  }
  return out;
}

/// Backpropagation through time. `d_out` has the shape of the forward output;
/// parameter gradients are accumulated into `grads`, the input gradient is returned.
template <typename Scalar>
Matrix<Scalar> lstm_layer_backward(const LstmLayer<Scalar>& p, const LstmCache<Scalar>& cache,
                                   const Matrix<Scalar>& d_out, LstmLayer<Scalar>& grads) {
  const Index H = p.hidden_size();
  const Index in = p.input_size();
  const Index B = cache.batch;
  const Index steps = cache.steps;
  require_shape(d_out.rows() == H && d_out.cols() == steps * B, "lstm_layer_backward: gradient shape mismatch");

  Matrix<Scalar> d_h_seq = d_out;
  if (cache.dropout.size() != 0) d_h_seq.array() *= cache.dropout.array();

  Matrix<Scalar> d_input(in, steps * B);
  Matrix<Scalar> d_h_next = Matrix<Scalar>::Zero(H, B);
  Matrix<Scalar> d_c_next = Matrix<Scalar>::Zero(H, B);
  Matrix<Scalar> d_a(4 * H, B);
  Matrix<Scalar> d_u(H + in, B);

  for (Index t = steps - 1; t >= 0; --t) {
    const auto gates = cache.gates.middleCols(t * B, B);
    const auto f = gates.topRows(H).array();
    const auto i = gates.middleRows(H, H).array();
    const auto g = gates.middleRows(2 * H, H).array();
    const auto o = gates.bottomRows(H).array();
    const auto tc = cache.tanh_cells.middleCols(t * B, B).array();

    Matrix<Scalar> d_h = d_h_seq.middleCols(t * B, B) + d_h_next;
    Matrix<Scalar> d_c = (d_c_next.array() + d_h.array() * o * (Scalar(1) - tc.square())).matrix();

    if (t > 0) {
      const auto c_prev = cache.cells.middleCols((t - 1) * B, B).array();
      d_a.topRows(H) = (d_c.array() * c_prev * f * (Scalar(1) - f)).matrix();
    } else {
      d_a.topRows(H).setZero();
    }
    d_a.middleRows(H, H) = (d_c.array() * g * i * (Scalar(1) - i)).matrix();
    d_a.middleRows(2 * H, H) = (d_c.array() * i * (Scalar(1) - g.square())).matrix();
    d_a.bottomRows(H) = (d_h.array() * tc * o * (Scalar(1) - o)).matrix();

    grads.W.noalias() += d_a * cache.concat.middleCols(t * B, B).transpose();
    grads.b += d_a.rowwise().sum();
    d_u.noalias() = p.W.transpose() * d_a;

    d_input.middleCols(t * B, B) = d_u.bottomRows(in);
    d_h_next = d_u.topRows(H);
    d_c_next = (d_c.array() * f).matrix();
  }
  return d_input;
}

}  // namespace xnap
