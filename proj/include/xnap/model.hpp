#pragma once

#include "xnap/encoding.hpp"
#include "xnap/neural.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace xnap {

/// Fixed architecture sizes. Everything else about the network is derived.
struct ModelShape {
  Index activities = 0;
  Index steps = 0;  // k
  Index hidden = 100;
  double dropout = 0.2;
  bool self_explaining = false;

  Index width() const { return activities + kExtraFeatures; }
  Index classes() const { return activities + 1; }
  Index flat_features() const { return steps * width(); }

  static ModelShape for_spec(const EncodingSpec& spec, bool self_explaining, Index hidden = 100,
                             double dropout = 0.2);
  bool operator==(const ModelShape&) const = default;
};

/// Shared two-layer LSTM trunk, an activity branch and a time branch (each
/// norm -> LSTM -> norm -> dense), plus the explanation head when enabled.
template <typename S>
struct NapModelParams {
  using Scalar = S;

  ModelShape shape;
  LstmLayer<S> shared1, shared2;
  BatchNorm<S> act_norm_in, act_norm_out;
  LstmLayer<S> act_lstm;
  Dense<S> act_out;
  BatchNorm<S> time_norm_in, time_norm_out;
  LstmLayer<S> time_lstm;
  Dense<S> time_out;
  Dense<S> expl_out;  // 0x0 unless shape.self_explaining

  /// f(name, tensor&, trainable) over every stored tensor, in a fixed order.
  template <typename F>
  void visit_all(F&& f) { visit_impl(*this, f); }
  template <typename F>
  void visit_all(F&& f) const { visit_impl(*this, f); }

  template <typename F>
  void visit_trainable(F&& f) {
    visit_all([&](const std::string& name, auto& t, bool trainable) {
      if (trainable) f(name, t);
    });
  }
  template <typename F>
  void visit_trainable(F&& f) const {
    visit_all([&](const std::string& name, const auto& t, bool trainable) {
      if (trainable) f(name, t);
    });
  }

  /// Trunk and branch weights come from one derived stream, the explanation head
  /// from another, so baseline and self-explaining models share their draws.
  static NapModelParams initialize(const ModelShape& shape, std::uint64_t seed) {
    NapModelParams p;
    p.shape = shape;
    const Index H = shape.hidden;
    Rng rng(derive_seed(seed, 10));
    p.shared1 = LstmLayer<S>::random(H, shape.width(), rng);
    p.shared2 = LstmLayer<S>::random(H, H, rng);
    p.act_lstm = LstmLayer<S>::random(H, H, rng);
    p.act_out = Dense<S>::random(shape.classes(), H, rng);
    p.time_lstm = LstmLayer<S>::random(H, H, rng);
    p.time_out = Dense<S>::random(1, H, rng);
    p.act_norm_in = p.act_norm_out = p.time_norm_in = p.time_norm_out = BatchNorm<S>::identity(H);
    if (shape.self_explaining) {
      Rng head_rng(derive_seed(seed, 11));
      p.expl_out = Dense<S>::random(shape.flat_features(), H, head_rng);
    }
    return p;
  }

  /// Same shapes, every tensor zero (used as a gradient accumulator).
  NapModelParams zeros_like() const {
    NapModelParams z = *this;
    z.visit_all([](const std::string&, auto& t, bool) { t.setZero(); });
    return z;
  }

  Index parameter_count() const {
    Index n = 0;
    visit_trainable([&](const std::string&, const auto& t) { n += t.size(); });
    return n;
  }

  template <typename T>
  NapModelParams<T> cast() const {
    NapModelParams<T> out;
    out.shape = shape;
    // Walk both parameter sets in lockstep; visiting order is identical.
    std::vector<std::pair<const S*, std::pair<Index, Index>>> src;
    visit_all([&](const std::string&, const auto& t, bool) { src.push_back({t.data(), {t.rows(), t.cols()}}); });
    std::size_t k = 0;
    out.visit_all([&](const std::string&, auto& t, bool) {
      const auto& [ptr, dims] = src[k++];
      t.resize(dims.first, dims.second);
      for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(ptr[i]);
    });
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    auto lstm = [&](const std::string& name, auto& layer) {
      f(name + ".W", layer.W, true);
      f(name + ".b", layer.b, true);
    };
    auto dense = [&](const std::string& name, auto& layer) {
      f(name + ".W", layer.W, true);
      f(name + ".b", layer.b, true);
    };
    auto norm = [&](const std::string& name, auto& bn) {
      f(name + ".gamma", bn.gamma, true);
      f(name + ".beta", bn.beta, true);
      f(name + ".running_mean", bn.running_mean, false);
      f(name + ".running_var", bn.running_var, false);
    };
    lstm("shared1", self.shared1);
    lstm("shared2", self.shared2);
    norm("act_norm_in", self.act_norm_in);
    lstm("act_lstm", self.act_lstm);
    norm("act_norm_out", self.act_norm_out);
    dense("act_out", self.act_out);
    norm("time_norm_in", self.time_norm_in);
    lstm("time_lstm", self.time_lstm);
    norm("time_norm_out", self.time_norm_out);
    dense("time_out", self.time_out);
    if (self.shape.self_explaining) dense("expl_out", self.expl_out);
  }
};

struct ForwardOptions {
  Mode mode = Mode::infer;
  bool time_head = true;
  bool explanation_head = true;  // ignored for baseline models
};

template <typename S>
struct ForwardOutputs {
  Matrix<S> logits;              // classes x B
  Matrix<S> nap_probs;           // classes x B, columns sum to 1
  Matrix<S> time_pred;           // 1 x B, empty when the time head was skipped
  Matrix<S> explanation_scores;  // k*width x B in [0,1], empty when absent

  bool has_explanation() const { return explanation_scores.size() != 0; }
};

template <typename S>
struct ForwardCache {
  Index batch = 0;
  LstmCache<S> shared1, shared2, act_lstm, time_lstm;
  BatchNormCache<S> act_norm_in, act_norm_out, time_norm_in, time_norm_out;
  Matrix<S> shared_last;  // H x B, input of the explanation head
  Matrix<S> act_last;     // H x B, input of the activity dense layer
  Matrix<S> time_last;    // H x B, input of the time dense layer
  Matrix<S> scores;       // sigmoid outputs of the explanation head
  bool time_head = false;
  bool explanation_head = false;
};

/// Gradients of the loss with respect to the three heads. Empty matrices mean
/// the head does not contribute. `d_scores` is taken w.r.t. the sigmoid output.
template <typename S>
struct HeadGradients {
  Matrix<S> d_logits;
  Matrix<S> d_time;
  Matrix<S> d_scores;
};

// ---------------------------------------------------------------------------
// Layout conversions

/// k*width x B flat columns -> width x k*B sequence matrix.
template <typename S, typename Derived>
Matrix<S> flat_to_sequence(const Eigen::MatrixBase<Derived>& flat, Index steps, Index width) {
  require_shape(flat.rows() == steps * width, "flat_to_sequence: row count is not k * width");
  const Index B = flat.cols();
  Matrix<S> seq(width, steps * B);
  for (Index t = 0; t < steps; ++t)
    seq.middleCols(t * B, B) = flat.middleRows(t * width, width).template cast<S>();
  return seq;
}

template <typename S>
Matrix<S> sequence_to_flat(const Matrix<S>& seq, Index steps) {
  const Index B = seq.cols() / steps;
  const Index width = seq.rows();
  Matrix<S> flat(steps * width, B);
  for (Index t = 0; t < steps; ++t) flat.middleRows(t * width, width) = seq.middleCols(t * B, B);
  return flat;
}

/// Stacks grids as flat columns (k*width x B).
Eigen::MatrixXf grids_to_flat(std::span<const Grid> grids);
Eigen::MatrixXf instances_to_flat(std::span<const EncodedInstance> instances);
Eigen::MatrixXf instances_to_flat(std::span<const EncodedInstance* const> instances);

// ---------------------------------------------------------------------------
// Forward / backward

template <typename S>
ForwardOutputs<S> forward(const NapModelParams<S>& p, const Matrix<S>& input, const ForwardOptions& opt, Rng* rng,
                          ForwardCache<S>* cache = nullptr) {
  const ModelShape& shape = p.shape;
  const Index k = shape.steps;
  require_shape(input.rows() == shape.width(), "forward: input width " + std::to_string(input.rows()) +
                                                   " does not match model width " + std::to_string(shape.width()));
  require_shape(input.cols() > 0 && input.cols() % k == 0, "forward: input columns not a multiple of k");
  const Index B = input.cols() / k;
  const double drop = shape.dropout;
  const bool with_time = opt.time_head;
  const bool with_expl = opt.explanation_head && shape.self_explaining;

  LstmCache<S>* c1 = cache ? &cache->shared1 : nullptr;
  LstmCache<S>* c2 = cache ? &cache->shared2 : nullptr;
  const Matrix<S> h1 = lstm_layer_forward(p.shared1, input, k, drop, opt.mode, rng, c1);
  const Matrix<S> shared = lstm_layer_forward(p.shared2, h1, k, drop, opt.mode, rng, c2);

  ForwardOutputs<S> out;

  auto branch = [&](const BatchNorm<S>& norm_in, const LstmLayer<S>& lstm, const BatchNorm<S>& norm_out,
                    const Dense<S>& dense, BatchNormCache<S>* nc_in, LstmCache<S>* lc, BatchNormCache<S>* nc_out,
                    Matrix<S>* last_store) {
    const Matrix<S> normed = batchnorm_forward(norm_in, shared, opt.mode, nc_in);
    const Matrix<S> seq = lstm_layer_forward(lstm, normed, k, drop, opt.mode, rng, lc);
    Matrix<S> last = batchnorm_forward(norm_out, Matrix<S>(seq.rightCols(B)), opt.mode, nc_out);
    Matrix<S> y = dense_forward(dense, last);
    if (last_store) *last_store = std::move(last);
    return y;
  };

  out.logits = branch(p.act_norm_in, p.act_lstm, p.act_norm_out, p.act_out, cache ? &cache->act_norm_in : nullptr,
                      cache ? &cache->act_lstm : nullptr, cache ? &cache->act_norm_out : nullptr,
                      cache ? &cache->act_last : nullptr);
  out.nap_probs = softmax<S>(out.logits);

  if (with_time)
    out.time_pred = branch(p.time_norm_in, p.time_lstm, p.time_norm_out, p.time_out,
                           cache ? &cache->time_norm_in : nullptr, cache ? &cache->time_lstm : nullptr,
                           cache ? &cache->time_norm_out : nullptr, cache ? &cache->time_last : nullptr);

  if (with_expl) {
    const Matrix<S> last = shared.rightCols(B);
    out.explanation_scores = sigmoid<S>(dense_forward(p.expl_out, last));
    if (cache) {
      cache->shared_last = last;
      cache->scores = out.explanation_scores;
    }
  }
  if (cache) {
    cache->batch = B;
    cache->time_head = with_time;
    cache->explanation_head = with_expl;
  }
  return out;
}

/// Folds the batch statistics recorded during a train-mode forward into the running averages.
template <typename S>
void update_running_stats(NapModelParams<S>& p, const ForwardCache<S>& cache) {
  batchnorm_update_running(p.act_norm_in, cache.act_norm_in);
  batchnorm_update_running(p.act_norm_out, cache.act_norm_out);
  if (cache.time_head) {
    batchnorm_update_running(p.time_norm_in, cache.time_norm_in);
    batchnorm_update_running(p.time_norm_out, cache.time_norm_out);
  }
}

/// Reverse pass over the recorded forward. Parameter gradients accumulate into
/// `grads`; the gradient with respect to the input sequence is returned.
template <typename S>
Matrix<S> backward(const NapModelParams<S>& p, const ForwardCache<S>& cache, const HeadGradients<S>& heads,
                   NapModelParams<S>& grads) {
  const Index k = p.shape.steps;
  const Index B = cache.batch;
  const Index H = p.shape.hidden;
  Matrix<S> d_shared = Matrix<S>::Zero(H, k * B);

  auto branch = [&](const Matrix<S>& d_y, const BatchNorm<S>& norm_in, const LstmLayer<S>& lstm,
                    const BatchNorm<S>& norm_out, const Dense<S>& dense, const BatchNormCache<S>& nc_in,
                    const LstmCache<S>& lc, const BatchNormCache<S>& nc_out, const Matrix<S>& last,
                    BatchNorm<S>& g_norm_in, LstmLayer<S>& g_lstm, BatchNorm<S>& g_norm_out, Dense<S>& g_dense) {
    const Matrix<S> d_last = batchnorm_backward(norm_out, nc_out, dense_backward(dense, last, d_y, g_dense), g_norm_out);
    Matrix<S> d_seq = Matrix<S>::Zero(H, k * B);
    d_seq.rightCols(B) = d_last;
    d_shared += batchnorm_backward(norm_in, nc_in, lstm_layer_backward(lstm, lc, d_seq, g_lstm), g_norm_in);
  };

  if (heads.d_logits.size() != 0)
    branch(heads.d_logits, p.act_norm_in, p.act_lstm, p.act_norm_out, p.act_out, cache.act_norm_in, cache.act_lstm,
           cache.act_norm_out, cache.act_last, grads.act_norm_in, grads.act_lstm, grads.act_norm_out, grads.act_out);
  if (heads.d_time.size() != 0) {
    require_shape(cache.time_head, "backward: time gradient given but the time head was not run");
    branch(heads.d_time, p.time_norm_in, p.time_lstm, p.time_norm_out, p.time_out, cache.time_norm_in,
           cache.time_lstm, cache.time_norm_out, cache.time_last, grads.time_norm_in, grads.time_lstm,
           grads.time_norm_out, grads.time_out);
  }
  if (heads.d_scores.size() != 0) {
    require_shape(cache.explanation_head, "backward: score gradient given but the explanation head was not run");
    const Matrix<S> d_pre =
        (heads.d_scores.array() * cache.scores.array() * (S(1) - cache.scores.array())).matrix();
    d_shared.rightCols(B) += dense_backward(p.expl_out, cache.shared_last, d_pre, grads.expl_out);
  }

  const Matrix<S> d_h1 = lstm_layer_backward(p.shared2, cache.shared2, d_shared, grads.shared2);
  return lstm_layer_backward(p.shared1, cache.shared1, d_h1, grads.shared1);
}

/// Argmax with ties resolved to the lowest index.
template <typename Derived>
Index predict_class(const Eigen::MatrixBase<Derived>& probs) {
  Index best = 0;
  for (Index i = 1; i < probs.size(); ++i)
    if (probs(i) > probs(best)) best = i;
  return best;
}

template <typename S>
std::vector<Index> predict_classes(const Matrix<S>& probs) {
  std::vector<Index> out(static_cast<std::size_t>(probs.cols()));
  for (Index j = 0; j < probs.cols(); ++j) out[static_cast<std::size_t>(j)] = predict_class(probs.col(j));
  return out;
}

/// Inference-mode forward over flat columns (k*width x N).
ForwardOutputs<float> infer(const NapModelParams<float>& p, const Eigen::MatrixXf& flat, bool explanation_head = true,
                            bool time_head = true);

/// A black-box classifier over flat feature columns; one predicted class per column.
using Classifier = std::function<std::vector<Index>(const Eigen::MatrixXf& flat)>;

/// Wraps a trained network's activity head; evaluates in chunks of `chunk` columns.
Classifier make_classifier(std::shared_ptr<const NapModelParams<float>> params, Index chunk = 256);

}  // namespace xnap
