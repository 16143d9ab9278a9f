#pragma once

#include "xnap/encoding.hpp"
#include "xnap/model.hpp"

#include <span>
#include <vector>

namespace xnap {

enum class ColumnKind { binary, forced, continuous };

/// How one grid column is resampled when it falls outside an explanation.
/// `levels > 1` discretizes a continuous column to that many evenly spaced values.
struct ColumnSampling {
  ColumnKind kind = ColumnKind::continuous;
  float min = 0.0f;
  float max = 0.0f;
  int levels = 0;

  bool operator==(const ColumnSampling&) const = default;
};

/// The perturbation distribution D: every feature independently, binary
/// columns Bernoulli(0.5), continuous columns uniform over their training
/// range, forced columns never resampled.
class FeatureSampler {
 public:
  FeatureSampler() = default;
  explicit FeatureSampler(std::vector<ColumnSampling> columns);

  /// Activity columns binary, event index forced, the rest continuous over the
  /// min/max observed in the real (non-padding) rows of `train`.
  static FeatureSampler fit(const EncodingSpec& spec, std::span<const EncodedInstance> train);

  Index width() const { return static_cast<Index>(columns_.size()); }
  const std::vector<ColumnSampling>& columns() const { return columns_; }
  const ColumnSampling& column_of(Index flat) const { return columns_[static_cast<std::size_t>(flat % width())]; }
  bool is_forced(Index flat) const { return column_of(flat).kind == ColumnKind::forced; }

  /// One draw for a non-forced feature.
  float draw(Index flat, Rng& rng) const;

  /// Replacement values for every entry of `x` (n x B flat columns); forced
  /// entries copy x. Consumes the same number of draws regardless of any mask.
  Eigen::MatrixXf noise_like(const Eigen::MatrixXf& x, Rng& rng) const;

  bool operator==(const FeatureSampler&) const = default;

 private:
  std::vector<ColumnSampling> columns_;
};

/// S = {i : scores_i >= tau} plus the forced indices, sorted ascending.
std::vector<Index> extract_subset(std::span<const float> scores, double tau, std::span<const Index> forced);

/// z with z_S = x_S and every other non-forced feature drawn from the sampler.
Eigen::VectorXf build_masked_input(const Eigen::VectorXf& x, std::span<const Index> subset,
                                   const FeatureSampler& sampler, Rng& rng);

/// 0/1 mask for one subset over n features.
Eigen::VectorXf subset_mask(std::span<const Index> subset, Index n);

// ---------------------------------------------------------------------------
// Dual propagation

struct SennSettings {
  double tau = 0.5;
  double lambda = 1.0;
  double xi = 0.0;
};

template <typename S>
struct DualPass {
  ForwardOutputs<S> first;
  ForwardCache<S> first_cache;
  Matrix<S> x;          // flat columns
  Matrix<S> noise;      // sampler draws, equal to x on forced entries
  Matrix<S> hard_mask;  // 1 where the feature is in S (forced included)
  Matrix<S> z;          // hard_mask * x + (1 - hard_mask) * noise
  std::vector<std::vector<Index>> subsets;
  std::vector<Index> predicted;  // argmax of the first-pass NAP output
  ForwardOutputs<S> second;
  ForwardCache<S> second_cache;
};

/// First pass on x, subset extraction, masked input, second pass on z through the
/// same parameters. Dropout of the first pass draws from `primary`; sampling and
/// second-pass dropout draw from `aux`.
template <typename S>
DualPass<S> dual_propagate(const NapModelParams<S>& p, const Matrix<S>& x_flat, double tau,
                           const FeatureSampler& sampler, Mode mode, Rng& primary, Rng& aux) {
  require_shape(p.shape.self_explaining, "dual_propagate: model has no explanation head");
  const Index k = p.shape.steps;
  const Index width = p.shape.width();
  const Index n = p.shape.flat_features();
  const Index B = x_flat.cols();
  require_shape(x_flat.rows() == n, "dual_propagate: feature count mismatch");
  require_shape(sampler.width() == width, "dual_propagate: sampler width does not match model");

  DualPass<S> dp;
  dp.x = x_flat;
  ForwardOptions first_opt;
  first_opt.mode = mode;
  dp.first = forward(p, flat_to_sequence<S>(x_flat, k, width), first_opt, &primary, &dp.first_cache);
  dp.predicted = predict_classes(dp.first.nap_probs);

  std::vector<Index> forced;
  for (Index i = 0; i < n; ++i)
    if (sampler.is_forced(i)) forced.push_back(i);

  dp.hard_mask = Matrix<S>::Zero(n, B);
  dp.subsets.resize(static_cast<std::size_t>(B));
  std::vector<float> column(static_cast<std::size_t>(n));
  for (Index j = 0; j < B; ++j) {
    for (Index i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = static_cast<float>(dp.first.explanation_scores(i, j));
    auto subset = extract_subset(column, tau, forced);
    for (const Index i : subset) dp.hard_mask(i, j) = S(1);
    dp.subsets[static_cast<std::size_t>(j)] = std::move(subset);
  }

  dp.noise = sampler.noise_like(x_flat.template cast<float>(), aux).template cast<S>();
  for (Index i : forced) dp.noise.row(i) = x_flat.row(i);
  dp.z = (dp.hard_mask.array() * dp.x.array() + (S(1) - dp.hard_mask.array()) * dp.noise.array()).matrix();

  ForwardOptions second_opt;
  second_opt.mode = mode;
  second_opt.time_head = false;
  second_opt.explanation_head = false;
  dp.second = forward(p, flat_to_sequence<S>(dp.z, k, width), second_opt, &aux, &dp.second_cache);
  return dp;
}

struct SennLossValues {
  double total = 0.0;
  double ce = 0.0;
  double mae = 0.0;
  double faith = 0.0;
  double card = 0.0;
};

template <typename S>
struct SennLoss {
  SennLossValues values;
  HeadGradients<S> first;    // gradients for the first-pass heads
  Matrix<S> d_second_logits;  // lambda * dFaith / d logits(z); empty without a second pass
};

/// CE(f_NAP(x), a) + MAE(f_T(x), t) + lambda * CE(f_NAP(z), argmax f_NAP(x)) + xi * L1(f_E(x)).
/// Pass empty `second_logits` / scores to drop the corresponding terms (the baseline loss).
template <typename S>
SennLoss<S> senn_losses(const ForwardOutputs<S>& first, const Matrix<S>& second_logits,
                        std::span<const Index> predicted, std::span<const Index> targets,
                        const Matrix<S>& time_targets, double lambda, double xi) {
  SennLoss<S> out;
  const auto ce = cross_entropy<S>(first.logits, targets);
  out.values.ce = static_cast<double>(ce.value);
  out.first.d_logits = ce.grad;
  if (first.time_pred.size() != 0) {
    const auto m = mae<S>(first.time_pred, time_targets);
    out.values.mae = static_cast<double>(m.value);
    out.first.d_time = m.grad;
  }
  if (second_logits.size() != 0) {
    const auto faith = cross_entropy<S>(second_logits, predicted);
    out.values.faith = static_cast<double>(faith.value);
    out.d_second_logits = static_cast<S>(lambda) * faith.grad;
  }
  if (first.has_explanation()) {
    const auto card = l1<S>(first.explanation_scores);
    out.values.card = static_cast<double>(card.value);
    out.first.d_scores = static_cast<S>(xi) * card.grad;
  }
  out.values.total = out.values.ce + out.values.mae + lambda * out.values.faith + xi * out.values.card;
  return out;
}

/// Loss of one dual-propagated batch plus the gradients of all parameters.
/// With `straight_through` the hard threshold passes dz/dm = x - noise back to
/// the explanation scores; forced entries receive nothing.
template <typename S>
SennLossValues selfexplain_gradients(const NapModelParams<S>& p, const DualPass<S>& dp,
                                     std::span<const Index> targets, const Matrix<S>& time_targets,
                                     const SennSettings& settings, NapModelParams<S>& grads,
                                     bool straight_through = true) {
  auto loss = senn_losses<S>(dp.first, dp.second.logits, dp.predicted, targets, time_targets, settings.lambda,
                             settings.xi);
  HeadGradients<S> second_heads;
  second_heads.d_logits = loss.d_second_logits;
  const Matrix<S> d_z = sequence_to_flat<S>(backward(p, dp.second_cache, second_heads, grads), p.shape.steps);

  if (straight_through) {
    Matrix<S> d_mask = (d_z.array() * (dp.x.array() - dp.noise.array())).matrix();
    // noise == x on forced rows, so those entries are already zero.
    if (loss.first.d_scores.size() == 0) loss.first.d_scores = Matrix<S>::Zero(d_mask.rows(), d_mask.cols());
    loss.first.d_scores += d_mask;
  }
  backward(p, dp.first_cache, loss.first, grads);
  return loss.values;
}

/// Inference-time explanation of one instance: one forward pass plus thresholding.
struct SelfExplanation {
  std::vector<Index> subset;
  std::vector<float> scores;
  Index predicted = 0;
  double seconds = 0.0;
};

SelfExplanation explain_instance(const NapModelParams<float>& params, const EncodedInstance& instance, double tau);

}  // namespace xnap
