#include "xnap/selfexplain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace xnap {

FeatureSampler::FeatureSampler(std::vector<ColumnSampling> columns) : columns_(std::move(columns)) {
  for (const auto& c : columns_) {
    if (!std::isfinite(c.min) || !std::isfinite(c.max) || c.min > c.max)
      throw std::invalid_argument("FeatureSampler: column range must be finite with min <= max");
    if (c.levels < 0) throw std::invalid_argument("FeatureSampler: negative level count");
  }
}

FeatureSampler FeatureSampler::fit(const EncodingSpec& spec, std::span<const EncodedInstance> train) {
  if (train.empty()) throw std::invalid_argument("FeatureSampler::fit: no training instances");
  std::vector<ColumnSampling> cols(static_cast<std::size_t>(spec.width()));
  for (Index c = 0; c < spec.activity_count(); ++c) cols[static_cast<std::size_t>(c)] = {ColumnKind::binary, 0.0f, 1.0f, 0};
  cols[static_cast<std::size_t>(spec.column(ExtraColumn::event_index))].kind = ColumnKind::forced;

  for (Index c = spec.column(ExtraColumn::since_first); c < spec.width(); ++c) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (const auto& inst : train)
      for (Index r = inst.first_real_row; r < inst.x.rows(); ++r) {
        lo = std::min(lo, inst.x(r, c));
        hi = std::max(hi, inst.x(r, c));
      }
    if (lo > hi) lo = hi = 0.0f;
    cols[static_cast<std::size_t>(c)] = {ColumnKind::continuous, lo, hi, 0};
  }
  return FeatureSampler(std::move(cols));
}

float FeatureSampler::draw(Index flat, Rng& rng) const {
  const auto& c = column_of(flat);
  switch (c.kind) {
    case ColumnKind::binary: return uniform01(rng) < 0.5 ? 0.0f : 1.0f;
    case ColumnKind::forced: throw std::logic_error("FeatureSampler::draw: forced features are never sampled");
    case ColumnKind::continuous: break;
  }
  const double u = uniform01(rng);
  if (c.levels > 1) {
    const auto level = std::min<long>(static_cast<long>(u * c.levels), c.levels - 1);
    return static_cast<float>(c.min + (static_cast<double>(c.max) - c.min) * level / (c.levels - 1));
  }
  return static_cast<float>(c.min + (static_cast<double>(c.max) - c.min) * u);
}

Eigen::MatrixXf FeatureSampler::noise_like(const Eigen::MatrixXf& x, Rng& rng) const {
  Eigen::MatrixXf noise(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) noise(i, j) = is_forced(i) ? x(i, j) : draw(i, rng);
  return noise;
}

std::vector<Index> extract_subset(std::span<const float> scores, double tau, std::span<const Index> forced) {
  std::vector<Index> subset;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (static_cast<double>(scores[i]) >= tau) subset.push_back(static_cast<Index>(i));
  subset.insert(subset.end(), forced.begin(), forced.end());
  std::sort(subset.begin(), subset.end());
  subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  return subset;
}

Eigen::VectorXf subset_mask(std::span<const Index> subset, Index n) {
  Eigen::VectorXf mask = Eigen::VectorXf::Zero(n);
  for (const Index i : subset) {
    if (i < 0 || i >= n) throw std::out_of_range("subset index " + std::to_string(i) + " outside feature range");
    mask(i) = 1.0f;
  }
  return mask;
}

Eigen::VectorXf build_masked_input(const Eigen::VectorXf& x, std::span<const Index> subset,
                                   const FeatureSampler& sampler, Rng& rng) {
  const Eigen::VectorXf mask = subset_mask(subset, x.size());
  Eigen::VectorXf z = x;
  for (Index i = 0; i < x.size(); ++i)
    if (mask(i) == 0.0f && !sampler.is_forced(i)) z(i) = sampler.draw(i, rng);
  return z;
}

SelfExplanation explain_instance(const NapModelParams<float>& params, const EncodedInstance& instance, double tau) {
  const auto start = std::chrono::steady_clock::now();
  const Eigen::MatrixXf flat = Eigen::Map<const Eigen::VectorXf>(instance.x.data(), instance.x.size());
  const auto out = infer(params, flat, true, false);
  if (!out.has_explanation()) throw std::invalid_argument("explain_instance: model has no explanation head");

  SelfExplanation e;
  e.scores.assign(out.explanation_scores.data(), out.explanation_scores.data() + out.explanation_scores.size());
  e.subset = extract_subset(e.scores, tau, instance.forced);
  e.predicted = predict_class(out.nap_probs.col(0));
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return e;
}

}  // namespace xnap
