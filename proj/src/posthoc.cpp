#include "xnap/posthoc.hpp"

#include <algorithm>
#include <chrono>
#include <set>

namespace xnap {

namespace {

using Clock = std::chrono::steady_clock;

/// Fills `block` (n x samples) with masked draws around x for one subset.
void masked_draws(const Eigen::VectorXf& x, const Eigen::VectorXf& mask, const FeatureSampler& sampler, Rng& rng,
                  Eigen::Ref<Eigen::MatrixXf> block) {
  for (Index j = 0; j < block.cols(); ++j)
    for (Index i = 0; i < x.size(); ++i)
      block(i, j) = (mask(i) != 0.0f || sampler.is_forced(i)) ? x(i) : sampler.draw(i, rng);
}

double agreement(const std::vector<Index>& classes, std::size_t begin, std::size_t count, Index reference) {
  std::size_t hits = 0;
  for (std::size_t j = begin; j < begin + count; ++j) hits += classes[j] == reference;
  return static_cast<double>(hits) / static_cast<double>(count);
}

struct Candidate {
  std::vector<Index> subset;
  double precision = 0.0;
};

}  // namespace

void AnchorConfig::validate() const {
  if (!(precision_threshold > 0.0 && precision_threshold <= 1.0))
    throw std::invalid_argument("anchor precision threshold must lie in (0, 1]");
  if (!(timeout_seconds > 0.0)) throw std::invalid_argument("anchor timeout must be positive");
  if (samples < 1) throw std::invalid_argument("anchor samples must be >= 1");
  if (beam_width < 1) throw std::invalid_argument("anchor beam width must be >= 1");
}

double estimate_precision(const Classifier& model, const Eigen::VectorXf& x, std::span<const Index> subset,
                          const FeatureSampler& sampler, int samples, Rng& rng, std::optional<Index> reference) {
  if (samples < 1) throw std::invalid_argument("estimate_precision: need at least one sample");
  const Index ref = reference ? *reference : model(Eigen::MatrixXf(x)).front();
  Eigen::MatrixXf z(x.size(), samples);
  masked_draws(x, subset_mask(subset, x.size()), sampler, rng, z);
  return agreement(model(z), 0, static_cast<std::size_t>(samples), ref);
}

AnchorResult greedy_anchor_search(const Classifier& model, const Eigen::VectorXf& x, const FeatureSampler& sampler,
                                  const AnchorConfig& config, Rng& rng) {
  config.validate();
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
  const Index n = x.size();
  const Index ref = model(Eigen::MatrixXf(x)).front();

  AnchorResult result;
  auto finish = [&](AnchorStatus status, const Candidate& best) {
    result.status = status;
    result.subset = best.subset;
    result.precision = best.precision;
    result.seconds = elapsed();
    return result;
  };

  Candidate empty{{}, estimate_precision(model, x, {}, sampler, config.samples, rng, ref)};
  result.samples_used += config.samples;
  if (empty.precision >= config.precision_threshold) return finish(AnchorStatus::found, empty);

  std::vector<Candidate> beam{empty};
  const Index per_chunk = std::max<Index>(1, config.chunk_columns / config.samples);

  while (true) {
    if (elapsed() > config.timeout_seconds) return finish(AnchorStatus::timeout, beam.front());

    std::vector<Candidate> candidates;
    std::set<std::vector<Index>> seen;
    for (const auto& b : beam) {
      const Eigen::VectorXf in_b = subset_mask(b.subset, n);
      for (Index i = 0; i < n; ++i) {
        if (in_b(i) != 0.0f) continue;
        std::vector<Index> s = b.subset;
        s.insert(std::upper_bound(s.begin(), s.end(), i), i);
        if (seen.insert(s).second) candidates.push_back({std::move(s), 0.0});
      }
    }
    if (candidates.empty()) return finish(AnchorStatus::found, beam.front());

    for (std::size_t c0 = 0; c0 < candidates.size(); c0 += static_cast<std::size_t>(per_chunk)) {
      const std::size_t count = std::min(candidates.size() - c0, static_cast<std::size_t>(per_chunk));
      Eigen::MatrixXf z(n, static_cast<Index>(count) * config.samples);
      for (std::size_t c = 0; c < count; ++c)
        masked_draws(x, subset_mask(candidates[c0 + c].subset, n), sampler, rng,
                     z.middleCols(static_cast<Index>(c) * config.samples, config.samples));
      const auto classes = model(z);
      for (std::size_t c = 0; c < count; ++c)
        candidates[c0 + c].precision =
            agreement(classes, c * static_cast<std::size_t>(config.samples), static_cast<std::size_t>(config.samples), ref);
      result.samples_used += static_cast<long>(count) * config.samples;
      if (elapsed() > config.timeout_seconds) return finish(AnchorStatus::timeout, beam.front());
    }

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.precision > b.precision; });
    candidates.resize(std::min(candidates.size(), static_cast<std::size_t>(config.beam_width)));
    beam = std::move(candidates);
    if (beam.front().precision >= config.precision_threshold) return finish(AnchorStatus::found, beam.front());
  }
}

}  // namespace xnap
