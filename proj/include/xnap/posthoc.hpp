#pragma once

#include "xnap/model.hpp"
#include "xnap/selfexplain.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace xnap {

struct AnchorConfig {
  double precision_threshold = 0.95;
  int samples = 100;        // per precision estimate
  int beam_width = 1;       // 1 = greedy
  double timeout_seconds = 600.0;
  std::uint64_t seed = 0;
  Index chunk_columns = 4096;  // classifier batch size while scoring candidates

  void validate() const;
};

enum class AnchorStatus { found, timeout };

struct AnchorResult {
  AnchorStatus status = AnchorStatus::timeout;
  std::vector<Index> subset;  // sorted
  double precision = 0.0;     // estimate for `subset`
  double seconds = 0.0;
  long samples_used = 0;
};

/// Fraction of `samples` masked draws z (z_S = x_S) whose predicted class equals
/// `reference`, or the class predicted for x itself when no reference is given.
double estimate_precision(const Classifier& model, const Eigen::VectorXf& x, std::span<const Index> subset,
                          const FeatureSampler& sampler, int samples, Rng& rng,
                          std::optional<Index> reference = std::nullopt);

/// Grows S one feature at a time from the empty set, keeping the candidates with
/// the highest estimated precision, until the estimate reaches the threshold or
/// the wall-clock budget runs out. Features are never removed once added.
AnchorResult greedy_anchor_search(const Classifier& model, const Eigen::VectorXf& x, const FeatureSampler& sampler,
                                  const AnchorConfig& config, Rng& rng);

}  // namespace xnap
