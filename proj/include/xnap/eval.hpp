#pragma once

#include "xnap/model.hpp"
#include "xnap/posthoc.hpp"
#include "xnap/selfexplain.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xnap {

enum class Method { selfexplain, posthoc };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct Explanation {
  std::size_t instance = 0;
  Method method = Method::selfexplain;
  bool exists = true;          // false for a post-hoc search that timed out
  std::vector<Index> subset;   // flat feature indices, dummy and forced included
  std::vector<float> scores;   // explanation-head outputs (self-explaining only)
  std::size_t size = 0;        // == subset.size()
  double seconds = 0.0;
  Index predicted = 0;
  Index target = 0;
  double search_precision = 0.0;  // post-hoc estimate at termination
  long samples_used = 0;
  std::optional<bool> sufficient;
  double verified_rate = 0.0;
};

struct VerifyConfig {
  double delta = 0.95;
  int samples = 100;
  std::uint64_t seed = 7;
};

struct VerificationResult {
  bool sufficient = false;
  double rate = 0.0;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::string label;
  Method method = Method::selfexplain;
  std::optional<double> accuracy;
  std::size_t instances = 0;
  std::size_t existing = 0;
  std::size_t sufficient = 0;
  double existing_rate = 0.0;
  double sufficient_among_existing = 0.0;
  double overall_sufficiency = 0.0;
  double mean_size = 0.0;     // over existing explanations
  double mean_seconds = 0.0;  // over existing explanations
  double delta = 0.95;
  int samples = 100;
  std::uint64_t seed = 0;
};

/// Fraction of instances whose predicted class equals the next-activity target.
double accuracy(const Classifier& model, std::span<const EncodedInstance> instances);
double accuracy(const NapModelParams<float>& params, std::span<const EncodedInstance> instances);

/// Sufficient iff the estimated preservation rate of S reaches delta.
VerificationResult verify_sufficiency(const Classifier& model, const Eigen::VectorXf& x, std::span<const Index> subset,
                                      const FeatureSampler& sampler, double delta, int samples, Rng& rng);

/// Runs `work(i)` for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& work);

std::vector<Explanation> explain_selfexplaining(const NapModelParams<float>& params,
                                                std::span<const EncodedInstance> instances, double tau);

/// Per-instance searches; instance i uses seed derive_seed(config.seed, i).
std::vector<Explanation> explain_posthoc(const Classifier& model, std::span<const EncodedInstance> instances,
                                         const FeatureSampler& sampler, const AnchorConfig& config,
                                         unsigned threads = 1);

/// Verifies each existing explanation against its instance; instance i draws
/// from derive_seed(config.seed, i). Results are also written back into `explanations`.
std::vector<VerificationResult> verify_all(const Classifier& model, std::span<const EncodedInstance> instances,
                                           std::vector<Explanation>& explanations, const FeatureSampler& sampler,
                                           const VerifyConfig& config, unsigned threads = 1);

EvalReport summarize(std::span<const Explanation> explanations, std::span<const VerificationResult> verification,
                     std::optional<double> accuracy, const VerifyConfig& config, std::string label = {});

/// Text view of one explanation: real events only, selected features marked [x],
/// excluded ones [ ]. Padding rows are omitted but stay counted in the size.
std::string render_explanation(const Explanation& explanation, const EncodedInstance& instance,
                               const EncodingSpec& spec);

/// Accuracy, faithfulness and size/latency tables over a set of reports.
std::string format_report_tables(std::span<const EvalReport> reports);

nlohmann::json to_json(const Explanation& e);
Explanation explanation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace xnap
