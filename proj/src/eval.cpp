#include "xnap/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

namespace xnap {

namespace {

Eigen::VectorXf instance_vector(const EncodedInstance& inst) {
  return Eigen::Map<const Eigen::VectorXf>(inst.x.data(), inst.x.size());
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string clock_time(double seconds) {
  const long s = std::lround(seconds);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02ld:%02ld:%02ld", s / 3600, (s / 60) % 60, s % 60);
  return buf;
}

}  // namespace

std::string to_string(Method m) { return m == Method::selfexplain ? "selfexplain" : "posthoc"; }

Method method_from_string(const std::string& s) {
  if (s == "selfexplain") return Method::selfexplain;
  if (s == "posthoc") return Method::posthoc;
  throw std::invalid_argument("unknown method '" + s + "' (expected selfexplain or posthoc)");
}

double accuracy(const Classifier& model, std::span<const EncodedInstance> instances) {
  if (instances.empty()) throw std::invalid_argument("accuracy: empty instance set");
  const auto classes = model(instances_to_flat(instances));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) hits += classes[i] == instances[i].target_activity;
  return static_cast<double>(hits) / static_cast<double>(instances.size());
}

double accuracy(const NapModelParams<float>& params, std::span<const EncodedInstance> instances) {
  return accuracy(make_classifier(std::make_shared<const NapModelParams<float>>(params)), instances);
}

VerificationResult verify_sufficiency(const Classifier& model, const Eigen::VectorXf& x, std::span<const Index> subset,
                                      const FeatureSampler& sampler, double delta, int samples, Rng& rng) {
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("verify_sufficiency: delta must lie in (0, 1]");
  VerificationResult r;
  r.rate = estimate_precision(model, x, subset, sampler, samples, rng);
  r.sufficient = r.rate >= delta;
  return r;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& work) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          work(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

std::vector<Explanation> explain_selfexplaining(const NapModelParams<float>& params,
                                                std::span<const EncodedInstance> instances, double tau) {
  std::vector<Explanation> out;
  out.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto se = explain_instance(params, instances[i], tau);
    Explanation e;
    e.instance = i;
    e.method = Method::selfexplain;
    e.subset = se.subset;
    e.scores = se.scores;
    e.size = se.subset.size();
    e.seconds = se.seconds;
    e.predicted = se.predicted;
    e.target = instances[i].target_activity;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Explanation> explain_posthoc(const Classifier& model, std::span<const EncodedInstance> instances,
                                         const FeatureSampler& sampler, const AnchorConfig& config, unsigned threads) {
  std::vector<Explanation> out(instances.size());
  parallel_for(instances.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(config.seed, i));
    const Eigen::VectorXf x = instance_vector(instances[i]);
    const auto r = greedy_anchor_search(model, x, sampler, config, rng);
    Explanation& e = out[i];
    e.instance = i;
    e.method = Method::posthoc;
    e.exists = r.status == AnchorStatus::found;
    e.subset = r.subset;
    e.size = r.subset.size();
    e.seconds = r.seconds;
    e.predicted = model(Eigen::MatrixXf(x)).front();
    e.target = instances[i].target_activity;
    e.search_precision = r.precision;
    e.samples_used = r.samples_used;
  });
  return out;
}

std::vector<VerificationResult> verify_all(const Classifier& model, std::span<const EncodedInstance> instances,
                                           std::vector<Explanation>& explanations, const FeatureSampler& sampler,
                                           const VerifyConfig& config, unsigned threads) {
  std::vector<VerificationResult> out(explanations.size());
  parallel_for(explanations.size(), threads, [&](std::size_t k) {
    Explanation& e = explanations[k];
    if (!e.exists) return;
    if (e.instance >= instances.size()) throw std::out_of_range("verify_all: explanation refers to a missing instance");
    const std::uint64_t seed = derive_seed(config.seed, e.instance);
    Rng rng(seed);
    out[k] = verify_sufficiency(model, instance_vector(instances[e.instance]), e.subset, sampler, config.delta,
                                config.samples, rng);
    out[k].seed = seed;
    e.sufficient = out[k].sufficient;
    e.verified_rate = out[k].rate;
  });
  return out;
}

EvalReport summarize(std::span<const Explanation> explanations, std::span<const VerificationResult> verification,
                     std::optional<double> acc, const VerifyConfig& config, std::string label) {
  if (explanations.empty()) throw std::invalid_argument("summarize: no explanations");
  if (verification.size() != explanations.size())
    throw std::invalid_argument("summarize: one verification result per explanation required");

  EvalReport r;
  r.label = std::move(label);
  r.method = explanations.front().method;
  r.accuracy = acc;
  r.instances = explanations.size();
  r.delta = config.delta;
  r.samples = config.samples;
  r.seed = config.seed;
  double size_sum = 0.0, time_sum = 0.0;
  for (std::size_t i = 0; i < explanations.size(); ++i) {
    const auto& e = explanations[i];
    if (e.size != e.subset.size()) throw std::invalid_argument("summarize: explanation size does not match its subset");
    if (!e.exists) continue;
    ++r.existing;
    r.sufficient += verification[i].sufficient ? 1 : 0;
    size_sum += static_cast<double>(e.size);
    time_sum += e.seconds;
  }
  const double n = static_cast<double>(r.instances);
  r.existing_rate = static_cast<double>(r.existing) / n;
  r.overall_sufficiency = static_cast<double>(r.sufficient) / n;
  if (r.existing > 0) {
    const double m = static_cast<double>(r.existing);
    r.sufficient_among_existing = static_cast<double>(r.sufficient) / m;
    r.mean_size = size_sum / m;
    r.mean_seconds = time_sum / m;
  }
  return r;
}

std::string render_explanation(const Explanation& explanation, const EncodedInstance& instance,
                               const EncodingSpec& spec) {
  const Eigen::VectorXf mask = subset_mask(explanation.subset, spec.feature_count());
  auto selected = [&](Index r, Index c) { return mask(spec.flat_index(r, c)) != 0.0f; };
  auto class_name = [&](Index c) {
    return c == spec.eos_class() ? std::string("<end of case>") : spec.activities[static_cast<std::size_t>(c)];
  };

  std::ostringstream os;
  os << "instance " << explanation.instance << " [" << to_string(explanation.method) << "]: predicted '"
     << class_name(explanation.predicted) << "', actual '" << class_name(explanation.target) << "', size "
     << explanation.size;
  if (!explanation.exists) os << " (no explanation within the time budget)";
  if (explanation.sufficient) os << (*explanation.sufficient ? ", verified sufficient" : ", not sufficient");
  os << '\n';

  static constexpr const char* kDays[] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
  for (Index r = instance.first_real_row; r < spec.steps; ++r) {
    Index hot = -1;
    for (Index c = 0; c < spec.activity_count(); ++c)
      if (instance.x(r, c) == 1.0f) hot = c;
    os << "  event " << (r - instance.first_real_row + 1) << ": " << (hot >= 0 ? class_name(hot) : "?") << '\n';

    Index hidden_activity_columns = 0;
    for (Index c = 0; c < spec.activity_count(); ++c) {
      if (selected(r, c))
        os << "    [x] " << spec.column_name(c) << " = " << instance.x(r, c) << '\n';
      else
        ++hidden_activity_columns;
    }
    if (hidden_activity_columns > 0)
      os << "    [ ] " << hidden_activity_columns << " activity indicator(s) excluded\n";

    for (Index c = spec.activity_count(); c < spec.width(); ++c) {
      const float v = instance.x(r, c);
      os << "    [" << (selected(r, c) ? 'x' : ' ') << "] " << spec.column_name(c) << " = ";
      switch (static_cast<ExtraColumn>(c - spec.activity_count())) {
        case ExtraColumn::event_index: os << static_cast<long>(v); break;
        case ExtraColumn::since_first: os << fmt("%.0f s", v * spec.mean_since_first); break;
        case ExtraColumn::since_previous: os << fmt("%.0f s", v * spec.mean_since_prev); break;
        case ExtraColumn::since_midnight: os << clock_time(v * 86400.0); break;
        case ExtraColumn::weekday: os << kDays[std::clamp(static_cast<int>(std::lround(v * 6.0)), 0, 6)]; break;
      }
      os << '\n';
    }
  }
  return os.str();
}

std::string format_report_tables(std::span<const EvalReport> reports) {
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s + ' ';
  };
  auto pct = [](double v) { return fmt("%6.2f", 100.0 * v); };

  std::ostringstream os;
  os << "Model accuracy (test prefixes of length > 1)\n";
  os << "  " << pad("model", 30) << "accuracy\n";
  for (const auto& r : reports)
    if (r.accuracy) os << "  " << pad(r.label, 30) << fmt("%.3f", *r.accuracy) << '\n';

  const double delta = reports.empty() ? 0.95 : reports.front().delta;
  const int samples = reports.empty() ? 100 : reports.front().samples;
  os << "\nExplanation faithfulness (delta = " << delta << ", " << samples << " samples)\n";
  os << "  " << pad("model", 30) << pad("method", 12) << pad("existing %", 11) << pad("sufficient of existing %", 25)
     << "sufficient overall %\n";
  for (const auto& r : reports)
    os << "  " << pad(r.label, 30) << pad(to_string(r.method), 12) << pad(pct(r.existing_rate), 11)
       << pad(pct(r.sufficient_among_existing), 25) << pct(r.overall_sufficiency) << '\n';

  os << "\nExplanation size and computation time (existing explanations)\n";
  os << "  " << pad("model", 30) << pad("method", 12) << pad("mean size", 11) << "mean time, s\n";
  for (const auto& r : reports)
    os << "  " << pad(r.label, 30) << pad(to_string(r.method), 12) << pad(fmt("%.2f", r.mean_size), 11)
       << fmt("%.5f", r.mean_seconds) << '\n';
  return os.str();
}

nlohmann::json to_json(const Explanation& e) {
  nlohmann::json j;
  j["instance"] = e.instance;
  j["method"] = to_string(e.method);
  j["exists"] = e.exists;
  j["status"] = e.exists ? "found" : "timeout";
  j["indices"] = e.subset;
  j["size"] = e.size;
  j["seconds"] = e.seconds;
  j["predicted"] = e.predicted;
  j["target"] = e.target;
  if (!e.scores.empty()) j["scores"] = e.scores;
  if (e.method == Method::posthoc) {
    j["search_precision"] = e.search_precision;
    j["samples_used"] = e.samples_used;
  }
  if (e.sufficient) {
    j["sufficient"] = *e.sufficient;
    j["verified_rate"] = e.verified_rate;
  }
  return j;
}

Explanation explanation_from_json(const nlohmann::json& j) {
  Explanation e;
  e.instance = j.at("instance").get<std::size_t>();
  e.method = method_from_string(j.at("method").get<std::string>());
  e.exists = j.at("exists").get<bool>();
  e.subset = j.at("indices").get<std::vector<Index>>();
  e.size = j.at("size").get<std::size_t>();
  e.seconds = j.at("seconds").get<double>();
  e.predicted = j.at("predicted").get<Index>();
  e.target = j.at("target").get<Index>();
  if (j.contains("scores")) e.scores = j["scores"].get<std::vector<float>>();
  if (j.contains("search_precision")) e.search_precision = j["search_precision"].get<double>();
  if (j.contains("samples_used")) e.samples_used = j["samples_used"].get<long>();
  if (j.contains("sufficient")) {
    e.sufficient = j["sufficient"].get<bool>();
    e.verified_rate = j.value("verified_rate", 0.0);
  }
  return e;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["label"] = r.label;
  j["method"] = to_string(r.method);
  j["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
  j["instances"] = r.instances;
  j["existing"] = r.existing;
  j["sufficient"] = r.sufficient;
  j["existing_rate"] = r.existing_rate;
  j["sufficient_among_existing"] = r.sufficient_among_existing;
  j["overall_sufficiency"] = r.overall_sufficiency;
  j["mean_size"] = r.mean_size;
  j["mean_seconds"] = r.mean_seconds;
  j["delta"] = r.delta;
  j["samples"] = r.samples;
  j["seed"] = r.seed;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.label = j.at("label").get<std::string>();
  r.method = method_from_string(j.at("method").get<std::string>());
  if (!j.at("accuracy").is_null()) r.accuracy = j["accuracy"].get<double>();
  r.instances = j.at("instances").get<std::size_t>();
  r.existing = j.at("existing").get<std::size_t>();
  r.sufficient = j.at("sufficient").get<std::size_t>();
  r.existing_rate = j.at("existing_rate").get<double>();
  r.sufficient_among_existing = j.at("sufficient_among_existing").get<double>();
  r.overall_sufficiency = j.at("overall_sufficiency").get<double>();
  r.mean_size = j.at("mean_size").get<double>();
  r.mean_seconds = j.at("mean_seconds").get<double>();
  r.delta = j.at("delta").get<double>();
  r.samples = j.at("samples").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

}  // namespace xnap
