// Acceptance checks that need no external data: the numeric core, the
// sufficiency estimator and the report arithmetic. One PASS/FAIL line per
// criterion; the exit code is nonzero if any criterion fails.

#include "checks.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include "xnap/eval.hpp"
#include "xnap/training.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace xnap;
using checks::M;

namespace {

constexpr int kSeeds = 20;
constexpr double kMcTolerance = 0.02;
constexpr int kMcSamples = 10000;

int failures = 0;

void line(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s  %-38s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Worst error of `check` over seeds 1..kSeeds.
double worst_over_seeds(const std::function<double(std::uint64_t)>& check) {
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= kSeeds; ++s) worst = std::max(worst, check(s));
  return worst;
}

// ---------------------------------------------------------------------------
// 6. numeric core

void gradient_checks() {
  const std::vector<std::pair<std::string, std::function<double(std::uint64_t)>>> layers{
      {"lstm", [](std::uint64_t s) { return checks::lstm_layer(s); }},
      {"lstm+dropout", [](std::uint64_t s) { return checks::lstm_layer(s, 0.3); }},
      {"dense", checks::dense},
      {"batchnorm/train", [](std::uint64_t s) { return checks::batchnorm(s, Mode::train); }},
      {"batchnorm/infer", [](std::uint64_t s) { return checks::batchnorm(s, Mode::infer); }},
      {"cross_entropy", checks::cross_entropy_loss},
      {"mae", checks::mae_loss},
      {"l1", checks::l1_loss},
      {"model/baseline", [](std::uint64_t s) { return checks::baseline_model(s, Mode::train); }},
      {"model/selfexplain", checks::selfexplain_model},
  };
  std::string detail;
  bool ok = true;
  for (const auto& [name, check] : layers) {
    const double w = worst_over_seeds(check);
    ok = ok && w < checks::kTolerance;
    detail += name + "=" + fmt("%.1e", w) + " ";
  }
  line(ok, "6a gradient checks (20 seeds, <1e-3)", detail);
}

void lstm_closed_form() {
  const auto p = LstmLayer<double>::zeros(3, 2);
  const M c_prev = (M(3, 1) << 1.0, -2.0, 0.4).finished();
  const auto [h, c] = lstm_cell_step<double>(p, M::Zero(3, 1), c_prev, M::Constant(2, 1, 0.7));
  const double err_c = (c - 0.5 * c_prev).cwiseAbs().maxCoeff();
  const double err_h = (h - (0.5 * (0.5 * c_prev).array().tanh()).matrix()).cwiseAbs().maxCoeff();
  line(err_c < 1e-12 && err_h < 1e-12, "6b lstm zero weights: c = 0.5 c_prev",
       "max|c - 0.5 c_prev|=" + fmt("%.1e", err_c) + " max|h - 0.5 tanh(c)|=" + fmt("%.1e", err_h));
}

void cross_entropy_uniform() {
  double worst = 0.0;
  for (const Index classes : {2, 5, 17}) {
    const std::vector<Index> target{1};
    worst = std::max(worst, std::abs(cross_entropy<double>(M::Zero(classes, 1), target).value -
                                     std::log(static_cast<double>(classes))));
  }
  line(worst < 1e-12, "6c cross-entropy of uniform = ln c", "max error " + fmt("%.1e", worst));
}

void masking_identity() {
  const auto spec = testing::small_spec(3, 4);
  std::vector<ColumnSampling> cols(static_cast<std::size_t>(spec.width()), {ColumnKind::continuous, 0.0f, 1.0f, 0});
  for (Index c = 0; c < spec.activity_count(); ++c) cols[static_cast<std::size_t>(c)] = {ColumnKind::binary, 0.0f, 1.0f, 0};
  cols[static_cast<std::size_t>(spec.column(ExtraColumn::event_index))].kind = ColumnKind::forced;
  const FeatureSampler sampler(cols);
  const auto train = testing::random_instances(spec, 60, 1);
  const auto val = testing::random_instances(spec, 10, 2);
  TrainConfig cfg;
  cfg.mode = TrainMode::selfexplain;
  cfg.hidden = 5;
  cfg.batch_size = 16;
  cfg.max_epochs = 4;
  cfg.xi = 1e-3;
  std::size_t batches = 0, checked = 0, violations = 0;
  fit(train, val, spec, sampler, cfg, [&](const BatchEvent& ev) {
    ++batches;
    if (ev.dual == nullptr) {
      ++violations;
      return;
    }
    const auto& d = *ev.dual;
    for (Index j = 0; j < d.x.cols(); ++j)
      for (const Index i : d.subsets[static_cast<std::size_t>(j)]) {
        ++checked;
        violations += d.z(i, j) != d.x(i, j);
      }
  });
  line(batches > 0 && violations == 0, "6d masking identity z_S = x_S",
       std::to_string(batches) + " batches, " + std::to_string(checked) + " entries, " + std::to_string(violations) +
           " violations");
}

void checkpoint_determinism() {
  const auto d = testing::synthetic_data(40, 4);
  const auto sampler = FeatureSampler::fit(d.spec, d.train);
  bool ok = true;
  std::string detail;
  for (const TrainMode mode : {TrainMode::baseline, TrainMode::selfexplain}) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.hidden = 6;
    cfg.max_epochs = 2;
    cfg.batch_size = 32;
    cfg.seed = 13;
    if (mode == TrainMode::selfexplain) cfg.xi = 1e-5;
    const auto a = encode_checkpoint(fit(d.train, d.validation, d.spec, sampler, cfg));
    const auto b = encode_checkpoint(fit(d.train, d.validation, d.spec, sampler, cfg));
    cfg.seed = 14;
    const auto c = encode_checkpoint(fit(d.train, d.validation, d.spec, sampler, cfg));
    ok = ok && a == b && a != c;
    detail += to_string(mode) + ": " + std::to_string(a.size()) + " bytes " + (a == b ? "identical" : "DIFFER") +
              (a != c ? ", other seed differs; " : ", other seed SAME; ");
  }
  line(ok, "6e identical seeds give identical ckpts", detail);
}

// ---------------------------------------------------------------------------
// 7. Monte-Carlo sufficiency against exhaustive enumeration

/// Class 1 iff every listed feature exceeds its threshold.
Classifier threshold_model(std::vector<Index> features, std::vector<float> thresholds) {
  return [features = std::move(features), thresholds = std::move(thresholds)](const Eigen::MatrixXf& z) {
    std::vector<Index> out(static_cast<std::size_t>(z.cols()));
    for (Index j = 0; j < z.cols(); ++j) {
      bool all = true;
      for (std::size_t f = 0; f < features.size(); ++f) all = all && z(features[f], j) > thresholds[f];
      out[static_cast<std::size_t>(j)] = all ? 1 : 0;
    }
    return out;
  };
}

void monte_carlo_oracle() {
  const FeatureSampler sampler({{ColumnKind::continuous, 0.0f, 1.0f, 5},
                                {ColumnKind::continuous, 0.0f, 2.0f, 3},
                                {ColumnKind::binary, 0.0f, 1.0f, 0},
                                {ColumnKind::continuous, -1.0f, 1.0f, 4}});
  const std::vector<Classifier> models{threshold_model({0, 1}, {0.3f, 0.5f}), threshold_model({0, 2, 3}, {0.6f, 0.5f, 0.0f}),
                                       threshold_model({1, 3}, {1.5f, -0.5f})};
  Rng pick(21);
  double worst = 0.0;
  int cases = 0;
  for (std::size_t m = 0; m < models.size(); ++m)
    for (int trial = 0; trial < 8; ++trial) {
      Eigen::VectorXf x(4);
      for (Index i = 0; i < 4; ++i) {
        const auto s = oracles::support(sampler.column_of(i));
        x(i) = s[static_cast<std::size_t>(uniform01(pick) * static_cast<double>(s.size()))];
      }
      std::vector<Index> subset;
      for (Index i = 0; i < 4; ++i)
        if (uniform01(pick) < 0.4) subset.push_back(i);
      const double exact = oracles::exhaustive_sufficiency(models[m], x, subset, sampler);
      Rng rng(derive_seed(m, static_cast<std::uint64_t>(trial)));
      const double mc = verify_sufficiency(models[m], x, subset, sampler, 0.95, kMcSamples, rng).rate;
      worst = std::max(worst, std::abs(mc - exact));
      ++cases;
    }
  line(worst <= kMcTolerance, "7  Monte-Carlo vs exhaustive (n=1e4)",
       std::to_string(cases) + " cases, max |mc - exact|=" + fmt("%.4f", worst) + " (tolerance 0.02)");
}

// ---------------------------------------------------------------------------
// 8. report arithmetic and grid cardinalities

void report_identity() {
  Rng rng(31);
  int violations = 0, trials = 0;
  for (; trials < 200; ++trials) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 400);
    std::vector<Explanation> ex(n);
    std::vector<VerificationResult> ver(n);
    for (std::size_t i = 0; i < n; ++i) {
      ex[i].instance = i;
      ex[i].exists = uniform01(rng) < 0.6;
      if (ex[i].exists) ex[i].subset = {0, 1};
      ex[i].size = ex[i].subset.size();
      ver[i].sufficient = ex[i].exists && uniform01(rng) < 0.5;
    }
    const auto r = summarize(ex, ver, std::nullopt, VerifyConfig{});
    const bool exact = r.sufficient <= r.existing && r.existing <= r.instances &&
                       std::abs(r.overall_sufficiency - r.existing_rate * r.sufficient_among_existing) < 1e-12;
    violations += exact ? 0 : 1;
  }
  line(violations == 0, "8a overall = existing x among-existing",
       std::to_string(trials) + " random reports, " + std::to_string(violations) + " violations");
}

void grid_cardinality() {
  const auto d = testing::synthetic_data(30, 5);
  const auto sampler = FeatureSampler::fit(d.spec, d.train);
  TrainConfig base;
  base.mode = TrainMode::selfexplain;
  base.hidden = 4;
  base.max_epochs = 1;
  base.batch_size = 64;
  GridOptions opt;
  opt.faithfulness_limit = 5;
  opt.verify.samples = 5;
  opt.threads = 4;
  const auto full = grid_search(d.train, d.validation, d.spec, sampler, base, GridMode::full, opt);
  const auto small = grid_search(d.train, d.validation, d.spec, sampler, base, GridMode::small, opt);
  const bool ok = grid_learning_rates().size() * grid_xis(GridMode::full).size() == 30 &&
                  grid_learning_rates().size() * grid_xis(GridMode::small).size() == 10 && full.cells.size() == 30 &&
                  small.cells.size() == 10;
  line(ok, "8b grid cardinalities 30/10",
       "full " + std::to_string(full.cells.size()) + " cells, small " + std::to_string(small.cells.size()) + " cells");
}

}  // namespace

int main() {
  std::printf("acceptance: numeric core, sufficiency oracle, protocol arithmetic\n");
  const std::vector<std::function<void()>> criteria{gradient_checks, lstm_closed_form,  cross_entropy_uniform,
                                                    masking_identity, checkpoint_determinism, monte_carlo_oracle,
                                                    report_identity,  grid_cardinality};
  for (const auto& c : criteria) {
    try {
      c();
    } catch (const std::exception& e) {
      line(false, "criterion raised", e.what());
    }
  }
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
