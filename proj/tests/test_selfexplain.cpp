#include "checks.hpp"
#include "support.hpp"

#include <doctest.h>

#include "xnap/training.hpp"

#include <cmath>
#include <set>

using namespace xnap;
using checks::M;

namespace {

FeatureSampler sampler_for(const EncodingSpec& spec, float lo = 0.0f, float hi = 1.0f) {
  std::vector<ColumnSampling> cols(static_cast<std::size_t>(spec.width()), {ColumnKind::continuous, lo, hi, 0});
  for (Index c = 0; c < spec.activity_count(); ++c) cols[static_cast<std::size_t>(c)] = {ColumnKind::binary, 0.0f, 1.0f, 0};
  cols[static_cast<std::size_t>(spec.column(ExtraColumn::event_index))].kind = ColumnKind::forced;
  return FeatureSampler(cols);
}

}  // namespace

TEST_SUITE("selfexplain") {
  TEST_CASE("extract_subset thresholds and adds forced features") {
    const std::vector<float> scores{0.2f, 0.5f, 0.9f, 0.49f};
    const std::vector<Index> none;
    CHECK(extract_subset(scores, 0.5, none) == std::vector<Index>{1, 2});
    const std::vector<Index> forced{3, 0};
    CHECK(extract_subset(scores, 0.5, forced) == std::vector<Index>{0, 1, 2, 3});
    const std::vector<Index> overlap{2};
    CHECK(extract_subset(scores, 0.5, overlap) == std::vector<Index>{1, 2});
    CHECK(extract_subset(scores, 0.95, none).empty());
    CHECK(extract_subset(scores, 0.0, none).size() == 4);
  }

  TEST_CASE("sampler draws") {
    const std::vector<ColumnSampling> cols{{ColumnKind::binary, 0.0f, 1.0f, 0},
                                           {ColumnKind::continuous, -2.0f, 6.0f, 0},
                                           {ColumnKind::continuous, 0.25f, 0.25f, 0},
                                           {ColumnKind::continuous, 0.0f, 1.0f, 3},
                                           {ColumnKind::forced, 0.0f, 0.0f, 0}};
    const FeatureSampler s(cols);
    Rng rng(12);
    const int n = 10000;
    double ones = 0.0, cont = 0.0;
    std::set<float> levels;
    for (int i = 0; i < n; ++i) {
      const float b = s.draw(0, rng);
      CHECK((b == 0.0f || b == 1.0f));
      ones += b;
      const float u = s.draw(1, rng);
      CHECK(u >= -2.0f);
      CHECK(u <= 6.0f);
      cont += u;
      CHECK(s.draw(2, rng) == 0.25f);
      levels.insert(s.draw(3, rng));
    }
    // standard error 0.005; the band is four of them
    CHECK(std::abs(ones / n - 0.5) <= 0.02);
    CHECK(std::abs(cont / n - 2.0) <= 0.1);
    CHECK(levels == std::set<float>{0.0f, 0.5f, 1.0f});
    CHECK_THROWS_AS(s.draw(4, rng), std::logic_error);
    // flat indices wrap around the grid width
    CHECK(s.is_forced(9));
    CHECK_FALSE(s.is_forced(8));
  }

  TEST_CASE("sampler rejects invalid ranges") {
    CHECK_THROWS_AS(FeatureSampler({{ColumnKind::continuous, 1.0f, 0.0f, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(FeatureSampler({{ColumnKind::continuous, 0.0f, INFINITY, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(FeatureSampler({{ColumnKind::continuous, 0.0f, 1.0f, -1}}), std::invalid_argument);
  }

  TEST_CASE("fitted sampler uses real rows only") {
    const auto log = testing::letter_log({"abc", "ab", "cab", "a"});
    const std::vector<std::size_t> all{0, 1, 2, 3};
    const auto prefixes = generate_prefixes(log, all, PrefixPurpose::train);
    const auto spec = make_encoding_spec(log, prefixes);
    const auto inst = encode_all(log, prefixes, spec);
    const auto s = FeatureSampler::fit(spec, inst);
    REQUIRE(s.width() == spec.width());
    for (Index c = 0; c < spec.activity_count(); ++c) CHECK(s.columns()[static_cast<std::size_t>(c)].kind == ColumnKind::binary);
    CHECK(s.columns()[static_cast<std::size_t>(spec.column(ExtraColumn::event_index))].kind == ColumnKind::forced);
    const auto& since_prev = s.columns()[static_cast<std::size_t>(spec.column(ExtraColumn::since_previous))];
    // the first event always has since-previous 0; later ones are an hour apart
    CHECK(since_prev.min == 0.0f);
    CHECK(since_prev.max == doctest::Approx(3600.0 / spec.mean_since_prev));
    // events start at midnight and the longest case ends at 02:00, padding zeros never enlarge the range
    const auto& midnight = s.columns()[static_cast<std::size_t>(spec.column(ExtraColumn::since_midnight))];
    CHECK(midnight.min == 0.0f);
    CHECK(midnight.max == doctest::Approx(2.0 / 24.0));
    const auto a = s, b = FeatureSampler::fit(spec, inst);
    CHECK(a == b);
    CHECK_THROWS_AS(FeatureSampler::fit(spec, {}), std::invalid_argument);
  }

  TEST_CASE("masked input keeps the subset and the forced features") {
    const auto spec = testing::small_spec(3, 4);
    const auto sampler = sampler_for(spec, 5.0f, 6.0f);
    const auto inst = testing::random_instances(spec, 30, 3);
    Rng rng(4);
    for (const auto& e : inst) {
      const Eigen::VectorXf x = Eigen::Map<const Eigen::VectorXf>(e.x.data(), e.x.size());
      std::vector<Index> subset;
      for (Index i = 0; i < x.size(); ++i)
        if (uniform01(rng) < 0.3) subset.push_back(i);
      const Eigen::VectorXf z = build_masked_input(x, subset, sampler, rng);
      for (const Index i : subset) CHECK(z(i) == x(i));
      for (const Index i : e.forced) CHECK(z(i) == x(i));
      const std::set<Index> in(subset.begin(), subset.end());
      // continuous draws come from [5, 6], far from the original values
      for (Index i = 0; i < x.size(); ++i)
        if (!in.count(i) && !sampler.is_forced(i) && i % spec.width() >= spec.activity_count()) CHECK(z(i) >= 5.0f);
    }
    const std::vector<Index> outside{99};
    CHECK_THROWS_AS(build_masked_input(Eigen::VectorXf::Zero(32), outside, sampler, rng), std::out_of_range);
  }

  TEST_CASE("noise_like consumes a fixed number of draws") {
    const auto spec = testing::small_spec(2, 3);
    const auto sampler = sampler_for(spec);
    const Eigen::MatrixXf x = Eigen::MatrixXf::Random(spec.feature_count(), 4);
    Rng a(1), b(1);
    const auto n1 = sampler.noise_like(x, a);
    const auto n2 = sampler.noise_like(Eigen::MatrixXf::Zero(spec.feature_count(), 4), b);
    CHECK(a() == b());
    for (const Index i : forced_features(spec)) {
      CHECK(n1.row(i) == x.row(i));
      CHECK(n2.row(i).isZero());
    }
  }

  TEST_CASE("dual propagation: z agrees with x on S, forced features always in S") {
    const auto spec = testing::small_spec(3, 4);
    const auto sampler = sampler_for(spec);
    const auto p = NapModelParams<float>::initialize(ModelShape::for_spec(spec, true, 6), 2);
    const auto inst = testing::random_instances(spec, 16, 5);
    const Eigen::MatrixXf x = instances_to_flat(inst);
    Rng primary(1), aux(2);
    const auto dp = dual_propagate<float>(p, x, 0.5, sampler, Mode::train, primary, aux);
    const auto forced = forced_features(spec);
    for (Index j = 0; j < x.cols(); ++j) {
      const auto& s = dp.subsets[static_cast<std::size_t>(j)];
      for (const Index f : forced) CHECK(std::binary_search(s.begin(), s.end(), f));
      for (const Index i : s) CHECK(dp.z(i, j) == x(i, j));
      CHECK(static_cast<std::size_t>(dp.hard_mask.col(j).sum()) == s.size());
    }
    CHECK(dp.predicted == predict_classes(dp.first.nap_probs));
    CHECK(dp.second.time_pred.size() == 0);
    CHECK_FALSE(dp.second.has_explanation());
  }

  TEST_CASE("tau near zero keeps every feature, so both passes agree") {
    const auto spec = testing::small_spec(3, 4);
    const auto sampler = sampler_for(spec);
    const auto p = NapModelParams<float>::initialize(ModelShape::for_spec(spec, true, 6), 3);
    const Eigen::MatrixXf x = instances_to_flat(testing::random_instances(spec, 8, 6));
    Rng primary(1), aux(2);
    const auto dp = dual_propagate<float>(p, x, 1e-12, sampler, Mode::infer, primary, aux);
    CHECK(dp.z == x);
    CHECK(dp.second.logits == dp.first.logits);
    // a full explanation preserves the prediction, so faithfulness loss is the CE of the model's own argmax
    const auto loss = senn_losses<float>(dp.first, dp.second.logits, dp.predicted, dp.predicted, dp.first.time_pred, 1.0, 0.0);
    CHECK(loss.values.faith == doctest::Approx(cross_entropy<float>(dp.first.logits, dp.predicted).value));
  }

  TEST_CASE("baseline model cannot dual-propagate") {
    const auto spec = testing::small_spec(3, 4);
    const auto p = NapModelParams<float>::initialize(ModelShape::for_spec(spec, false, 4), 3);
    Rng a(1), b(2);
    CHECK_THROWS_AS(dual_propagate<float>(p, instances_to_flat(testing::random_instances(spec, 2, 1)), 0.5,
                                          sampler_for(spec), Mode::infer, a, b),
                    ShapeError);
  }

  TEST_CASE("loss reductions") {
    Rng rng(3);
    ForwardOutputs<double> out;
    out.logits = checks::random_matrix(4, 3, rng, 2.0);
    out.nap_probs = softmax<double>(out.logits);
    out.time_pred = checks::random_matrix(1, 3, rng);
    out.explanation_scores = (checks::random_matrix(6, 3, rng).array() * 0.5 + 0.5).matrix();
    const std::vector<Index> targets{0, 3, 1}, predicted{2, 2, 0};
    const M times = checks::random_matrix(1, 3, rng);
    const M second = checks::random_matrix(4, 3, rng, 2.0);

    SUBCASE("lambda = xi = 0 is the baseline objective") {
      const auto l = senn_losses<double>(out, second, predicted, targets, times, 0.0, 0.0);
      const double ce = cross_entropy<double>(out.logits, targets).value;
      const double m = mae<double>(out.time_pred, times).value;
      CHECK(l.values.total == doctest::Approx(ce + m));
      CHECK(l.first.d_scores.isZero());
      CHECK(l.d_second_logits.isZero());
    }
    SUBCASE("all-zero scores have zero cardinality") {
      out.explanation_scores.setZero();
      CHECK(senn_losses<double>(out, second, predicted, targets, times, 1.0, 0.5).values.card == 0.0);
    }
    SUBCASE("second pass certain of the first-pass argmax has zero faithfulness loss") {
      M confident = M::Constant(4, 3, -50.0);
      for (Index j = 0; j < 3; ++j) confident(predicted[static_cast<std::size_t>(j)], j) = 50.0;
      CHECK(senn_losses<double>(out, confident, predicted, targets, times, 1.0, 0.0).values.faith < 1e-12);
    }
    SUBCASE("total weights the terms") {
      const auto l = senn_losses<double>(out, second, predicted, targets, times, 0.7, 0.01);
      CHECK(l.values.total ==
            doctest::Approx(l.values.ce + l.values.mae + 0.7 * l.values.faith + 0.01 * l.values.card));
      // the mean over the batch of per-instance L1 sums
      CHECK(l.values.card == doctest::Approx(out.explanation_scores.sum() / 3.0));
    }
  }

  TEST_CASE("straight-through gradient routes d_z * (x - noise) to the scores") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto p = checks::tiny_model(seed, true);
      const auto batch = checks::tiny_batch(p.shape, 3, derive_seed(seed, 6));
      const auto spec = testing::small_spec(2, 3);
      const auto sampler = sampler_for(spec);
      SennSettings settings;
      Rng primary(derive_seed(seed, 1)), aux(derive_seed(seed, 2));
      const auto dp = dual_propagate<double>(p, batch.x_flat, settings.tau, sampler, Mode::train, primary, aux);

      auto with = p.zeros_like(), without = p.zeros_like();
      selfexplain_gradients<double>(p, dp, batch.targets, batch.times, settings, with, true);
      selfexplain_gradients<double>(p, dp, batch.targets, batch.times, settings, without, false);

      // d_z by finite differences of the second-pass faithfulness term alone
      M z = dp.z;
      ForwardOptions opt;
      opt.mode = Mode::train;
      opt.time_head = false;
      opt.explanation_head = false;
      auto faith = [&] {
        Rng second_rng(0);
        const auto out = forward(p, flat_to_sequence<double>(z, 3, p.shape.width()), opt, &second_rng);
        return settings.lambda * cross_entropy<double>(out.logits, dp.predicted).value;
      };
      const M d_z = numeric_gradient(z, faith, checks::kFdStep);
      HeadGradients<double> heads;
      heads.d_scores = (d_z.array() * (dp.x.array() - dp.noise.array())).matrix();
      auto expected = p.zeros_like();
      backward(p, dp.first_cache, heads, expected);

      CHECK(max_relative_error(M(with.expl_out.W - without.expl_out.W), expected.expl_out.W) < checks::kTolerance);
      CHECK(max_relative_error(M(with.shared1.W - without.shared1.W), expected.shared1.W) < checks::kTolerance);
      // heads other than the explanation path are untouched
      CHECK(with.act_out.W == without.act_out.W);
    }
  }

  TEST_CASE("masking identity holds on every training batch") {
    const auto spec = testing::small_spec(3, 4);
    const auto sampler = sampler_for(spec);
    const auto train = testing::random_instances(spec, 40, 1);
    const auto val = testing::random_instances(spec, 8, 2);
    TrainConfig cfg;
    cfg.mode = TrainMode::selfexplain;
    cfg.hidden = 5;
    cfg.batch_size = 16;
    cfg.max_epochs = 3;
    cfg.xi = 1e-3;
    std::size_t batches = 0, violations = 0;
    fit(train, val, spec, sampler, cfg, [&](const BatchEvent& ev) {
      REQUIRE(ev.dual != nullptr);
      ++batches;
      const auto& d = *ev.dual;
      for (Index j = 0; j < d.x.cols(); ++j)
        for (const Index i : d.subsets[static_cast<std::size_t>(j)])
          if (d.z(i, j) != d.x(i, j)) ++violations;
    });
    CHECK(batches == 9);
    CHECK(violations == 0);
  }

  TEST_CASE("inference-time explanation") {
    const auto spec = testing::small_spec(3, 4);
    const auto p = NapModelParams<float>::initialize(ModelShape::for_spec(spec, true, 6), 4);
    const auto inst = testing::random_instances(spec, 3, 7);
    for (const auto& e : inst) {
      const auto ex = explain_instance(p, e, 0.5);
      const auto out = infer(p, Eigen::MatrixXf(Eigen::Map<const Eigen::VectorXf>(e.x.data(), e.x.size())));
      CHECK(ex.predicted == predict_class(out.nap_probs.col(0)));
      CHECK(ex.scores.size() == static_cast<std::size_t>(spec.feature_count()));
      for (const Index f : e.forced) CHECK(std::binary_search(ex.subset.begin(), ex.subset.end(), f));
      CHECK(ex.seconds >= 0.0);
    }
    const auto base = NapModelParams<float>::initialize(ModelShape::for_spec(spec, false, 6), 4);
    CHECK_THROWS_AS(explain_instance(base, inst[0], 0.5), std::invalid_argument);
  }
}
