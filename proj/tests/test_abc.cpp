#include <algorithm>
#include <cmath>
#include <vector>

#include "catch_amalgamated.hpp"

#include "abcdic/abc.hpp"
#include "abcdic/toy_models.hpp"

using namespace abcdic;

namespace {

using Transforms = std::shared_ptr<const std::vector<Transform>>;

Transforms transforms_of(std::vector<Transform> t) { return std::make_shared<const std::vector<Transform>>(std::move(t)); }

// Table with one statistic per column of `stats` and one identity parameter.
ReferenceTable hand_table(const std::vector<std::vector<double>>& stats, const std::vector<double>& params,
                          const std::vector<std::size_t>& models = {}) {
  const std::size_t d = stats.front().size();
  Names names;
  for (std::size_t k = 0; k < d; ++k) names.push_back("s" + std::to_string(k));
  std::size_t n_models = models.empty() ? 1 : *std::max_element(models.begin(), models.end()) + 1;
  std::vector<TableModel> meta;
  for (std::size_t m = 0; m < n_models; ++m) {
    meta.push_back({"m" + std::to_string(m), make_names({"x"}), transforms_of({Transform::identity()})});
  }
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    rows.push_back({i, models.empty() ? 0 : models[i], {params[i]}, stats[i]});
  }
  return ReferenceTable(std::move(meta), make_names(std::move(names)), 0, std::move(rows));
}

SummaryVector observed(const ReferenceTable& t, std::vector<double> v) { return SummaryVector(std::move(v), t.stat_names_ptr()); }

}  // namespace

TEST_CASE("standardization examples") {
  // constant column falls back to 1, 1..5 has MAD 1 scaled by 1.4826
  std::vector<std::vector<double>> stats;
  for (int i = 1; i <= 5; ++i) stats.push_back({5.0, static_cast<double>(i), 10.0 * i});
  const ReferenceTable t = hand_table(stats, {0, 0, 0, 0, 0});
  const Standardization s = standardize(t);
  CHECK(s.scales[0] == 1.0);
  CHECK(s.scales[1] == Catch::Approx(1.4826).epsilon(1e-12));
  CHECK(s.scales[2] == Catch::Approx(14.826).epsilon(1e-12));
}

TEST_CASE("standardization falls back to the sample SD when the MAD vanishes") {
  const ReferenceTable t = hand_table({{0}, {0}, {0}, {0}, {10}}, {0, 0, 0, 0, 0});
  CHECK(standardize(t).scales[0] == Catch::Approx(std::sqrt(20.0)).epsilon(1e-12));
}

TEST_CASE("standardization is equivariant under affine maps") {
  Rng rng(3);
  std::vector<std::vector<double>> a, b;
  for (int i = 0; i < 101; ++i) {
    const double x = rng.normal();
    a.push_back({x});
    b.push_back({7.0 - 3.0 * x});
  }
  const std::vector<double> p(101, 0.0);
  CHECK(standardize(hand_table(b, p)).scales[0] == Catch::Approx(3.0 * standardize(hand_table(a, p)).scales[0]));
}

TEST_CASE("distance examples") {
  const ReferenceTable t = hand_table({{0, 0}, {1, 1}}, {0, 0});
  const auto s0 = observed(t, {0, 0});
  CHECK(distance(s0, s0, Standardization::unit(2)) == 0.0);
  CHECK(distance(observed(t, {3, 4}), s0, Standardization::unit(2)) == 5.0);
  CHECK(distance(observed(t, {3, 4}), s0, Standardization{{2.0, 2.0}}) == 2.5);
}

TEST_CASE("rejection keeps the rate-quantile and weights by Epanechnikov") {
  std::vector<std::vector<double>> stats;
  std::vector<double> params;
  for (int i = 0; i < 10; ++i) {
    stats.push_back({static_cast<double>(i)});
    params.push_back(i);
  }
  const ReferenceTable t = hand_table(stats, params);
  const PosteriorSample s = reject(t, observed(t, {0}), 0.2, Standardization::unit(1));
  CHECK(s.tolerance == 1.0);
  REQUIRE(s.rows.size() == 2);
  CHECK(s.rows[0].weight == 1.0);
  CHECK(s.rows[1].weight == 0.0);
  CHECK(s.model == PosteriorSample::all_models);
  CHECK_THROWS_AS(reject(t, observed(t, {0}), 0.1, Standardization::unit(1)), Error);
  CHECK_THROWS_AS(reject(t, observed(t, {0}), 0.2, Standardization::unit(1), "nope"), Error);
}

TEST_CASE("rejection accepts every row tied at the threshold") {
  const ReferenceTable t = hand_table({{0}, {1}, {1}, {1}, {5}, {6}, {7}, {8}, {9}, {10}}, std::vector<double>(10, 0.0));
  const PosteriorSample s = reject(t, observed(t, {0}), 0.2, Standardization::unit(1));
  CHECK(s.rows.size() == 4);
}

TEST_CASE("all-threshold acceptances get unit weights") {
  const ReferenceTable t = hand_table({{1}, {1}, {1}, {1}}, {0, 1, 2, 3});
  const PosteriorSample s = reject(t, observed(t, {0}), 0.5, Standardization::unit(1));
  for (const auto& r : s.rows) CHECK(r.weight == 1.0);
}

TEST_CASE("rejection invariants on a toy table") {
  const std::vector<ModelSpec> models{toy::gaussian_model(), toy::laplace_model()};
  const ReferenceTable t = build_reference_table(models, 2000, 8);
  const SummaryVector s0 = toy::observed_fixture();
  const Standardization st = standardize(t);
  for (double rate : {0.01, 0.05, 0.1, 0.5}) {
    const PosteriorSample s = reject(t, s0, rate, st);
    CHECK(s.rows.size() >= acceptance_count(rate, t.size()));
    double total = 0.0;
    for (const auto& r : s.rows) {
      CHECK(r.distance <= s.tolerance);
      CHECK(r.weight >= 0.0);
      CHECK(r.weight <= 1.0);
      total += r.weight;
    }
    CHECK(total > 0.0);
  }
}

TEST_CASE("regression adjustment recovers an exact linear relation") {
  // theta = 2 + 3 s1 - s2 exactly: every adjusted value equals the fit at s0
  Rng rng(5);
  std::vector<std::vector<double>> stats;
  std::vector<double> params;
  for (int i = 0; i < 400; ++i) {
    const double a = rng.normal(), b = rng.normal();
    stats.push_back({a, b});
    params.push_back(2.0 + 3.0 * a - b);
  }
  const ReferenceTable t = hand_table(stats, params);
  const auto s0 = observed(t, {0.3, -0.2});
  const PosteriorSample s = adjust_loclinear(reject(t, s0, 0.5), t, s0);
  CHECK(s.adjusted);
  for (const auto& r : s.rows) CHECK(r.adjusted[0] == Catch::Approx(2.0 + 0.9 + 0.2).margin(1e-9));
}

TEST_CASE("exact linear recovery holds on the log scale") {
  Rng rng(6);
  std::vector<std::vector<double>> stats;
  std::vector<double> params;
  for (int i = 0; i < 300; ++i) {
    const double a = rng.normal();
    stats.push_back({a});
    params.push_back(std::exp(0.5 + 2.0 * a));
  }
  ReferenceTable base = hand_table(stats, params);
  std::vector<TableModel> meta{{"m0", make_names({"x"}), transforms_of({Transform::log()})}};
  const ReferenceTable t(meta, base.stat_names_ptr(), 0, base.rows());
  const auto s0 = observed(t, {0.1});
  const PosteriorSample s = adjust_loclinear(reject(t, s0, 0.3, std::string("m0")), t, s0);
  for (const auto& r : s.rows) CHECK(r.adjusted[0] == Catch::Approx(std::exp(0.7)).epsilon(1e-9));
}

TEST_CASE("adjustment is the identity when statistics equal the observation") {
  // rank-deficient design: the ridge path leaves theta unchanged
  std::vector<std::vector<double>> stats(20, std::vector<double>{1.0, 2.0});
  std::vector<double> params;
  for (int i = 0; i < 20; ++i) params.push_back(i * 0.5);
  const ReferenceTable t = hand_table(stats, params);
  const auto s0 = observed(t, {1.0, 2.0});
  const PosteriorSample s = adjust_loclinear(reject(t, s0, 1.0), t, s0);
  for (const auto& r : s.rows) CHECK(r.adjusted[0] == r.raw[0]);
}

TEST_CASE("adjustment keeps bounded parameters inside their support") {
  const std::vector<ModelSpec> models{toy::laplace_model()};
  const ReferenceTable t = build_reference_table(models, 5000, 12);
  const SummaryVector s0 = toy::observed_fixture();
  const PosteriorSample s = adjust_loclinear(reject(t, s0, 0.1, std::string("laplace")), t, s0);
  for (const auto& r : s.rows) {
    CHECK(r.adjusted[0] > 0.0);
    CHECK(std::isfinite(r.adjusted[0]));
  }
}

TEST_CASE("adjustment needs more rows than regressors") {
  const ReferenceTable t = hand_table({{0, 0}, {1, 0}, {0, 1}, {1, 1}}, {0, 1, 2, 3});
  const auto s0 = observed(t, {0, 0});
  CHECK_THROWS_AS(adjust_loclinear(reject(t, s0, 0.5), t, s0), Error);
}

TEST_CASE("count model probabilities") {
  // rows 0..9 alternate between two models; the 4 nearest are 3 of m0 and 1 of m1
  const ReferenceTable t = hand_table({{0}, {1}, {2}, {3}, {10}, {11}, {12}, {13}, {14}, {15}}, std::vector<double>(10, 0),
                                      {0, 0, 0, 1, 1, 1, 1, 1, 1, 1});
  const ModelProbabilities mp = model_probs_count(t, observed(t, {0}), 0.4, Standardization::unit(1));
  CHECK(mp.probs[0] == 0.75);
  CHECK(mp.probs[1] == 0.25);
  CHECK(mp.bayes_factors[0][1] == 3.0);
  CHECK_FALSE(mp.infinite_bayes_factor);
}

TEST_CASE("a model without acceptances has an infinite Bayes factor against it") {
  const ReferenceTable t = hand_table({{0}, {1}, {10}, {11}}, std::vector<double>(4, 0), {0, 0, 1, 1});
  for (const ModelProbabilities& mp : {model_probs_count(t, observed(t, {0}), 0.5, Standardization::unit(1)),
                                       model_probs_mnlogistic(t, observed(t, {0}), 0.5, Standardization::unit(1))}) {
    CHECK(mp.probs[0] == 1.0);
    CHECK(mp.probs[1] == 0.0);
    CHECK(std::isinf(mp.bayes_factors[0][1]));
    CHECK(mp.infinite_bayes_factor);
  }
}

TEST_CASE("multinomial logistic probabilities are a distribution") {
  const std::vector<ModelSpec> models{toy::gaussian_model(), toy::laplace_model()};
  const ReferenceTable t = build_reference_table(models, 4000, 21);
  for (const SummaryVector& s0 :
       {toy::observed_fixture(), SummaryVector({3.0, 1.0, 0.1, 2.5}, toy::stat_names())}) {
    const ModelProbabilities mp = model_probs_mnlogistic(t, s0, 0.1);
    CHECK(mp.probs[0] + mp.probs[1] == Catch::Approx(1.0).margin(1e-12));
    CHECK(mp.probs[0] > 0.0);
    CHECK(mp.probs[1] > 0.0);
    CHECK(mp.bayes_factors[1][0] == Catch::Approx(mp.probs[1] / mp.probs[0]));
  }
}

TEST_CASE("logistic regression agrees with counting when statistics carry no information") {
  // both models simulate the same statistic distribution
  auto names = make_names({"a"});
  auto sim = [names](const ParamVector&, std::uint64_t seed) {
    Rng rng(seed);
    return SummaryVector({rng.normal()}, names);
  };
  const std::vector<ModelSpec> models{ModelSpec("p", {ParamDef("x", Uniform(0, 1))}, names, sim),
                                      ModelSpec("q", {ParamDef("x", Uniform(0, 1))}, names, sim)};
  const ReferenceTable t = build_reference_table(models, 5000, 4);
  const SummaryVector s0({0.2}, names);
  const auto count = model_probs_count(t, s0, 0.2);
  const auto logit = model_probs_mnlogistic(t, s0, 0.2);
  CHECK(logit.probs[0] == Catch::Approx(count.probs[0]).margin(0.05));
  CHECK(logit.probs[0] == Catch::Approx(0.5).margin(0.06));
}
