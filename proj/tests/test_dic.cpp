#include <cmath>
#include <numbers>
#include <vector>

#include "catch_amalgamated.hpp"

#include "abcdic/dic.hpp"
#include "abcdic/toy_models.hpp"

using namespace abcdic;

namespace {

const double log_2pi = std::log(2.0 * std::numbers::pi);

// Simulator that ignores theta and always returns the same statistics.
ModelSpec fixed_model(std::vector<double> values) {
  auto names = make_names({"a", "b", "c", "d"});
  return ModelSpec("fixed", {ParamDef("x", Uniform(0, 1))}, names,
                   [names, values](const ParamVector&, std::uint64_t) { return SummaryVector(values, names); });
}

// s ~ N(x, 1) in one dimension.
ModelSpec shift_model() {
  auto names = make_names({"s"});
  return ModelSpec("shift", {ParamDef("x", Gaussian(0, 2))}, names, [names](const ParamVector& p, std::uint64_t seed) {
    Rng rng(seed);
    return SummaryVector({p[0] + rng.normal()}, names);
  });
}

PosteriorSample posterior_of(const std::vector<ModelSpec>& models, std::size_t n, std::uint64_t seed,
                             const SummaryVector& s0) {
  const ReferenceTable t = build_reference_table(models, n, seed);
  return adjust_loclinear(reject(t, s0, 0.1, models.front().label()), t, s0);
}

PosteriorSample single_row_sample(const ModelSpec& model, std::vector<double> raw, std::vector<double> observed) {
  PosteriorSample s;
  s.model = model.label();
  s.models = {{model.label(), model.param_names(), model.transforms()}};
  s.rows.push_back({0, 0, raw, raw, 1.0, 0.0});
  s.observed = std::move(observed);
  s.tolerance = 1.0;
  return s;
}

}  // namespace

TEST_CASE("kernel identities at the origin") {
  auto names4 = make_names({"a", "b", "c", "d"});
  const SummaryVector s4({1, 2, 3, 4}, names4);
  CHECK(std::abs(neg2_log_kernel(s4, s4, KernelConfig(1.0, {1, 1, 1, 1})) - 4 * log_2pi) < 1e-12);
  auto names1 = make_names({"a"});
  const SummaryVector s1({0.5}, names1);
  CHECK(std::abs(neg2_log_kernel(s1, s1, KernelConfig(1.0, {1})) - log_2pi) < 1e-12);
  auto names2 = make_names({"a", "b"});
  const SummaryVector a({1, 1}, names2), o({0, 0}, names2);
  CHECK(neg2_log_kernel(a, o, KernelConfig(1.0, {1, 1})) == Catch::Approx(2 * log_2pi + 2).epsilon(1e-14));
  CHECK(neg2_log_kernel(a, o, KernelConfig(1.0, {1, 1}, false)) == 2.0);
  CHECK_THROWS_AS(neg2_log_kernel(a, SummaryVector({0, 0}, make_names({"x", "y"})), KernelConfig(1.0, {1, 1})), Error);
}

TEST_CASE("kernel deviance grows along every ray from the observation") {
  auto names = make_names({"a", "b", "c"});
  const SummaryVector o({0.3, -1, 2}, names);
  const KernelConfig k(0.7, {1.0, 2.0, 0.5});
  Rng rng(1);
  for (int ray = 0; ray < 50; ++ray) {
    const std::vector<double> dir{rng.normal(), rng.normal(), rng.normal()};
    double last = neg2_log_kernel(o, o, k);
    for (double t = 0.1; t < 5; t += 0.1) {
      const SummaryVector s({0.3 + t * dir[0], -1 + t * dir[1], 2 + t * dir[2]}, names);
      const double v = neg2_log_kernel(s, o, k);
      REQUIRE(v > last);
      last = v;
    }
  }
}

TEST_CASE("DicReport arithmetic identities are exact") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double d_bar = 100 * rng.normal(), d_hat = 100 * rng.normal();
    const DicReport r = DicReport::make(2, d_bar, d_hat, Aggregation::mean, 10, 10, 1.0, {});
    REQUIRE(r.p_d == d_bar - d_hat);
    REQUIRE(r.dic == r.d_bar + r.p_d);
    REQUIRE((r.p_d < 0) == !r.warnings.empty());
  }
}

TEST_CASE("point estimate examples") {
  const ModelSpec lin = shift_model();
  PosteriorSample s = single_row_sample(lin, {1.0}, {0.0});
  CHECK(point_estimate(s)[0] == 1.0);
  s.rows.push_back({1, 0, {3.0}, {3.0}, 1.0, 0.0});
  CHECK(point_estimate(s)[0] == 2.0);

  auto names = make_names({"s"});
  const ModelSpec pos("pos", {ParamDef("x", Exponential(1))}, names,
                      [names](const ParamVector&, std::uint64_t) { return SummaryVector({0.0}, names); });
  PosteriorSample g = single_row_sample(pos, {std::exp(1.0)}, {0.0});
  g.rows.push_back({1, 0, {std::exp(3.0)}, {std::exp(3.0)}, 1.0, 0.0});
  CHECK(point_estimate(g)[0] == Catch::Approx(std::exp(2.0)).epsilon(1e-14));

  g.rows[0].weight = g.rows[1].weight = 0.0;
  CHECK_THROWS_AS(point_estimate(g), Error);
}

TEST_CASE("degenerate predictive gives the kernel constant and zero pD") {
  const ModelSpec m = fixed_model({1, 2, 3, 4});
  PosteriorSample s = single_row_sample(m, {0.5}, {1, 2, 3, 4});
  s.rows.push_back({1, 0, {0.25}, {0.25}, 0.5, 0.0});
  const KernelConfig k(1.0, {1, 1, 1, 1});
  for (std::size_t n : {1u, 7u, 50u}) {
    CHECK(std::abs(dbar1(s, m, n, k, Aggregation::mean, 9) - 4 * log_2pi) < 1e-12);
    CHECK(std::abs(dbar2(s, m, 3, n, k, Aggregation::mean, 9) - 4 * log_2pi) < 1e-12);
  }
  CHECK(dic1(s, m, 20, k, Aggregation::mean, 9).p_d == 0.0);
  CHECK(dic2(s, m, 5, 5, k, Aggregation::median, 9).p_d == 0.0);
}

TEST_CASE("single-term estimators collapse to one kernel evaluation") {
  const ModelSpec m = shift_model();
  const PosteriorSample s = single_row_sample(m, {0.4}, {0.0});
  const KernelConfig k(1.0, {1.0});
  const SummaryVector s0({0.0}, m.stat_names());
  const auto streams = detail::dic_streams(5);
  const SummaryVector sim = m.simulate(s.adjusted_params(0), child_seed(streams.simulation, 0));
  const double expected = neg2_log_kernel(sim, s0, k);
  CHECK(dbar1(s, m, 1, k, Aggregation::mean, 5) == Catch::Approx(expected).epsilon(1e-14));
  CHECK(dbar2(s, m, 1, 1, k, Aggregation::mean, 5) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("DIC values are deterministic and independent of the thread count") {
  const std::vector<ModelSpec> models{toy::gaussian_model()};
  const SummaryVector s0 = toy::observed_fixture();
  const PosteriorSample s = posterior_of(models, 3000, 17, s0);
  const KernelConfig k(1.0, std::vector<double>(4, 1.0), false);
  const DicReport a = dic1(s, models[0], 300, k, Aggregation::mean, 77, 1);
  const DicReport b = dic2(s, models[0], 30, 30, k, Aggregation::mean, 77, 1);
  for (unsigned threads : {1u, 2u, 5u}) {
    CHECK(dic1(s, models[0], 300, k, Aggregation::mean, 77, threads).dic == a.dic);
    CHECK(dic2(s, models[0], 30, 30, k, Aggregation::mean, 77, threads).dic == b.dic);
  }
  CHECK(dic1(s, models[0], 300, k, Aggregation::mean, 78).dic != a.dic);
}

TEST_CASE("a parameter-free simulator gives pD near zero") {
  auto names = make_names({"s"});
  const ModelSpec noise("noise", {ParamDef("x", Gaussian(0, 1))}, names, [names](const ParamVector&, std::uint64_t seed) {
    Rng rng(seed);
    return SummaryVector({rng.normal()}, names);
  });
  PosteriorSample s = single_row_sample(noise, {-1.0}, {0.3});
  s.rows.push_back({1, 0, {1.0}, {1.0}, 1.0, 0.0});
  const DicReport r = dic1(s, noise, 2000, KernelConfig(1.0, {1.0}), Aggregation::mean, 3);
  // common random numbers make dBar and dHat use identical simulations
  CHECK(std::abs(r.p_d) < 1e-12);
}

TEST_CASE("second-level deviance does not exceed the first-level one") {
  const std::vector<ModelSpec> models{shift_model()};
  const SummaryVector s0({0.5}, models[0].stat_names());
  const PosteriorSample s = posterior_of(models, 2000, 23, s0);
  const KernelConfig k(0.8, {1.0});
  // per theta_i, -2 log mean K <= mean of -2 log K over the same simulations
  const std::size_t m = 40, n = 25;
  const std::vector<double> mat = predictive_deviance_matrix(s, models[0], m, n, k, 31, 1);
  double d2 = 0.0, d1 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::span<const double> group(mat.data() + i * n, n);
    const double lme = detail::neg2_log_mean_kernel(group);
    double avg = 0.0;
    for (double v : group) avg += v;
    avg /= static_cast<double>(n);
    CHECK(lme <= avg + 1e-12);
    d2 += lme;
    d1 += avg;
  }
  CHECK(dbar2(s, models[0], m, n, k, Aggregation::mean, 31) == Catch::Approx(d2 / m).epsilon(1e-12));
  CHECK(d2 <= d1);
}

TEST_CASE("shifting every statistic leaves DIC unchanged") {
  auto names = make_names({"s"});
  auto make = [names](double shift) {
    return ModelSpec("shift", {ParamDef("x", Gaussian(0, 2))}, names, [names, shift](const ParamVector& p, std::uint64_t seed) {
      Rng rng(seed);
      return SummaryVector({p[0] + rng.normal() + shift}, names);
    });
  };
  std::vector<DicReport> reports;
  for (double shift : {0.0, 1000.0}) {
    const std::vector<ModelSpec> models{make(shift)};
    const SummaryVector s0({0.5 + shift}, names);
    const ReferenceTable t = build_reference_table(models, 2000, 4);
    const PosteriorSample s = adjust_loclinear(reject(t, s0, 0.1), t, s0);
    const KernelConfig k(s.tolerance, s.standardization.scales);
    reports.push_back(dic2(s, models[0], 20, 20, k, Aggregation::mean, 8));
    reports.push_back(dic1(s, models[0], 200, k, Aggregation::mean, 8));
  }
  CHECK(reports[0].dic == Catch::Approx(reports[2].dic).margin(1e-9));
  CHECK(reports[1].dic == Catch::Approx(reports[3].dic).margin(1e-9));
}

TEST_CASE("Monte-Carlo error of dBar1 shrinks with the square root of n") {
  const std::vector<ModelSpec> models{shift_model()};
  const SummaryVector s0({0.5}, models[0].stat_names());
  const PosteriorSample s = posterior_of(models, 2000, 29, s0);
  const KernelConfig k(1.0, {1.0});
  auto spread = [&](std::size_t n) {
    std::vector<double> v;
    for (std::uint64_t r = 0; r < 20; ++r) v.push_back(dbar1(s, models[0], n, k, Aggregation::mean, 1000 + r));
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= 20;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / 19);
  };
  const double ratio = spread(100) / spread(1000);
  CHECK(ratio > std::sqrt(10.0) / 2);
  CHECK(ratio < std::sqrt(10.0) * 2);
}

TEST_CASE("predictive check quantiles") {
  const ModelSpec m = shift_model();
  SECTION("observation at the predictive median") {
    // fixed draws {-1, 0, 1}: the observation 0 is tied with the middle draw
    auto names = make_names({"s"});
    const ModelSpec three("three", {ParamDef("x", Gaussian(0, 1))}, names, [names](const ParamVector&, std::uint64_t seed) {
      return SummaryVector({static_cast<double>(static_cast<int>(seed % 3) - 1)}, names);
    });
    const PosteriorSample s = single_row_sample(three, {0.0}, {0.0});
    const auto pc = predictive_check(s, three, 999, 4);
    double below = 0, equal = 0;
    for (const auto& d : pc.draws) {
      below += d[0] < 0;
      equal += d[0] == 0;
    }
    CHECK(pc.entries[0].quantile == Catch::Approx((below + equal / 2 + 0.5) / 1000).epsilon(1e-14));
  }
  SECTION("observation above every draw") {
    const PosteriorSample s = single_row_sample(m, {0.0}, {100.0});
    const auto pc = predictive_check(s, m, 500, 2);
    CHECK(pc.entries[0].tail_prob <= 2.0 / 501);
    CHECK(pc.draws.size() == 500);
  }
  SECTION("central observation of a symmetric predictive") {
    const ModelSpec fixed = fixed_model({1, 2, 3, 4});
    const PosteriorSample s = single_row_sample(fixed, {0.5}, {1, 2, 3, 4});
    const auto pc = predictive_check(s, fixed, 100, 2);
    for (const auto& e : pc.entries) CHECK(e.tail_prob == 1.0);
  }
}
