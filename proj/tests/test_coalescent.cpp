#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "catch_amalgamated.hpp"

#include "abcdic/coalescent.hpp"

using namespace abcdic;
using namespace abcdic::coal;

namespace {

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

double harmonic(int n) {
  double a = 0.0;
  for (int k = 1; k < n; ++k) a += 1.0 / k;
  return a;
}

LocusData haplotypes(SampleConfig config, std::vector<std::string> rows) {
  // rows are haplotypes; transpose to one column per site
  LocusData out{config, {}};
  for (std::size_t s = 0; s < rows.front().size(); ++s) {
    std::vector<std::uint8_t> column;
    for (const auto& r : rows) column.push_back(r[s] == '1');
    out.sites.push_back(column);
  }
  return out;
}

}  // namespace

TEST_CASE("pair coalescence time has mean 1 in internal units") {
  std::vector<double> t;
  Genealogy g;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    Rng rng(child_seed(1, i));
    simulate_genealogy(Demography::constant(), {2, 0}, rng, g);
    t.push_back(g.tmrca());
  }
  const Moments m = moments(t);
  CHECK(std::abs(m.mean - 1.0) < 4 * m.se);
}

TEST_CASE("genealogies are well formed") {
  for (const Demography& d : {Demography::constant(), Demography::bottleneck(0.2, 0.25),
                              Demography::exponential_growth(2.0)}) {
    const Genealogy g = simulate_genealogy(d, {30, 0}, 4);
    CHECK(g.leaf_counts[static_cast<std::size_t>(g.root)][0] == 30);
    CHECK(g.parent[static_cast<std::size_t>(g.root)] == -1);
    for (int v = 0; v < g.root; ++v) CHECK(g.branch_length(v) >= 0.0);
  }
  const Genealogy g = simulate_genealogy(Demography::isolation_migration(1.0, 0.5, 2.0, 1.0, 0.5), {10, 15}, 5);
  CHECK(g.leaf_counts[static_cast<std::size_t>(g.root)] == std::array<int, 2>{10, 15});
}

TEST_CASE("genealogies are deterministic under a fixed seed") {
  const Demography d = Demography::isolation_migration(0.5, 1.0, 1.0, 2.0, 2.0);
  const Genealogy a = simulate_genealogy(d, {20, 20}, 9);
  const Genealogy b = simulate_genealogy(d, {20, 20}, 9);
  CHECK(a.time == b.time);
  CHECK(a.parent == b.parent);
}

TEST_CASE("separated demes without migration or split have no common ancestor") {
  const Demography d = Demography::isolation(infinity, 1.0, 1.0);
  try {
    simulate_genealogy(d, {1, 1}, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("no common ancestor possible") != std::string::npos);
  }
}

TEST_CASE("E[pi] = theta for a pair of sequences") {
  std::vector<double> pi;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    const SummaryVector s = simulate_loci(Demography::constant(), {2, 0}, 3.0, 1, child_seed(2, i));
    pi.push_back(s[0]);
  }
  const Moments m = moments(pi);
  CHECK(std::abs(m.mean - 3.0) < 4 * m.se);
}

TEST_CASE("E[S] = theta a_n and E[pi] = theta at 10^5 loci") {
  const int n = 100;
  const double theta = 3.0;
  std::vector<double> s, pi;
  Genealogy g;
  std::vector<int> branches;
  std::vector<double> cumulative;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    Rng rng(child_seed(3, i));
    simulate_genealogy(Demography::constant(), {n, 0}, rng, g);
    place_mutations(g, theta, rng, branches, cumulative);
    SiteSpectrum spec{{n, 0}, {}};
    for (int v : branches) spec.sites.push_back(g.leaf_counts[static_cast<std::size_t>(v)]);
    const PopGenStats st = compute_stats(spec);
    s.push_back(st.segregating);
    pi.push_back(st.pi);
  }
  const Moments ms = moments(s), mp = moments(pi);
  CHECK(std::abs(ms.mean - theta * harmonic(n)) < 4 * ms.se);
  CHECK(std::abs(mp.mean - theta) < 4 * mp.se);
}

TEST_CASE("the numerator of Tajima's D is unbiased at 10^5 loci") {
  // E[pi] = E[S / a_n] = theta; D itself has a small negative mean
  const int n = 100;
  std::vector<double> num;
  Genealogy g;
  std::vector<int> branches;
  std::vector<double> cumulative;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    Rng rng(child_seed(9, i));
    simulate_genealogy(Demography::constant(), {n, 0}, rng, g);
    place_mutations(g, 3.0, rng, branches, cumulative);
    SiteSpectrum spec{{n, 0}, {}};
    for (int v : branches) spec.sites.push_back(g.leaf_counts[static_cast<std::size_t>(v)]);
    const PopGenStats st = compute_stats(spec);
    num.push_back(st.pi - st.segregating / harmonic(n));
  }
  const Moments m = moments(num);
  CHECK(std::abs(m.mean) < 4 * m.se);
}

TEST_CASE("mean Tajima's D under the neutral constant model is near zero") {
  std::vector<double> d;
  for (std::uint64_t r = 0; r < 100; ++r) {
    d.push_back(simulate_loci(Demography::constant(), {100, 0}, 3.0, 20, child_seed(4, r))[1]);
  }
  CHECK(std::abs(moments(d).mean) < 0.15);
}

TEST_CASE("F_ST of an arbitrary split of one panmictic sample is near zero") {
  std::vector<double> f;
  for (std::uint64_t r = 0; r < 1000; ++r) {
    const Genealogy g = simulate_genealogy(Demography::constant(), {100, 0}, child_seed(5, r));
    LocusData locus = drop_mutations(g, 3.0, child_seed(6, r));
    // leaf labels are exchangeable, so the first 50 form an arbitrary deme
    locus.sample_config = {50, 50};
    const PopGenStats st = compute_stats(locus);
    if (st.fst) f.push_back(*st.fst);
  }
  CHECK(f.size() > 900);
  CHECK(std::abs(moments(f).mean) < 0.02);
}

TEST_CASE("null F_ST is unbiased at 10^5 loci") {
  // averaging a per-locus ratio leaves a bias near -1.6e-4, about 3 SE here
  std::vector<double> f;
  for (std::uint64_t r = 0; r < 100000; ++r) {
    const Genealogy g = simulate_genealogy(Demography::constant(), {100, 0}, child_seed(7, r));
    LocusData locus = drop_mutations(g, 3.0, child_seed(8, r));
    locus.sample_config = {50, 50};
    if (const auto fst = compute_stats(locus).fst) f.push_back(*fst);
  }
  const Moments m = moments(f);
  CHECK(std::abs(m.mean) < 4 * m.se);
}

TEST_CASE("degenerate growth and bottleneck reproduce the constant sample path") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Genealogy c = simulate_genealogy(Demography::constant(), {50, 0}, seed);
    const Genealogy a = simulate_genealogy(Demography::exponential_growth(0.0), {50, 0}, seed);
    const Genealogy b = simulate_genealogy(Demography::bottleneck(0.3, 1.0), {50, 0}, seed);
    CHECK(a.time == c.time);
    CHECK(a.parent == c.parent);
    CHECK(b.time == c.time);
    CHECK(b.parent == c.parent);
  }
  const SummaryVector c = simulate_loci(Demography::constant(), {100, 0}, 3.0, 20, 7);
  CHECK(simulate_loci(Demography::exponential_growth(0.0), {100, 0}, 3.0, 20, 7) == c);
  CHECK(simulate_loci(Demography::bottleneck(0.2, 1.0), {100, 0}, 3.0, 20, 7) == c);
}

TEST_CASE("statistics are invariant to haplotype order within a deme") {
  const Genealogy g = simulate_genealogy(Demography::isolation_migration(1.0, 1.0, 1.0, 1.0, 1.0), {20, 20}, 8);
  const LocusData locus = drop_mutations(g, 5.0, 9);
  REQUIRE(!locus.sites.empty());
  const PopGenStats ref = compute_stats(locus);
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> perm(40);
    std::iota(perm.begin(), perm.begin() + 20, 0);
    std::iota(perm.begin() + 20, perm.end(), 20);
    std::shuffle(perm.begin(), perm.begin() + 20, gen);
    std::shuffle(perm.begin() + 20, perm.end(), gen);
    LocusData p = locus;
    for (std::size_t s = 0; s < locus.sites.size(); ++s) {
      for (std::size_t h = 0; h < 40; ++h) p.sites[s][h] = locus.sites[s][static_cast<std::size_t>(perm[h])];
    }
    const PopGenStats st = compute_stats(p);
    CHECK(st.pi == ref.pi);
    CHECK(st.tajima_d == ref.tajima_d);
    CHECK(st.fay_wu_h == ref.fay_wu_h);
    CHECK(st.fst == ref.fst);
  }
}

TEST_CASE("single-locus statistic examples") {
  const PopGenStats a = compute_stats(haplotypes({2, 0}, {"111", "000"}));
  CHECK(a.pi == 3.0);
  CHECK(a.segregating == 3);

  const PopGenStats b = compute_stats(haplotypes({2, 0}, {"1", "0"}));
  CHECK(b.pi == 1.0);
  CHECK(b.fay_wu_h == 0.0);

  const PopGenStats none = compute_stats(haplotypes({4, 0}, {"", "", "", ""}));
  CHECK(none.segregating == 0);
  CHECK_FALSE(none.tajima_d.has_value());

  // identical haplotype sets give -1/(n_d - 1), which vanishes as demes grow
  const PopGenStats same = compute_stats(haplotypes({2, 2}, {"10", "01", "10", "01"}));
  REQUIRE(same.fst.has_value());
  CHECK(*same.fst == Catch::Approx(-1.0).epsilon(1e-15));
  const PopGenStats same4 = compute_stats(haplotypes({4, 4}, {"1", "1", "0", "0", "1", "0", "1", "0"}));
  CHECK(*same4.fst == Catch::Approx(-1.0 / 3.0).epsilon(1e-14));
  const PopGenStats fixed = compute_stats(haplotypes({2, 2}, {"11", "11", "00", "00"}));
  REQUIRE(fixed.fst.has_value());
  CHECK(*fixed.fst == 1.0);
  CHECK_FALSE(compute_stats(haplotypes({4, 0}, {"1", "0", "0", "0"})).fst.has_value());
  CHECK_FALSE(compute_stats(haplotypes({2, 0}, {"1", "0"})).tajima_d.has_value());
}

TEST_CASE("a mutation above one leaf is a singleton") {
  const Genealogy g = simulate_genealogy(Demography::constant(), {5, 0}, 3);
  SiteSpectrum spec{{5, 0}, {g.leaf_counts[2]}};
  CHECK(spec.sites.front()[0] == 1);
  const LocusData none = drop_mutations(g, 0.0, 1);
  CHECK(none.sites.empty());
  CHECK_THROWS_AS(drop_mutations(g, -1.0, 1), Error);
}

TEST_CASE("mutations carry exactly the descendant leaves of their branch") {
  const Genealogy g = simulate_genealogy(Demography::constant(), {12, 0}, 21);
  const LocusData locus = drop_mutations(g, 10.0, 22);
  const SiteSpectrum spec = locus.spectrum();
  for (const auto& site : spec.sites) {
    CHECK(site[0] >= 1);
    CHECK(site[0] <= 11);
  }
  CHECK(locus.dump().size() == locus.sites.size() * 13);
}

TEST_CASE("multi-locus summary examples") {
  std::vector<PopGenStats> loci;
  for (int i = 1; i <= 20; ++i) loci.push_back({static_cast<double>(i), 1, 0.5, -1.0, std::nullopt});
  const SummaryVector s = multi_locus_summary(loci, false);
  CHECK(s[0] == 10.5);
  CHECK(s[1] == 0.5);
  CHECK(s[2] == -1.0);
  CHECK(s.names() == *single_deme_stat_names());

  std::vector<PopGenStats> absent(3, PopGenStats{0.0, 0, std::nullopt, 0.0, std::nullopt});
  CHECK_THROWS_AS(multi_locus_summary(absent, false), Error);
  CHECK(multi_locus_summary(absent, false, AbsentPolicy::zero)[1] == 0.0);

  const Genealogy g = simulate_genealogy(Demography::constant(), {10, 0}, 2);
  const LocusData l = drop_mutations(g, 4.0, 3);
  const std::vector<LocusData> same(5, l);
  const PopGenStats one = compute_stats(l);
  const SummaryVector m = multi_locus_summary(same);
  CHECK(m[0] == Catch::Approx(one.pi));
  CHECK(m[2] == Catch::Approx(one.fay_wu_h));
}

TEST_CASE("model builders produce the expected statistics") {
  const ModelSpec c = constant_model();
  CHECK(*c.stat_names() == *single_deme_stat_names());
  const ModelSpec im = structured_model("im", 2);
  CHECK(*im.stat_names() == *two_deme_stat_names());
  const std::vector<ModelSpec> models{constant_model(), bottleneck_model(), expansion_model()};
  const ReferenceTable t = build_reference_table(models, 20, 3);
  for (const auto& r : t.rows()) {
    for (double v : r.stats) CHECK(std::isfinite(v));
  }
}
