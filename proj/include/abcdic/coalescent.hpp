#pragma once

// Neutral coalescent with infinite-sites mutation for one or two demes.
//
// Units.  Internally one time unit is 2 N0 generations, so a pair of
// lineages in a deme of relative size nu coalesces at rate 1 / nu and each
// lineage mutates at rate theta / 2.  This gives E[pi] = theta and
// E[S] = theta * a_n for a constant population.  Model parameters are given
// in N0 generations (times), per-N0-generation rates (growth alpha) and
// M = m N0 (migration), and are converted here:
//
//   t_internal      = t / 2
//   size(t_internal) = exp(-2 alpha t_internal)         (exponential growth)
//   migration rate per lineage = M / 2 per internal unit
//
// Bottleneck without recovery, looking back in time:
//
//        size 1 (N0)            size 1/x (ancestral)
//   0 |------------------| t |---------------------->  past
//
// so x in (0, 1] is the current size as a fraction of the ancestral size
// and 1/x is the severity.
//
// Two-deme models: deme 0 and deme 1 have sizes nu1, nu2 until t_split,
// after which (further back) all lineages share one ancestral deme of size 1.
// M1 is forward gene flow from deme 0 into deme 1, so looking back a deme-1
// lineage moves to deme 0 at rate M1 / 2; M2 is the reverse.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/random/poisson_distribution.hpp>

#include "abcdic/core.hpp"

namespace abcdic::coal {

inline constexpr double time_scale = 0.5;  // internal units per N0 generations
inline constexpr double infinity = std::numeric_limits<double>::infinity();

struct Demography {
  enum class Kind { constant, bottleneck, exponential_growth, isolation, isolation_migration };

  Kind kind = Kind::constant;
  double t = 0.0;        // bottleneck time, N0 generations
  double x = 1.0;        // current size / ancestral size
  double alpha = 0.0;    // growth rate per N0 generations
  double t_split = infinity;
  double nu1 = 1.0, nu2 = 1.0;
  double m1 = 0.0, m2 = 0.0;

  static Demography constant() { return {}; }
  static Demography bottleneck(double t, double x) {
    Demography d;
    d.kind = Kind::bottleneck;
    d.t = t;
    d.x = x;
    d.validate();
    return d;
  }
  static Demography exponential_growth(double alpha) {
    Demography d;
    d.kind = Kind::exponential_growth;
    d.alpha = alpha;
    d.validate();
    return d;
  }
  static Demography isolation(double t_split, double nu1, double nu2) {
    return isolation_migration(t_split, nu1, nu2, 0.0, 0.0, Kind::isolation);
  }
  static Demography isolation_migration(double t_split, double nu1, double nu2, double m1, double m2,
                                        Kind kind = Kind::isolation_migration) {
    Demography d;
    d.kind = kind;
    d.t_split = t_split;
    d.nu1 = nu1;
    d.nu2 = nu2;
    d.m1 = m1;
    d.m2 = m2;
    d.validate();
    return d;
  }

  bool two_demes() const noexcept { return kind == Kind::isolation || kind == Kind::isolation_migration; }

  void validate() const {
    const bool ok = t >= 0 && x > 0 && x <= 1 && alpha >= 0 && t_split >= 0 && nu1 > 0 && nu2 > 0 && m1 >= 0 &&
                    m2 >= 0 && std::isfinite(t) && std::isfinite(alpha) && std::isfinite(nu1) && std::isfinite(nu2) &&
                    std::isfinite(m1) && std::isfinite(m2);
    if (!ok) fail(ErrorKind::invalid_argument, "Demography: parameter out of range");
  }
};

/// Haplotype counts per deme; the second entry is 0 for one-deme models.
using SampleConfig = std::array<int, 2>;

/// Coalescent tree.  Leaves are nodes [0, n); deme-0 leaves come first.
struct Genealogy {
  SampleConfig sample_config{0, 0};
  std::vector<double> time;
  std::vector<int> parent;
  std::vector<std::array<int, 2>> children;
  std::vector<std::array<int, 2>> leaf_counts;  // descendant leaves per deme
  int root = -1;

  int leaves() const noexcept { return sample_config[0] + sample_config[1]; }
  double branch_length(int v) const noexcept { return v == root ? 0.0 : time[parent[v]] - time[v]; }
  double total_length() const noexcept {
    double acc = 0.0;
    for (int v = 0; v < static_cast<int>(time.size()); ++v) acc += branch_length(v);
    return acc;
  }
  double tmrca() const noexcept { return time[root]; }
};

namespace detail {

struct Epoch {
  std::array<double, 2> size{1.0, 1.0};
  std::array<double, 2> migration{0.0, 0.0};  // per-lineage rate out of each deme
  double growth = 0.0;                          // internal-unit growth of deme 0
  double end = infinity;
  bool split_at_end = false;
};

/// Demographic regime in force at internal time t.  Degenerate parameter
/// values (x = 1, alpha = 0) collapse to the constant regime.
inline Epoch epoch_at(const Demography& d, double t) {
  Epoch e;
  switch (d.kind) {
    case Demography::Kind::constant:
      break;
    case Demography::Kind::bottleneck:
      if (d.x != 1.0) {
        const double change = d.t * time_scale;
        if (t < change) {
          e.end = change;
        } else {
          e.size[0] = 1.0 / d.x;
        }
      }
      break;
    case Demography::Kind::exponential_growth:
      e.growth = d.alpha / time_scale;
      break;
    case Demography::Kind::isolation:
    case Demography::Kind::isolation_migration: {
      const double split = d.t_split * time_scale;
      if (t < split) {
        e.size = {d.nu1, d.nu2};
        e.migration = {0.5 * d.m2, 0.5 * d.m1};
        e.end = split;
        e.split_at_end = true;
      }
      break;
    }
  }
  return e;
}

inline void reset(Genealogy& g, SampleConfig config) {
  const int n = config[0] + config[1];
  const std::size_t nodes = static_cast<std::size_t>(std::max(1, 2 * n - 1));
  g.sample_config = config;
  // internal nodes are fully written as they are created
  g.time.resize(nodes);
  g.parent.resize(nodes);
  g.children.resize(nodes);
  g.leaf_counts.resize(nodes);
  for (int v = 0; v < n; ++v) {
    const auto i = static_cast<std::size_t>(v);
    g.time[i] = 0.0;
    g.children[i] = {-1, -1};
    g.leaf_counts[i] = {v < config[0] ? 1 : 0, v < config[0] ? 0 : 1};
  }
  g.root = -1;
}

}  // namespace detail

/// Simulates a genealogy into `g`, reusing its storage.
inline void simulate_genealogy(const Demography& demography, SampleConfig config, Rng& rng, Genealogy& g) {
  const int n = config[0] + config[1];
  if (config[0] < 0 || config[1] < 0 || n < 2) fail(ErrorKind::invalid_argument, "simulate_genealogy: sample must be >= 2");
  if (config[1] > 0 && !demography.two_demes()) {
    fail(ErrorKind::invalid_argument, "simulate_genealogy: one-deme demography with a two-deme sample");
  }
  detail::reset(g, config);
  thread_local std::array<std::vector<int>, 2> lineages;
  for (auto& lin : lineages) lin.clear();
  for (int v = 0; v < n; ++v) lineages[v < config[0] ? 0 : 1].push_back(v);
  int next = n;
  double t = 0.0;

  auto coalesce = [&](int deme) {
    auto& lin = lineages[static_cast<std::size_t>(deme)];
    const std::size_t k = lin.size();
    const std::size_t i = rng.index(k);
    std::size_t j = rng.index(k - 1);
    if (j >= i) ++j;
    const auto a = static_cast<std::size_t>(lin[i]), b = static_cast<std::size_t>(lin[j]);
    const auto c = static_cast<std::size_t>(next);
    g.time[c] = t;
    g.children[c] = {lin[i], lin[j]};
    g.leaf_counts[c] = {g.leaf_counts[a][0] + g.leaf_counts[b][0], g.leaf_counts[a][1] + g.leaf_counts[b][1]};
    g.parent[a] = next;
    g.parent[b] = next;
    lin[i] = next;
    lin[j] = lin.back();
    lin.pop_back();
    ++next;
  };

  detail::Epoch e = detail::epoch_at(demography, t);
  auto cross_boundary = [&] {
    t = e.end;
    if (e.split_at_end) {
      lineages[0].insert(lineages[0].end(), lineages[1].begin(), lineages[1].end());
      lineages[1].clear();
    }
    e = detail::epoch_at(demography, t);
  };

  while (lineages[0].size() + lineages[1].size() > 1) {
    const double k0 = static_cast<double>(lineages[0].size());
    const double k1 = static_cast<double>(lineages[1].size());

    if (e.growth > 0) {
      // one deme with size exp(-growth * t): invert the cumulative hazard
      const double pairs = 0.5 * k0 * (k0 - 1.0);
      t += std::log1p(rng.exponential() * e.growth * std::exp(-e.growth * t) / pairs) / e.growth;
      coalesce(0);
      continue;
    }

    const double c0 = 0.5 * k0 * (k0 - 1.0) / e.size[0];
    const double c1 = 0.5 * k1 * (k1 - 1.0) / e.size[1];
    const double mig0 = k0 * e.migration[0];
    const double mig1 = k1 * e.migration[1];
    const double total = c0 + c1 + mig0 + mig1;
    if (total <= 0) {
      if (std::isinf(e.end)) fail(ErrorKind::simulation, "no common ancestor possible");
      cross_boundary();
      continue;
    }
    const double w = rng.exponential() / total;
    if (t + w >= e.end) {
      cross_boundary();
      continue;
    }
    t += w;
    if (total == c0) {
      coalesce(0);
      continue;
    }
    double u = rng.uniform() * total;
    if ((u -= c0) < 0) {
      coalesce(0);
    } else if ((u -= c1) < 0) {
      coalesce(1);
    } else {
      const int from = (u - mig0) < 0 ? 0 : 1;
      auto& src = lineages[static_cast<std::size_t>(from)];
      const std::size_t i = rng.index(src.size());
      lineages[static_cast<std::size_t>(1 - from)].push_back(src[i]);
      src[i] = src.back();
      src.pop_back();
    }
  }
  g.root = next - 1;
  g.parent[static_cast<std::size_t>(g.root)] = -1;
}

inline Genealogy simulate_genealogy(const Demography& demography, SampleConfig config, std::uint64_t seed) {
  Rng rng(seed);
  Genealogy g;
  simulate_genealogy(demography, config, rng, g);
  return g;
}

/// Branches (child node ids) carrying each mutation; the count is
/// Poisson(theta / 2 * total length) and positions are uniform on the tree.
inline void place_mutations(const Genealogy& g, double theta, Rng& rng, std::vector<int>& branches,
                            std::vector<double>& cumulative) {
  if (!(theta >= 0)) fail(ErrorKind::invalid_argument, "mutation rate theta must be >= 0");
  branches.clear();
  const int nodes = static_cast<int>(g.time.size());
  cumulative.resize(static_cast<std::size_t>(nodes));
  double total = 0.0;
  for (int v = 0; v < nodes; ++v) cumulative[static_cast<std::size_t>(v)] = total += g.branch_length(v);
  const double mean = 0.5 * theta * total;
  if (!(mean > 0)) return;
  boost::random::poisson_distribution<int, double> poisson(mean);
  const int count = poisson(rng);
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    int v = static_cast<int>(it - cumulative.begin());
    v = std::min(v, nodes - 1);
    while (v == g.root || g.branch_length(v) <= 0) v = v > 0 ? v - 1 : v + 1;  // skip zero-length slots
    branches.push_back(v);
  }
}

/// Derived-allele counts per deme for every segregating site.
struct SiteSpectrum {
  SampleConfig sample_config{0, 0};
  std::vector<std::array<int, 2>> sites;

  int total() const noexcept { return sample_config[0] + sample_config[1]; }
};

/// Haplotype matrix for one locus.  sites[s][h] is 1 when haplotype h
/// carries the derived allele at site s; haplotypes are deme-ordered.
struct LocusData {
  SampleConfig sample_config{0, 0};
  std::vector<std::vector<std::uint8_t>> sites;

  int total() const noexcept { return sample_config[0] + sample_config[1]; }

  SiteSpectrum spectrum() const {
    SiteSpectrum out{sample_config, {}};
    for (const auto& column : sites) {
      if (static_cast<int>(column.size()) != total()) fail(ErrorKind::invalid_argument, "LocusData: ragged site column");
      std::array<int, 2> c{0, 0};
      for (int h = 0; h < total(); ++h) c[h < sample_config[0] ? 0 : 1] += column[static_cast<std::size_t>(h)];
      out.sites.push_back(c);
    }
    return out;
  }

  /// One site per line as a 0/1 string (debug dump format).
  std::string dump() const {
    std::string out;
    for (const auto& column : sites) {
      for (auto b : column) out.push_back(b ? '1' : '0');
      out.push_back('\n');
    }
    return out;
  }
};

/// Infinite-sites mutations on a genealogy, as a haplotype matrix.
inline LocusData drop_mutations(const Genealogy& g, double theta, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> branches;
  std::vector<double> cumulative;
  place_mutations(g, theta, rng, branches, cumulative);
  LocusData out{g.sample_config, {}};
  const int n = g.leaves();
  for (int v : branches) {
    std::vector<std::uint8_t> column(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{v};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      if (u < n) {
        column[static_cast<std::size_t>(u)] = 1;
      } else {
        stack.push_back(g.children[static_cast<std::size_t>(u)][0]);
        stack.push_back(g.children[static_cast<std::size_t>(u)][1]);
      }
    }
    out.sites.push_back(std::move(column));
  }
  return out;
}

/// Single-locus statistics.  Tajima's D is absent when S = 0 or n = 2.  F_ST
/// needs two haplotypes in each deme and some between-deme diversity.
struct PopGenStats {
  double pi = 0.0;
  int segregating = 0;
  std::optional<double> tajima_d;
  double fay_wu_h = 0.0;
  std::optional<double> fst;
};

namespace detail {

struct TajimaConstants {
  double a1 = 0.0, e1 = 0.0, e2 = 0.0;

  explicit TajimaConstants(int n) {
    double a2 = 0.0;
    for (int k = 1; k < n; ++k) {
      a1 += 1.0 / k;
      a2 += 1.0 / (static_cast<double>(k) * k);
    }
    const double nd = n;
    const double b1 = (nd + 1.0) / (3.0 * (nd - 1.0));
    const double b2 = 2.0 * (nd * nd + nd + 3.0) / (9.0 * nd * (nd - 1.0));
    const double c1 = b1 - 1.0 / a1;
    const double c2 = b2 - (nd + 2.0) / (a1 * nd) + a2 / (a1 * a1);
    e1 = c1 / a1;
    e2 = c2 / (a1 * a1 + a2);
  }

  static const TajimaConstants& get(int n) {
    thread_local std::vector<std::optional<TajimaConstants>> cache;
    if (static_cast<std::size_t>(n) >= cache.size()) cache.resize(static_cast<std::size_t>(n) + 1);
    auto& slot = cache[static_cast<std::size_t>(n)];
    if (!slot) slot.emplace(n);
    return *slot;
  }
};

}  // namespace detail

/// pi, S, Tajima's D, Fay and Wu's H and Hudson's F_ST from derived counts.
/// F_ST = 1 - H_w / H_b with H_w the mean within-deme heterozygosity
/// (2 p (1 - p) per site) and H_b the mean between-deme pairwise difference.
inline PopGenStats compute_stats(const SiteSpectrum& spectrum) {
  const int n = spectrum.total();
  if (n < 2) fail(ErrorKind::invalid_argument, "compute_stats: sample must be >= 2");
  const double nd = n;
  const double pair_norm = 2.0 / (nd * (nd - 1.0));
  PopGenStats out;
  double pi = 0.0, theta_h = 0.0, within = 0.0, between = 0.0;
  const auto [n1, n2] = spectrum.sample_config;
  for (const auto& site : spectrum.sites) {
    const double i = site[0] + site[1];
    if (i <= 0 || i >= nd) fail(ErrorKind::invalid_argument, "compute_stats: site is not segregating");
    pi += i * (nd - i);
    theta_h += i * i;
    if (n1 > 1 && n2 > 1) {
      // within-deme diversity over distinct pairs, between-deme over all cross pairs
      const double p1 = static_cast<double>(site[0]) / n1;
      const double p2 = static_cast<double>(site[1]) / n2;
      within += p1 * (1.0 - p1) * n1 / (n1 - 1.0) + p2 * (1.0 - p2) * n2 / (n2 - 1.0);
      between += p1 * (1.0 - p2) + p2 * (1.0 - p1);
    }
  }
  out.segregating = static_cast<int>(spectrum.sites.size());
  out.pi = pi * pair_norm;
  out.fay_wu_h = out.pi - theta_h * pair_norm;
  if (out.segregating > 0) {
    const auto& c = detail::TajimaConstants::get(n);
    const double s = out.segregating;
    const double var = c.e1 * s + c.e2 * s * (s - 1.0);
    if (var > 0.0) out.tajima_d = (out.pi - s / c.a1) / std::sqrt(var);
  }
  if (n1 > 1 && n2 > 1 && between > 0) out.fst = 1.0 - within / between;
  return out;
}

inline PopGenStats compute_stats(const LocusData& locus) { return compute_stats(locus.spectrum()); }

inline const NamesPtr& single_deme_stat_names() {
  static const NamesPtr names = make_names({"pi", "tajD", "fwH"});
  return names;
}

inline const NamesPtr& two_deme_stat_names() {
  static const NamesPtr names = make_names({"pi", "tajD", "fwH", "fst"});
  return names;
}

/// What to report when a statistic is undefined at every locus.
enum class AbsentPolicy { error, zero };

/// Across-locus means of pi, Tajima's D, Fay and Wu's H (and F_ST when
/// `with_fst`), skipping loci where a statistic is absent.
inline SummaryVector multi_locus_summary(std::span<const PopGenStats> loci, bool with_fst,
                                         AbsentPolicy policy = AbsentPolicy::error) {
  if (loci.empty()) fail(ErrorKind::invalid_argument, "multi_locus_summary: no loci");
  double pi = 0.0, h = 0.0, d = 0.0, f = 0.0;
  std::size_t nd = 0, nf = 0;
  for (const auto& l : loci) {
    pi += l.pi;
    h += l.fay_wu_h;
    if (l.tajima_d) {
      d += *l.tajima_d;
      ++nd;
    }
    if (l.fst) {
      f += *l.fst;
      ++nf;
    }
  }
  auto mean_or_absent = [policy](double acc, std::size_t count, const char* name) {
    if (count > 0) return acc / static_cast<double>(count);
    if (policy == AbsentPolicy::zero) return 0.0;
    fail(ErrorKind::simulation, std::string("multi_locus_summary: '") + name + "' is undefined at every locus");
  };
  const double count = static_cast<double>(loci.size());
  std::vector<double> values{pi / count, mean_or_absent(d, nd, "tajD"), h / count};
  if (with_fst) values.push_back(mean_or_absent(f, nf, "fst"));
  return SummaryVector(std::move(values), with_fst ? two_deme_stat_names() : single_deme_stat_names());
}

inline SummaryVector multi_locus_summary(std::span<const LocusData> loci, AbsentPolicy policy = AbsentPolicy::error) {
  if (loci.empty()) fail(ErrorKind::invalid_argument, "multi_locus_summary: no loci");
  std::vector<PopGenStats> stats;
  stats.reserve(loci.size());
  for (const auto& l : loci) stats.push_back(compute_stats(l));
  const bool two = loci.front().sample_config[1] > 0;
  return multi_locus_summary(stats, two, policy);
}

/// Statistics of `loci` independent loci.  Locus l uses
/// Rng(child_seed(seed, l)) for both its genealogy and its mutations.
inline SummaryVector simulate_loci(const Demography& demography, SampleConfig config, double theta, std::size_t loci,
                                   std::uint64_t seed, AbsentPolicy policy = AbsentPolicy::zero) {
  thread_local Genealogy g;
  thread_local std::vector<int> branches;
  thread_local std::vector<double> cumulative;
  std::vector<PopGenStats> stats;
  stats.reserve(loci);
  SiteSpectrum spectrum;
  spectrum.sample_config = config;
  for (std::size_t l = 0; l < loci; ++l) {
    Rng rng(child_seed(seed, l));
    simulate_genealogy(demography, config, rng, g);
    place_mutations(g, theta, rng, branches, cumulative);
    spectrum.sites.clear();
    for (int v : branches) spectrum.sites.push_back(g.leaf_counts[static_cast<std::size_t>(v)]);
    stats.push_back(compute_stats(spectrum));
  }
  return multi_locus_summary(stats, config[1] > 0, policy);
}

/// Locus count and sample configuration shared by a model family.
struct LocusSettings {
  std::size_t loci = 20;
  SampleConfig sample{100, 0};
};

inline LocusSettings demographic_settings() { return {20, {100, 0}}; }
inline LocusSettings structured_settings() { return {100, {100, 100}}; }

/// theta ~ Uniform(0, 15).
inline ModelSpec constant_model(std::string label = "constant", LocusSettings settings = demographic_settings(),
                                PriorSpec theta = Uniform(0, 15)) {
  return ModelSpec(std::move(label), {ParamDef("theta", std::move(theta))}, single_deme_stat_names(),
                   [settings](const ParamVector& p, std::uint64_t seed) {
                     return simulate_loci(Demography::constant(), settings.sample, p[0], settings.loci, seed);
                   });
}

/// theta, bottleneck time t ~ Uniform(0, 1), severity 1/x ~ Log10Uniform(0, 1.5).
inline ModelSpec bottleneck_model(std::string label = "bottleneck", LocusSettings settings = demographic_settings(),
                                  PriorSpec theta = Uniform(0, 15), PriorSpec time = Uniform(0, 1),
                                  PriorSpec severity = Log10Uniform(0, 1.5)) {
  return ModelSpec(std::move(label),
                   {ParamDef("theta", std::move(theta)), ParamDef("t", std::move(time)),
                    ParamDef("severity", std::move(severity))},
                   single_deme_stat_names(), [settings](const ParamVector& p, std::uint64_t seed) {
                     return simulate_loci(Demography::bottleneck(p[1], 1.0 / p[2]), settings.sample, p[0],
                                          settings.loci, seed);
                   });
}

/// theta, growth rate alpha ~ Log10Uniform(0, 1.5).
inline ModelSpec expansion_model(std::string label = "expansion", LocusSettings settings = demographic_settings(),
                                 PriorSpec theta = Uniform(0, 15), PriorSpec alpha = Log10Uniform(0, 1.5)) {
  return ModelSpec(std::move(label), {ParamDef("theta", std::move(theta)), ParamDef("alpha", std::move(alpha))},
                   single_deme_stat_names(), [settings](const ParamVector& p, std::uint64_t seed) {
                     return simulate_loci(Demography::exponential_growth(p[1]), settings.sample, p[0], settings.loci,
                                          seed);
                   });
}

/// theta, t_split ~ Uniform(0, 1), nu1, nu2 ~ Uniform(0, 3); plus M1 (and M2)
/// ~ Uniform(0, 100) when `migration_rates` is 1 (or 2).
inline ModelSpec structured_model(std::string label, int migration_rates, LocusSettings settings = structured_settings(),
                                  PriorSpec theta = Uniform(0, 15), PriorSpec t_split = Uniform(0, 1),
                                  PriorSpec nu = Uniform(0, 3), PriorSpec migration = Uniform(0, 100)) {
  std::vector<ParamDef> params{ParamDef("theta", std::move(theta)), ParamDef("t_split", std::move(t_split)),
                               ParamDef("nu1", nu), ParamDef("nu2", nu)};
  if (migration_rates >= 1) params.emplace_back("M1", migration);
  if (migration_rates >= 2) params.emplace_back("M2", migration);
  return ModelSpec(std::move(label), std::move(params), two_deme_stat_names(),
                   [settings, migration_rates](const ParamVector& p, std::uint64_t seed) {
                     const double m1 = migration_rates >= 1 ? p[4] : 0.0;
                     const double m2 = migration_rates >= 2 ? p[5] : 0.0;
                     const auto demography =
                         migration_rates == 0 ? Demography::isolation(p[1], p[2], p[3])
                                              : Demography::isolation_migration(p[1], p[2], p[3], m1, m2);
                     return simulate_loci(demography, settings.sample, p[0], settings.loci, seed);
                   });
}

}  // namespace abcdic::coal
