#pragma once

// Approximate deviance information criteria computed by posterior predictive
// simulation from an (adjusted) ABC sample.
//
// The surrogate likelihood of the observed statistics given simulated ones is
// a product Gaussian kernel with bandwidth epsilon on scaled statistics:
//
//   -2 log K(s - s0) = [d log(2 pi eps^2)] + sum_k ((s_k - s0_k) / (scale_k eps))^2
//
// where the bracketed normalizing term is present when `normalized` is set.
//
//   DIC_1: dBar = agg_j  -2 log K(s^j - s0),  s^j ~ p(s | theta_j), theta_j ~ posterior
//          dHat = same with every theta_j = theta_hat (same simulation seeds)
//   DIC_2: dBar = agg_i  -2 log( (1/n) sum_j K(s^j_i - s0) ),  s^j_i ~ p(s | theta_i)
//          dHat = -2 log( (1/n) sum_j K(s^j - s0) ),  s^j ~ p(s | theta_hat)
//   pD = dBar - dHat,  DIC = dBar + pD.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "abcdic/abc.hpp"
#include "abcdic/core.hpp"

namespace abcdic {

enum class Aggregation { mean, median };

inline const char* aggregation_name(Aggregation a) { return a == Aggregation::mean ? "mean" : "median"; }

struct KernelConfig {
  double epsilon = 1.0;
  std::vector<double> scales;
  bool normalized = true;

  KernelConfig(double epsilon_, std::vector<double> scales_, bool normalized_ = true)
      : epsilon(epsilon_), scales(std::move(scales_)), normalized(normalized_) {
    if (!(epsilon > 0) || !std::isfinite(epsilon)) fail(ErrorKind::invalid_argument, "KernelConfig: epsilon must be > 0");
    if (scales.empty()) fail(ErrorKind::invalid_argument, "KernelConfig: no scales");
    for (double s : scales) {
      if (!(s > 0)) fail(ErrorKind::invalid_argument, "KernelConfig: scales must be > 0");
    }
  }

  std::size_t dim() const noexcept { return scales.size(); }
};

namespace detail {

inline double neg2_log_kernel(std::span<const double> s, std::span<const double> s0, const KernelConfig& k) {
  double ss = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double z = (s[i] - s0[i]) / (k.scales[i] * k.epsilon);
    ss += z * z;
  }
  if (!k.normalized) return ss;
  return static_cast<double>(k.dim()) * std::log(2.0 * std::numbers::pi * k.epsilon * k.epsilon) + ss;
}

/// -2 log of the average kernel value, from per-simulation -2 log K terms.
inline double neg2_log_mean_kernel(std::span<const double> neg2) {
  const double top = -0.5 * *std::min_element(neg2.begin(), neg2.end());
  double acc = 0.0;
  for (double v : neg2) acc += std::exp(-0.5 * v - top);
  return -2.0 * (top + std::log(acc / static_cast<double>(neg2.size())));
}

inline double aggregate(std::vector<double> values, Aggregation agg) {
  if (agg == Aggregation::median) return median_in_place(values);
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

inline std::vector<std::size_t> resample(const PosteriorSample& sample, std::size_t count, Rng& rng) {
  std::vector<double> cumulative;
  cumulative.reserve(sample.rows.size());
  double total = 0.0;
  for (const auto& r : sample.rows) cumulative.push_back(total += std::max(0.0, r.weight));
  if (!(total > 0)) fail(ErrorKind::invalid_argument, "posterior sample has no positive weight");
  std::vector<std::size_t> out(count);
  for (auto& idx : out) {
    const double u = rng.uniform() * total;
    idx = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    idx = std::min(idx, cumulative.size() - 1);
  }
  return out;
}

struct DicStreams {
  std::uint64_t resample;
  std::uint64_t simulation;
};

inline DicStreams dic_streams(std::uint64_t root) { return {child_seed(root, 0), child_seed(root, 1)}; }

inline void check_sample(const PosteriorSample& sample, const ModelSpec& model) {
  if (!sample.single_model()) fail(ErrorKind::invalid_argument, "DIC needs a single-model posterior sample");
  if (sample.rows.empty()) fail(ErrorKind::invalid_argument, "DIC needs a non-empty posterior sample");
  if (*sample.meta().param_names != *model.param_names()) {
    fail(ErrorKind::invalid_argument, "posterior sample parameters do not match model '" + model.label() + "'");
  }
}

}  // namespace detail

/// -2 log of the Gaussian surrogate likelihood of s0 given s.
inline double neg2_log_kernel(const SummaryVector& s, const SummaryVector& s0, const KernelConfig& k) {
  detail::require_names(s.names(), s0.names(), "neg2_log_kernel");
  if (k.dim() != s.size()) fail(ErrorKind::invalid_argument, "neg2_log_kernel: kernel dimension mismatch");
  return detail::neg2_log_kernel(s.values(), s0.values(), k);
}

/// Weighted posterior mean of the adjusted parameters, taken on each
/// parameter's unconstrained scale and mapped back.
inline ParamVector point_estimate(const PosteriorSample& sample) {
  if (sample.rows.empty()) fail(ErrorKind::invalid_argument, "point_estimate: empty sample");
  if (!sample.single_model()) fail(ErrorKind::invalid_argument, "point_estimate: sample mixes several models");
  const auto& meta = sample.meta();
  const auto& transforms = *meta.transforms;
  std::vector<double> acc(transforms.size(), 0.0);
  double total = 0.0;
  for (const auto& r : sample.rows) {
    if (r.weight <= 0) continue;
    total += r.weight;
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += r.weight * transforms[j].forward(r.adjusted[j]);
  }
  if (!(total > 0)) fail(ErrorKind::invalid_argument, "point_estimate: all weights are zero");
  for (std::size_t j = 0; j < acc.size(); ++j) acc[j] = transforms[j].inverse(acc[j] / total);
  return ParamVector(std::move(acc), meta.param_names, meta.transforms);
}

/// -2 log K for n predictive simulations.  Simulation j uses seed
/// child_seed(simulation stream, j) and either a resampled posterior draw or
/// the fixed `theta` when given.
inline std::vector<double> predictive_deviances(const PosteriorSample& sample, const ModelSpec& model, std::size_t n,
                                                const KernelConfig& k, std::uint64_t root_seed,
                                                const std::optional<ParamVector>& theta = std::nullopt,
                                                unsigned threads = 1) {
  detail::check_sample(sample, model);
  if (n == 0) fail(ErrorKind::invalid_argument, "predictive simulation count must be >= 1");
  const auto streams = detail::dic_streams(root_seed);
  std::vector<std::size_t> draws;
  if (!theta) {
    Rng rng(streams.resample);
    draws = detail::resample(sample, n, rng);
  }
  std::vector<double> out(n);
  parallel_for(n, threads, [&](std::size_t j) {
    const std::uint64_t seed = child_seed(streams.simulation, j);
    const SummaryVector s = theta ? model.simulate(*theta, seed) : model.simulate(sample.adjusted_params(draws[j]), seed);
    out[j] = detail::neg2_log_kernel(s.values(), sample.observed, k);
  });
  return out;
}

/// m x n matrix (row-major) of -2 log K; row i holds the n simulations from
/// the i-th resampled posterior draw, simulation (i, j) seeded with
/// child_seed(simulation stream, i * n + j).
inline std::vector<double> predictive_deviance_matrix(const PosteriorSample& sample, const ModelSpec& model,
                                                      std::size_t m, std::size_t n, const KernelConfig& k,
                                                      std::uint64_t root_seed, unsigned threads = 1) {
  detail::check_sample(sample, model);
  if (m == 0 || n == 0) fail(ErrorKind::invalid_argument, "m and n must be >= 1");
  const auto streams = detail::dic_streams(root_seed);
  Rng rng(streams.resample);
  const std::vector<std::size_t> draws = detail::resample(sample, m, rng);
  std::vector<double> out(m * n);
  parallel_for(m * n, threads, [&](std::size_t idx) {
    const SummaryVector s = model.simulate(sample.adjusted_params(draws[idx / n]), child_seed(streams.simulation, idx));
    out[idx] = detail::neg2_log_kernel(s.values(), sample.observed, k);
  });
  return out;
}

/// Monte-Carlo expected deviance of the first kind.
inline double dbar1(const PosteriorSample& sample, const ModelSpec& model, std::size_t n, const KernelConfig& k,
                    Aggregation agg, std::uint64_t root_seed, unsigned threads = 1) {
  return detail::aggregate(predictive_deviances(sample, model, n, k, root_seed, std::nullopt, threads), agg);
}

/// Expected deviance of the second kind (two-level Monte Carlo).
inline double dbar2(const PosteriorSample& sample, const ModelSpec& model, std::size_t m, std::size_t n,
                    const KernelConfig& k, Aggregation agg, std::uint64_t root_seed, unsigned threads = 1) {
  const std::vector<double> dev = predictive_deviance_matrix(sample, model, m, n, k, root_seed, threads);
  std::vector<double> per_theta(m);
  for (std::size_t i = 0; i < m; ++i) {
    per_theta[i] = detail::neg2_log_mean_kernel(std::span<const double>(dev).subspan(i * n, n));
  }
  return detail::aggregate(std::move(per_theta), agg);
}

struct DicReport {
  int variant = 1;
  double d_bar = 0.0;
  double d_hat = 0.0;
  double p_d = 0.0;
  double dic = 0.0;
  Aggregation aggregation = Aggregation::mean;
  std::size_t n = 0;
  std::size_t m = 0;  // variant 2 only
  double epsilon = 0.0;
  bool common_random_numbers = true;
  ParamVector point_estimate;
  std::vector<std::string> warnings;

  /// Builds a report; pD and DIC are derived here and nowhere else.
  static DicReport make(int variant, double d_bar, double d_hat, Aggregation agg, std::size_t n, std::size_t m,
                        double epsilon, ParamVector theta_hat) {
    DicReport r;
    r.variant = variant;
    r.d_bar = d_bar;
    r.d_hat = d_hat;
    r.p_d = d_bar - d_hat;
    r.dic = d_bar + r.p_d;
    r.aggregation = agg;
    r.n = n;
    r.m = m;
    r.epsilon = epsilon;
    r.point_estimate = std::move(theta_hat);
    if (r.p_d < 0) r.warnings.emplace_back("negative pD");
    return r;
  }
};

inline DicReport dic1(const PosteriorSample& sample, const ModelSpec& model, std::size_t n, const KernelConfig& k,
                      Aggregation agg, std::uint64_t root_seed, unsigned threads = 1) {
  ParamVector theta_hat = point_estimate(sample);
  const double d_bar = dbar1(sample, model, n, k, agg, root_seed, threads);
  const double d_hat = detail::aggregate(predictive_deviances(sample, model, n, k, root_seed, theta_hat, threads), agg);
  return DicReport::make(1, d_bar, d_hat, agg, n, 0, k.epsilon, std::move(theta_hat));
}

inline DicReport dic2(const PosteriorSample& sample, const ModelSpec& model, std::size_t m, std::size_t n,
                      const KernelConfig& k, Aggregation agg, std::uint64_t root_seed, unsigned threads = 1) {
  if (m == 0) fail(ErrorKind::invalid_argument, "dic2: m must be >= 1");
  ParamVector theta_hat = point_estimate(sample);
  const double d_bar = dbar2(sample, model, m, n, k, agg, root_seed, threads);
  const double d_hat =
      detail::neg2_log_mean_kernel(predictive_deviances(sample, model, n, k, root_seed, theta_hat, threads));
  return DicReport::make(2, d_bar, d_hat, agg, n, m, k.epsilon, std::move(theta_hat));
}

/// Where each observed statistic falls within its posterior predictive
/// distribution.
struct PredictiveCheck {
  struct Entry {
    std::string stat;
    double observed = 0.0;
    double quantile = 0.0;   // mid-rank position of the observation
    double tail_prob = 0.0;  // 2 min(q, 1 - q)
  };
  std::vector<Entry> entries;
  std::vector<std::vector<double>> draws;  // n predictive statistic vectors
};

/// Posterior predictive check with n simulations.  The quantile of an
/// observation is (#below + #equal / 2 + 1/2) / (n + 1).
inline PredictiveCheck predictive_check(const PosteriorSample& sample, const ModelSpec& model, std::size_t n,
                                        std::uint64_t root_seed, unsigned threads = 1) {
  detail::check_sample(sample, model);
  if (n == 0) fail(ErrorKind::invalid_argument, "predictive_check: n must be >= 1");
  const auto streams = detail::dic_streams(root_seed);
  Rng rng(streams.resample);
  const std::vector<std::size_t> idx = detail::resample(sample, n, rng);
  PredictiveCheck out;
  out.draws.resize(n);
  parallel_for(n, threads, [&](std::size_t j) {
    const SummaryVector s = model.simulate(sample.adjusted_params(idx[j]), child_seed(streams.simulation, j));
    out.draws[j].assign(s.values().begin(), s.values().end());
  });
  const Names& names = *model.stat_names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    const double obs = sample.observed[k];
    std::size_t below = 0, equal = 0;
    for (const auto& row : out.draws) {
      below += row[k] < obs;
      equal += row[k] == obs;
    }
    const double q = (static_cast<double>(below) + 0.5 * static_cast<double>(equal) + 0.5) /
                     (static_cast<double>(n) + 1.0);
    out.entries.push_back({names[k], obs, q, std::clamp(2.0 * std::min(q, 1.0 - q), 0.0, 1.0)});
  }
  return out;
}

}  // namespace abcdic
