#pragma once

// Gaussian-versus-Laplace toy problem: samples of size 20 reduced to mean,
// sd, skewness and excess kurtosis.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "abcdic/core.hpp"
#include "abcdic/distributions.hpp"

namespace abcdic::toy {

inline constexpr std::size_t sample_size = 20;
inline constexpr double laplace_location = 3.0;

inline const NamesPtr& stat_names() {
  static const NamesPtr names = make_names({"mean", "sd", "skewness", "kurtosis"});
  return names;
}

/// Mean, sd (n - 1 divisor), skewness m3 / m2^1.5 and excess kurtosis
/// m4 / m2^2 - 3, with central moments taken over n.
inline SummaryVector four_moments(std::span<const double> data) {
  const std::size_t n = data.size();
  if (n < 4) fail(ErrorKind::invalid_argument, "four_moments: need at least 4 values");
  double mean = 0.0;
  for (double x : data) mean += x;
  mean /= static_cast<double>(n);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : data) {
    const double c = x - mean;
    const double c2 = c * c;
    m2 += c2;
    m3 += c2 * c;
    m4 += c2 * c2;
  }
  const double nd = static_cast<double>(n);
  if (!(m2 > 0)) fail(ErrorKind::invalid_argument, "four_moments: zero variance");
  const double sd = std::sqrt(m2 / (nd - 1.0));
  m2 /= nd;
  m3 /= nd;
  m4 /= nd;
  return SummaryVector({mean, sd, m3 / std::pow(m2, 1.5), m4 / (m2 * m2) - 3.0}, stat_names());
}

inline SummaryVector simulate_gaussian(double mu, double sigma, std::size_t n, std::uint64_t seed) {
  if (!(sigma >= 1e-12) || !std::isfinite(sigma)) fail(ErrorKind::invalid_argument, "simulate_gaussian: sigma below 1e-12");
  if (n < 4) fail(ErrorKind::invalid_argument, "simulate_gaussian: n must be >= 4");
  Rng rng(seed);
  std::vector<double> data(n);
  for (auto& x : data) x = mu + sigma * rng.normal();
  return four_moments(data);
}

/// Laplace(location, rate) by inversion: u = 1/2 maps to the location.
inline double laplace_quantile(double u, double location, double rate) {
  return u < 0.5 ? location + std::log(2.0 * u) / rate : location - std::log(2.0 * (1.0 - u)) / rate;
}

inline SummaryVector simulate_laplace(double lambda, std::size_t n, std::uint64_t seed) {
  if (!(lambda > 0) || !std::isfinite(lambda)) fail(ErrorKind::invalid_argument, "simulate_laplace: lambda must be > 0");
  if (n < 4) fail(ErrorKind::invalid_argument, "simulate_laplace: n must be >= 4");
  Rng rng(seed);
  std::vector<double> data(n);
  for (auto& x : data) x = laplace_quantile(rng.uniform(), laplace_location, lambda);
  return four_moments(data);
}

/// The canned observation (2.00, 3.11, -0.78, 0.14) for n = 20.
inline SummaryVector observed_fixture() { return SummaryVector({2.00, 3.11, -0.78, 0.14}, stat_names()); }

/// theta = (mu, sigma2): mu ~ Gaussian(2, 10), sigma ~ InverseExponential(1).
inline ModelSpec gaussian_model(std::string label = "gaussian", PriorSpec mu_prior = Gaussian(2.0, 10.0),
                                PriorSpec sigma_prior = InverseExponential(1.0)) {
  std::vector<ParamDef> params{ParamDef("mu", std::move(mu_prior)), ParamDef("sigma2", std::move(sigma_prior), 2.0)};
  return ModelSpec(std::move(label), std::move(params), stat_names(), [](const ParamVector& theta, std::uint64_t seed) {
    return simulate_gaussian(theta[0], std::sqrt(theta[1]), sample_size, seed);
  });
}

/// Laplace with fixed location 3 and rate lambda ~ Exponential(1).
inline ModelSpec laplace_model(std::string label = "laplace", PriorSpec lambda_prior = Exponential(1.0)) {
  std::vector<ParamDef> params{ParamDef("lambda", std::move(lambda_prior))};
  return ModelSpec(std::move(label), std::move(params), stat_names(), [](const ParamVector& theta, std::uint64_t seed) {
    return simulate_laplace(theta[0], sample_size, seed);
  });
}

/// Exact posterior CDF of sigma^2 used as a reference: InverseGamma(11, 1 + 9.5 v0^2).
inline double exact_sigma2_posterior_cdf(double v0sq, double x) {
  if (!(v0sq > 0)) fail(ErrorKind::invalid_argument, "exact_sigma2_posterior_cdf: v0sq must be > 0");
  return inverse_gamma_cdf(11.0, 1.0 + 9.5 * v0sq, x);
}

/// Kolmogorov-Smirnov distance between the weighted empirical CDF of
/// `values` and a continuous reference CDF.  Zero-weight points are ignored.
template <class Cdf>
double weighted_ks_distance(std::span<const double> values, std::span<const double> weights, Cdf cdf) {
  if (values.size() != weights.size()) fail(ErrorKind::invalid_argument, "weighted_ks_distance: size mismatch");
  std::vector<std::size_t> order;
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] < 0) fail(ErrorKind::invalid_argument, "weighted_ks_distance: negative weight");
    if (weights[i] > 0) {
      order.push_back(i);
      total += weights[i];
    }
  }
  if (!(total > 0)) fail(ErrorKind::invalid_argument, "weighted_ks_distance: all weights are zero");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double below = 0.0, worst = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double x = values[order[k]];
    double mass = 0.0;
    for (; k < order.size() && values[order[k]] == x; ++k) mass += weights[order[k]];
    const double f = cdf(x);
    const double above = below + mass / total;
    worst = std::max({worst, std::abs(f - below), std::abs(above - f)});
    below = above;
  }
  return worst;
}

}  // namespace abcdic::toy
