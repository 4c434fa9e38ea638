#pragma once

// Prior laws used by the experiments.  Each kind validates its parameters on
// construction, so sampling and density evaluation never fail.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/random/gamma_distribution.hpp>

#include "abcdic/error.hpp"
#include "abcdic/random.hpp"

namespace abcdic {

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) fail(ErrorKind::invalid_argument, what);
}
inline bool finite(double x) { return std::isfinite(x); }
}  // namespace detail

struct Uniform {
  double a, b;
  Uniform(double a_, double b_) : a(a_), b(b_) {
    detail::require(detail::finite(a) && detail::finite(b) && b > a, "Uniform requires finite a < b");
  }
};

/// Uniform on the base-10 exponent: log10(X) ~ Uniform(a, b).
struct Log10Uniform {
  double a, b;
  Log10Uniform(double a_, double b_) : a(a_), b(b_) {
    detail::require(detail::finite(a) && detail::finite(b) && b > a, "Log10Uniform requires finite a < b");
  }
};

struct Gaussian {
  double mean, sd;
  Gaussian(double mean_, double sd_) : mean(mean_), sd(sd_) {
    detail::require(detail::finite(mean) && detail::finite(sd) && sd > 0, "Gaussian requires sd > 0");
  }
};

struct Exponential {
  double rate;
  explicit Exponential(double rate_) : rate(rate_) {
    detail::require(detail::finite(rate) && rate > 0, "Exponential requires rate > 0");
  }
};

/// Law of 1/X with X ~ Exponential(rate); identical to InverseGamma(1, rate).
struct InverseExponential {
  double rate;
  explicit InverseExponential(double rate_) : rate(rate_) {
    detail::require(detail::finite(rate) && rate > 0, "InverseExponential requires rate > 0");
  }
};

struct Gamma {
  double shape, rate;
  Gamma(double shape_, double rate_) : shape(shape_), rate(rate_) {
    detail::require(detail::finite(shape) && shape > 0 && detail::finite(rate) && rate > 0,
                    "Gamma requires shape > 0 and rate > 0");
  }
};

struct InverseGamma {
  double shape, rate;
  InverseGamma(double shape_, double rate_) : shape(shape_), rate(rate_) {
    detail::require(detail::finite(shape) && shape > 0 && detail::finite(rate) && rate > 0,
                    "InverseGamma requires shape > 0 and rate > 0");
  }
};

using PriorSpec =
    std::variant<Uniform, Log10Uniform, Gaussian, Exponential, InverseExponential, Gamma, InverseGamma>;

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

inline std::string_view kind_name(const PriorSpec& prior) {
  return std::visit(overloaded{
                        [](const Uniform&) { return std::string_view{"Uniform"}; },
                        [](const Log10Uniform&) { return std::string_view{"Log10Uniform"}; },
                        [](const Gaussian&) { return std::string_view{"Gaussian"}; },
                        [](const Exponential&) { return std::string_view{"Exponential"}; },
                        [](const InverseExponential&) { return std::string_view{"InverseExponential"}; },
                        [](const Gamma&) { return std::string_view{"Gamma"}; },
                        [](const InverseGamma&) { return std::string_view{"InverseGamma"}; },
                    },
                    prior);
}

/// P(X <= x) for X ~ InverseGamma(shape, rate), i.e. Q(shape, rate / x).
inline double inverse_gamma_cdf(double shape, double rate, double x) {
  detail::require(shape > 0 && rate > 0, "inverse_gamma_cdf requires shape, rate > 0");
  if (!(x > 0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_q(shape, rate / x);
}

/// True for kinds sampled by inverting the CDF at a single uniform variate.
inline bool has_closed_quantile(const PriorSpec& prior) {
  return !std::holds_alternative<Gamma>(prior) && !std::holds_alternative<InverseGamma>(prior);
}

inline std::pair<double, double> support(const PriorSpec& prior);

/// Inverse CDF; u = 0 and u = 1 map to the ends of the support.  Gamma kinds
/// use numerical inversion.
inline double quantile(const PriorSpec& prior, double u) {
  detail::require(u >= 0 && u <= 1, "quantile requires 0 <= u <= 1");
  if (u == 0) return support(prior).first;
  if (u == 1) return support(prior).second;
  return std::visit(
      overloaded{
          [u](const Uniform& p) { return p.a + u * (p.b - p.a); },
          [u](const Log10Uniform& p) { return std::pow(10.0, p.a + u * (p.b - p.a)); },
          [u](const Gaussian& p) { return p.mean + p.sd * Rng::standard_normal_quantile(u); },
          [u](const Exponential& p) { return -std::log1p(-u) / p.rate; },
          [u](const InverseExponential& p) { return -p.rate / std::log(u); },
          [u](const Gamma& p) {
            return boost::math::quantile(boost::math::gamma_distribution<double>(p.shape, 1.0 / p.rate), u);
          },
          [u](const InverseGamma& p) {
            return 1.0 / boost::math::quantile(
                             boost::math::gamma_distribution<double>(p.shape, 1.0 / p.rate), 1.0 - u);
          },
      },
      prior);
}

inline double cdf(const PriorSpec& prior, double x) {
  return std::visit(
      overloaded{
          [x](const Uniform& p) { return x <= p.a ? 0.0 : x >= p.b ? 1.0 : (x - p.a) / (p.b - p.a); },
          [x](const Log10Uniform& p) {
            if (!(x > 0)) return 0.0;
            const double e = std::log10(x);
            return e <= p.a ? 0.0 : e >= p.b ? 1.0 : (e - p.a) / (p.b - p.a);
          },
          [x](const Gaussian& p) { return 0.5 * std::erfc(-(x - p.mean) / (p.sd * std::numbers::sqrt2)); },
          [x](const Exponential& p) { return x <= 0 ? 0.0 : -std::expm1(-p.rate * x); },
          [x](const InverseExponential& p) { return x <= 0 ? 0.0 : std::exp(-p.rate / x); },
          [x](const Gamma& p) { return x <= 0 ? 0.0 : boost::math::gamma_p(p.shape, p.rate * x); },
          [x](const InverseGamma& p) { return inverse_gamma_cdf(p.shape, p.rate, x); },
      },
      prior);
}

/// Log density; -infinity outside the support.
inline double log_density(const PriorSpec& prior, double x) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  return std::visit(
      overloaded{
          [x](const Uniform& p) { return (x > p.a && x < p.b) ? -std::log(p.b - p.a) : neg_inf; },
          [x](const Log10Uniform& p) {
            if (!(x > 0)) return neg_inf;
            const double e = std::log10(x);
            if (!(e > p.a && e < p.b)) return neg_inf;
            return -std::log(x) - std::log(std::numbers::ln10) - std::log(p.b - p.a);
          },
          [x](const Gaussian& p) {
            const double z = (x - p.mean) / p.sd;
            return -0.5 * z * z - std::log(p.sd) - 0.5 * std::log(2.0 * std::numbers::pi);
          },
          [x](const Exponential& p) { return x >= 0 ? std::log(p.rate) - p.rate * x : neg_inf; },
          [x](const InverseExponential& p) {
            return x > 0 ? std::log(p.rate) - 2.0 * std::log(x) - p.rate / x : neg_inf;
          },
          [x](const Gamma& p) {
            if (!(x > 0)) return neg_inf;
            return p.shape * std::log(p.rate) - std::lgamma(p.shape) + (p.shape - 1) * std::log(x) - p.rate * x;
          },
          [x](const InverseGamma& p) {
            if (!(x > 0)) return neg_inf;
            return p.shape * std::log(p.rate) - std::lgamma(p.shape) - (p.shape + 1) * std::log(x) - p.rate / x;
          },
      },
      prior);
}

/// One draw.  Closed-form kinds consume exactly one uniform variate.
inline double sample(const PriorSpec& prior, Rng& rng) {
  if (const auto* g = std::get_if<Gamma>(&prior)) {
    boost::random::gamma_distribution<double> dist(g->shape, 1.0 / g->rate);
    return dist(rng);
  }
  if (const auto* ig = std::get_if<InverseGamma>(&prior)) {
    boost::random::gamma_distribution<double> dist(ig->shape, 1.0 / ig->rate);
    return 1.0 / dist(rng);
  }
  return quantile(prior, rng.uniform());
}

/// Lower and upper end of the support (may be infinite).
inline std::pair<double, double> support(const PriorSpec& prior) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return std::visit(overloaded{
                        [](const Uniform& p) { return std::pair{p.a, p.b}; },
                        [](const Log10Uniform& p) { return std::pair{std::pow(10.0, p.a), std::pow(10.0, p.b)}; },
                        [inf](const Gaussian&) { return std::pair{-inf, inf}; },
                        [inf](const auto&) { return std::pair{0.0, inf}; },
                    },
                    prior);
}

/// Gamma(shape, rate) with the given mean whose central `level` interval best
/// matches (lo, hi).  The mean pins rate = shape / mean; the shape solves
/// log(q_hi / q_lo) = log(hi / lo) by bisection on log(shape), since the
/// quantile ratio decreases monotonically in the shape.
inline Gamma fit_gamma(double mean, double lo, double hi, double level = 0.95) {
  detail::require(mean > 0 && lo > 0 && hi > lo && level > 0 && level < 1,
                  "fit_gamma requires 0 < lo < hi, mean > 0, 0 < level < 1");
  const double tail = 0.5 * (1.0 - level);
  const double target = std::log(hi / lo);
  auto ratio = [&](double shape) {
    const boost::math::gamma_distribution<double> d(shape, mean / shape);
    return std::log(boost::math::quantile(d, 1.0 - tail) / boost::math::quantile(d, tail));
  };
  double lo_k = std::log(1e-3), hi_k = std::log(1e7);
  if (ratio(std::exp(lo_k)) < target || ratio(std::exp(hi_k)) > target) {
    fail(ErrorKind::numeric, "fit_gamma: interval ratio outside the representable range");
  }
  for (int it = 0; it < 200 && hi_k - lo_k > 1e-13; ++it) {
    const double mid = 0.5 * (lo_k + hi_k);
    (ratio(std::exp(mid)) > target ? lo_k : hi_k) = mid;
  }
  const double shape = std::exp(0.5 * (lo_k + hi_k));
  return Gamma(shape, shape / mean);
}

}  // namespace abcdic
