#pragma once

// Rejection ABC with Epanechnikov weighting, local-linear regression
// adjustment, and approximate posterior model probabilities.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abcdic/core.hpp"

namespace abcdic {

/// Per-statistic scale factors that make distances comparable.
struct Standardization {
  enum class Source { pooled, per_model };
  std::vector<double> scales;
  Source source = Source::pooled;
  static constexpr const char* method = "mad-with-sd-fallback";

  static Standardization unit(std::size_t dim) { return {std::vector<double>(dim, 1.0), Source::pooled}; }
};

namespace detail {

inline double median_in_place(std::vector<double>& v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

/// Scaled MAD of one column; sample SD when the MAD vanishes; 1 when both do.
inline double robust_scale(std::vector<double> column) {
  const std::size_t n = column.size();
  std::vector<double> work = column;
  const double med = median_in_place(work);
  for (std::size_t i = 0; i < n; ++i) work[i] = std::abs(column[i] - med);
  const double mad = 1.4826 * median_in_place(work);
  if (mad > 0) return mad;
  if (n > 1) {
    const double mean = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : column) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd > 0) return sd;
  }
  return 1.0;
}

inline double scaled_distance(std::span<const double> s, std::span<const double> s0, std::span<const double> scales) {
  double acc = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double z = (s[k] - s0[k]) / scales[k];
    acc += z * z;
  }
  return std::sqrt(acc);
}

inline void require_names(const Names& a, const Names& b, const char* where) {
  if (a != b) fail(ErrorKind::invalid_argument, std::string(where) + ": statistic names do not match");
}

}  // namespace detail

/// Standardization over all rows, or over the rows of one model.
inline Standardization standardize(const ReferenceTable& table, std::optional<std::string> model = std::nullopt) {
  if (table.size() == 0) fail(ErrorKind::invalid_argument, "standardize: empty table");
  std::size_t filter = ReferenceTable::npos;
  if (model) {
    filter = table.model_index(*model);
    if (filter == ReferenceTable::npos) fail(ErrorKind::unknown_model, "standardize: no model '" + *model + "'");
  }
  Standardization out;
  out.source = model ? Standardization::Source::per_model : Standardization::Source::pooled;
  for (std::size_t k = 0; k < table.num_stats(); ++k) {
    std::vector<double> column;
    column.reserve(table.size());
    for (const auto& r : table.rows()) {
      if (filter == ReferenceTable::npos || r.model == filter) column.push_back(r.stats[k]);
    }
    out.scales.push_back(detail::robust_scale(std::move(column)));
  }
  return out;
}

/// Scaled Euclidean distance between two summary vectors.
inline double distance(const SummaryVector& s, const SummaryVector& s0, const Standardization& std_) {
  detail::require_names(s.names(), s0.names(), "distance");
  if (std_.scales.size() != s.size()) fail(ErrorKind::invalid_argument, "distance: wrong number of scales");
  return detail::scaled_distance(s.values(), s0.values(), std_.scales);
}

struct PosteriorRow {
  std::size_t row = 0;    // index into the reference table
  std::size_t model = 0;  // index into ReferenceTable::models()
  std::vector<double> raw;
  std::vector<double> adjusted;
  double weight = 0.0;
  double distance = 0.0;
};

/// Accepted simulations with Epanechnikov weights and (optionally)
/// regression-adjusted parameters.  `model` is "ALL" for a pooled acceptance.
struct PosteriorSample {
  std::string model;
  std::vector<TableModel> models;
  std::vector<PosteriorRow> rows;
  double tolerance = 0.0;
  double acceptance_rate = 0.0;
  Standardization standardization;
  std::vector<double> observed;
  bool adjusted = false;

  static constexpr const char* all_models = "ALL";

  bool single_model() const noexcept { return model != all_models || models.size() == 1; }
  const TableModel& meta() const { return models.at(rows.empty() ? 0 : rows.front().model); }

  ParamVector adjusted_params(std::size_t i) const {
    const auto& m = models.at(rows[i].model);
    return ParamVector(rows[i].adjusted, m.param_names, m.transforms);
  }
  ParamVector raw_params(std::size_t i) const {
    const auto& m = models.at(rows[i].model);
    return ParamVector(rows[i].raw, m.param_names, m.transforms);
  }
};

/// Number of rows kept at a given acceptance fraction of n candidates.
inline std::size_t acceptance_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
}

/// Rejection step.  The tolerance is the rate-quantile (k-th smallest, k =
/// ceil(rate * n)) of distances among the selected rows; every row at or
/// below it is accepted, ties included.  Weights are 1 - (d / tol)^2.
inline PosteriorSample reject(const ReferenceTable& table, const SummaryVector& s0, double rate,
                              const Standardization& std_, std::optional<std::string> model = std::nullopt) {
  if (!(rate > 0 && rate <= 1)) fail(ErrorKind::invalid_argument, "reject: rate must lie in (0, 1]");
  detail::require_names(table.stat_names(), s0.names(), "reject");
  if (std_.scales.size() != table.num_stats()) fail(ErrorKind::invalid_argument, "reject: wrong number of scales");

  std::size_t filter = ReferenceTable::npos;
  if (model) {
    filter = table.model_index(*model);
    if (filter == ReferenceTable::npos) fail(ErrorKind::unknown_model, "reject: no model '" + *model + "'");
  }
  std::vector<std::size_t> selected;
  std::vector<double> dist;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& r = table.rows()[i];
    if (filter != ReferenceTable::npos && r.model != filter) continue;
    selected.push_back(i);
    dist.push_back(detail::scaled_distance(r.stats, s0.values(), std_.scales));
  }
  if (rate * static_cast<double>(selected.size()) < 2.0) {
    fail(ErrorKind::invalid_argument, "reject: too few acceptances (rate * rows < 2)");
  }
  const std::size_t k = acceptance_count(rate, selected.size());
  std::vector<double> sorted = dist;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
  const double tol = sorted[k - 1];

  PosteriorSample out;
  out.model = model ? *model : PosteriorSample::all_models;
  out.models = table.models();
  out.tolerance = tol;
  out.acceptance_rate = rate;
  out.standardization = std_;
  out.observed.assign(s0.values().begin(), s0.values().end());
  for (std::size_t j = 0; j < selected.size(); ++j) {
    if (dist[j] > tol) continue;
    const auto& r = table.rows()[selected[j]];
    const double u = tol > 0 ? dist[j] / tol : 0.0;
    out.rows.push_back(PosteriorRow{selected[j], r.model, r.params, r.params, 1.0 - u * u, dist[j]});
  }
  const bool all_zero = std::all_of(out.rows.begin(), out.rows.end(), [](const auto& r) { return r.weight <= 0; });
  if (all_zero) {
    // every accepted row sits exactly on the threshold
    for (auto& r : out.rows) r.weight = 1.0;
  }
  return out;
}

inline PosteriorSample reject(const ReferenceTable& table, const SummaryVector& s0, double rate,
                              std::optional<std::string> model = std::nullopt) {
  return reject(table, s0, rate, standardize(table), std::move(model));
}

/// Local-linear regression adjustment.  For each parameter on its
/// unconstrained scale, fits theta = a + b^T z by Epanechnikov-weighted least
/// squares with z = (s - s0) / scale, then sets theta* = theta - b^T z.
/// A rank-deficient design gets a ridge of 1e-8 * trace / p.
inline PosteriorSample adjust_loclinear(const PosteriorSample& sample, const ReferenceTable& table,
                                        const SummaryVector& s0) {
  if (!sample.single_model()) fail(ErrorKind::invalid_argument, "adjust_loclinear: sample mixes several models");
  detail::require_names(table.stat_names(), s0.names(), "adjust_loclinear");
  const std::size_t n = sample.rows.size();
  const std::size_t d = table.num_stats();
  const std::size_t p = d + 1;
  if (n <= p) {
    fail(ErrorKind::invalid_argument, "adjust_loclinear: " + std::to_string(n) + " accepted rows for " +
                                          std::to_string(p) + " regressors; use a larger acceptance rate");
  }
  const auto& meta = sample.meta();
  const auto& transforms = *meta.transforms;
  const std::size_t q = transforms.size();
  const auto& scales = sample.standardization.scales;

  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd w(n);
  Eigen::MatrixXd y(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& stats = table.rows()[sample.rows[i].row].stats;
    x(i, 0) = 1.0;
    for (std::size_t k = 0; k < d; ++k) x(i, k + 1) = (stats[k] - s0[k]) / scales[k];
    w(i) = sample.rows[i].weight;
    for (std::size_t j = 0; j < q; ++j) y(i, j) = transforms[j].forward(sample.rows[i].raw[j]);
  }
  const Eigen::MatrixXd xtw = x.transpose() * w.asDiagonal();
  Eigen::MatrixXd gram = xtw * x;
  const Eigen::MatrixXd rhs = xtw * y;
  Eigen::MatrixXd coef;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
  if (static_cast<std::size_t>(qr.rank()) == p) {
    coef = qr.solve(rhs);
  } else {
    const double lambda = 1e-8 * gram.trace() / static_cast<double>(p);
    gram.diagonal().array() += lambda > 0 ? lambda : 1e-8;
    coef = gram.ldlt().solve(rhs);
  }

  PosteriorSample out = sample;
  out.adjusted = true;
  const Eigen::MatrixXd shift = x.rightCols(d) * coef.bottomRows(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < q; ++j) out.rows[i].adjusted[j] = transforms[j].inverse(y(i, j) - shift(i, j));
  }
  return out;
}

/// Posterior model probabilities with pairwise Bayes factors.
struct ModelProbabilities {
  enum class Method { count, mnlogistic };
  std::vector<std::string> labels;
  std::vector<double> probs;
  std::vector<std::size_t> counts;  // accepted rows per model
  Method method = Method::count;
  std::vector<std::vector<double>> bayes_factors;  // [i][j] = P(i) / P(j); +inf when P(j) = 0
  bool infinite_bayes_factor = false;
  double tolerance = 0.0;
};

inline const char* method_name(ModelProbabilities::Method m) {
  return m == ModelProbabilities::Method::count ? "count" : "mnlogistic";
}

namespace detail {

inline void fill_bayes_factors(ModelProbabilities& mp) {
  const std::size_t k = mp.probs.size();
  mp.bayes_factors.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      if (mp.probs[j] > 0) {
        mp.bayes_factors[i][j] = mp.probs[i] / mp.probs[j];
      } else {
        mp.bayes_factors[i][j] = mp.probs[i] > 0 ? std::numeric_limits<double>::infinity()
                                                 : std::numeric_limits<double>::quiet_NaN();
        mp.infinite_bayes_factor = true;
      }
    }
  }
}

inline ModelProbabilities count_probabilities(const ReferenceTable& table, const PosteriorSample& pooled) {
  if (table.models().size() < 2) fail(ErrorKind::invalid_argument, "model probabilities need at least two models");
  ModelProbabilities mp;
  mp.method = ModelProbabilities::Method::count;
  mp.tolerance = pooled.tolerance;
  for (const auto& m : table.models()) mp.labels.push_back(m.label);
  mp.counts.assign(mp.labels.size(), 0);
  for (const auto& r : pooled.rows) ++mp.counts[r.model];
  const double total = static_cast<double>(pooled.rows.size());
  if (total == 0) fail(ErrorKind::invalid_argument, "model probabilities: zero accepted rows");
  for (std::size_t c : mp.counts) mp.probs.push_back(static_cast<double>(c) / total);
  fill_bayes_factors(mp);
  return mp;
}

}  // namespace detail

/// Proportion of pooled acceptances contributed by each model.
inline ModelProbabilities model_probs_count(const ReferenceTable& table, const SummaryVector& s0, double rate,
                                            const Standardization& std_) {
  return detail::count_probabilities(table, reject(table, s0, rate, std_));
}

inline ModelProbabilities model_probs_count(const ReferenceTable& table, const SummaryVector& s0, double rate) {
  return model_probs_count(table, s0, rate, standardize(table));
}

/// Epanechnikov-weighted multinomial logistic regression of the model label
/// on standardized (s - s0) over the pooled acceptances, fitted by Newton /
/// IRLS with an L2 penalty of 1e-6 on the slopes.  Returns the fitted class
/// probabilities at s = s0.  Models without accepted rows get probability 0.
inline ModelProbabilities model_probs_mnlogistic(const ReferenceTable& table, const SummaryVector& s0, double rate,
                                                 const Standardization& std_) {
  const PosteriorSample pooled = reject(table, s0, rate, std_);
  ModelProbabilities mp = detail::count_probabilities(table, pooled);
  mp.method = ModelProbabilities::Method::mnlogistic;

  std::vector<std::size_t> present;
  for (std::size_t m = 0; m < mp.counts.size(); ++m) {
    if (mp.counts[m] > 0) present.push_back(m);
  }
  std::fill(mp.probs.begin(), mp.probs.end(), 0.0);
  if (present.size() == 1) {
    mp.probs[present.front()] = 1.0;
    detail::fill_bayes_factors(mp);
    return mp;
  }

  const std::size_t n = pooled.rows.size();
  const std::size_t d = table.num_stats();
  const std::size_t p = d + 1;
  const std::size_t classes = present.size();
  const std::size_t free = classes - 1;  // first present class is the reference
  const std::size_t dim = free * p;
  constexpr double lambda = 1e-6;

  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd w(n);
  std::vector<std::size_t> label(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = pooled.rows[i];
    const auto& stats = table.rows()[r.row].stats;
    x(i, 0) = 1.0;
    for (std::size_t k = 0; k < d; ++k) x(i, k + 1) = (stats[k] - s0[k]) / std_.scales[k];
    w(i) = r.weight;
    label[i] = static_cast<std::size_t>(std::find(present.begin(), present.end(), r.model) - present.begin());
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(dim);
  auto penalty_mask = [&](std::size_t idx) { return idx % p != 0 ? 1.0 : 0.0; };
  auto probabilities = [&](const Eigen::VectorXd& b, std::size_t i, Eigen::VectorXd& prob) {
    prob.resize(static_cast<Eigen::Index>(classes));
    prob(0) = 0.0;
    for (std::size_t c = 0; c < free; ++c) prob(static_cast<Eigen::Index>(c + 1)) = x.row(i).dot(b.segment(c * p, p));
    const double top = prob.maxCoeff();
    prob = (prob.array() - top).exp();
    prob /= prob.sum();
  };
  auto objective = [&](const Eigen::VectorXd& b) {
    double ll = 0.0;
    Eigen::VectorXd prob;
    for (std::size_t i = 0; i < n; ++i) {
      if (w(i) <= 0) continue;
      probabilities(b, i, prob);
      ll += w(i) * std::log(std::max(prob(static_cast<Eigen::Index>(label[i])), 1e-300));
    }
    for (std::size_t j = 0; j < dim; ++j) ll -= 0.5 * lambda * penalty_mask(j) * b(j) * b(j);
    return ll;
  };

  double current = objective(beta);
  double grad_norm = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd prob;
    for (std::size_t i = 0; i < n; ++i) {
      if (w(i) <= 0) continue;
      probabilities(beta, i, prob);
      const Eigen::RowVectorXd xi = x.row(i);
      const Eigen::MatrixXd outer = xi.transpose() * xi;
      for (std::size_t a = 0; a < free; ++a) {
        const double pa = prob(static_cast<Eigen::Index>(a + 1));
        const double ya = label[i] == a + 1 ? 1.0 : 0.0;
        grad.segment(a * p, p) += w(i) * (ya - pa) * xi.transpose();
        for (std::size_t c = 0; c < free; ++c) {
          const double pc = prob(static_cast<Eigen::Index>(c + 1));
          const double h = (a == c ? pa * (1.0 - pa) : -pa * pc);
          info.block(a * p, c * p, p, p) += w(i) * h * outer;
        }
      }
    }
    for (std::size_t j = 0; j < dim; ++j) {
      grad(j) -= lambda * penalty_mask(j) * beta(j);
      info(j, j) += lambda * penalty_mask(j);
    }
    grad_norm = grad.norm();
    Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) step = info.completeOrthogonalDecomposition().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double value = objective(candidate);
    while (value < current - 1e-12 * std::abs(current) && scale > 1e-10) {
      scale *= 0.5;
      candidate = beta + scale * step;
      value = objective(candidate);
    }
    const double moved = (scale * step).lpNorm<Eigen::Infinity>();
    beta = candidate;
    const double change = std::abs(value - current);
    current = value;
    if (moved < 1e-10 || (change <= 1e-13 * (1.0 + std::abs(current)) && grad_norm < 1e-6)) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw ConvergenceError("model_probs_mnlogistic: IRLS did not converge in 100 iterations",
                           std::vector<double>(beta.data(), beta.data() + beta.size()), grad_norm);
  }

  // probabilities at s = s0, i.e. z = 0: softmax of the intercepts
  Eigen::VectorXd eta(static_cast<Eigen::Index>(classes));
  eta(0) = 0.0;
  for (std::size_t c = 0; c < free; ++c) eta(static_cast<Eigen::Index>(c + 1)) = beta(c * p);
  eta = (eta.array() - eta.maxCoeff()).exp();
  eta /= eta.sum();
  for (std::size_t c = 0; c < classes; ++c) mp.probs[present[c]] = eta(static_cast<Eigen::Index>(c));
  detail::fill_bayes_factors(mp);
  return mp;
}

inline ModelProbabilities model_probs_mnlogistic(const ReferenceTable& table, const SummaryVector& s0, double rate) {
  return model_probs_mnlogistic(table, s0, rate, standardize(table));
}

}  // namespace abcdic
