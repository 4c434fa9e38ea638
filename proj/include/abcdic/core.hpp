#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "abcdic/distributions.hpp"
#include "abcdic/error.hpp"
#include "abcdic/parallel.hpp"
#include "abcdic/random.hpp"

namespace abcdic {

using Names = std::vector<std::string>;
using NamesPtr = std::shared_ptr<const Names>;

inline NamesPtr make_names(Names names) { return std::make_shared<const Names>(std::move(names)); }

inline bool same_names(const NamesPtr& a, const NamesPtr& b) {
  return a == b || (a && b && *a == *b);
}

/// Named, finite summary statistics s(y).  Names are shared between all
/// vectors produced by one simulator.
class SummaryVector {
 public:
  SummaryVector(std::vector<double> values, NamesPtr names) : values_(std::move(values)), names_(std::move(names)) {
    if (!names_ || values_.empty() || values_.size() != names_->size()) {
      fail(ErrorKind::invalid_argument, "SummaryVector: values and names must be non-empty and equal length");
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if (!std::isfinite(values_[k])) {
        fail(ErrorKind::invalid_argument, "SummaryVector: statistic '" + (*names_)[k] + "' is not finite");
      }
    }
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t k) const noexcept { return values_[k]; }
  std::span<const double> values() const noexcept { return values_; }
  const Names& names() const noexcept { return *names_; }
  const NamesPtr& names_ptr() const noexcept { return names_; }

  friend bool operator==(const SummaryVector& a, const SummaryVector& b) {
    return a.values_ == b.values_ && same_names(a.names_, b.names_);
  }

 private:
  std::vector<double> values_;
  NamesPtr names_;
};

/// Support transform mapping a parameter to an unconstrained scale.
struct Transform {
  enum class Kind { identity, log, logit };
  Kind kind = Kind::identity;
  double lo = 0.0;
  double hi = 1.0;

  static Transform identity() { return {}; }
  static Transform log() { return {Kind::log, 0.0, 0.0}; }
  static Transform logit(double lo, double hi) {
    if (!(hi > lo)) fail(ErrorKind::invalid_argument, "logit transform requires lo < hi");
    return {Kind::logit, lo, hi};
  }

  bool in_support(double x) const noexcept {
    switch (kind) {
      case Kind::identity: return std::isfinite(x);
      case Kind::log: return x > 0 && std::isfinite(x);
      case Kind::logit: return x > lo && x < hi;
    }
    return false;
  }

  double forward(double x) const {
    switch (kind) {
      case Kind::identity: return x;
      case Kind::log: return std::log(x);
      case Kind::logit: {
        const double p = (x - lo) / (hi - lo);
        return std::log(p) - std::log1p(-p);
      }
    }
    return x;
  }

  /// Back-transform, nudged off the boundary when floating point saturates.
  double inverse(double y) const {
    switch (kind) {
      case Kind::identity: return y;
      case Kind::log: return std::max(std::exp(y), std::numeric_limits<double>::denorm_min());
      case Kind::logit: {
        const double x = lo + (hi - lo) / (1.0 + std::exp(-y));
        if (x <= lo) return std::nextafter(lo, hi);
        if (x >= hi) return std::nextafter(hi, lo);
        return x;
      }
    }
    return y;
  }

  friend bool operator==(const Transform&, const Transform&) = default;
};

/// Named parameter values together with their support transforms.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<double> values, NamesPtr names, std::shared_ptr<const std::vector<Transform>> transforms)
      : values_(std::move(values)), names_(std::move(names)), transforms_(std::move(transforms)) {
    if (!names_ || !transforms_ || values_.size() != names_->size() || values_.size() != transforms_->size()) {
      fail(ErrorKind::invalid_argument, "ParamVector: values, names and transforms must have equal length");
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if (!(*transforms_)[k].in_support(values_[k])) {
        fail(ErrorKind::invalid_argument, "ParamVector: '" + (*names_)[k] + "' = " +
                                              std::to_string(values_[k]) + " lies outside its support");
      }
    }
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t k) const noexcept { return values_[k]; }
  std::span<const double> values() const noexcept { return values_; }
  const Names& names() const noexcept { return *names_; }
  const std::vector<Transform>& transforms() const noexcept { return *transforms_; }

  /// Value by name; throws when absent.
  double at(std::string_view name) const {
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if ((*names_)[k] == name) return values_[k];
    }
    fail(ErrorKind::invalid_argument, "ParamVector: no parameter named '" + std::string(name) + "'");
  }

 private:
  std::vector<double> values_;
  NamesPtr names_;
  std::shared_ptr<const std::vector<Transform>> transforms_;
};

/// Transform matching a prior's support.  `power` maps the prior draw x to
/// the recorded value x^power (used for the variance of the toy Gaussian).
inline Transform default_transform(const PriorSpec& prior, double power = 1.0) {
  const auto [lo, hi] = support(prior);
  if (std::isinf(lo) && std::isinf(hi)) return Transform::identity();
  if (lo >= 0 && std::isinf(hi)) return Transform::log();
  if (power != 1.0) return lo >= 0 ? Transform::log() : Transform::identity();
  return Transform::logit(lo, hi);
}

struct ParamDef {
  std::string name;
  PriorSpec prior;
  Transform transform;
  double power = 1.0;

  ParamDef(std::string name_, PriorSpec prior_, double power_ = 1.0)
      : name(std::move(name_)), prior(std::move(prior_)), transform(default_transform(prior, power_)), power(power_) {}
};

using Simulator = std::function<SummaryVector(const ParamVector&, std::uint64_t seed)>;

/// A named generative model: priors plus a simulator that is a pure
/// function of (parameters, seed).
class ModelSpec {
 public:
  ModelSpec(std::string label, std::vector<ParamDef> params, NamesPtr stat_names, Simulator simulator)
      : label_(std::move(label)), params_(std::move(params)), stat_names_(std::move(stat_names)),
        simulator_(std::move(simulator)) {
    Names names;
    std::vector<Transform> transforms;
    for (const auto& p : params_) {
      names.push_back(p.name);
      transforms.push_back(p.transform);
    }
    param_names_ = make_names(std::move(names));
    transforms_ = std::make_shared<const std::vector<Transform>>(std::move(transforms));
  }

  const std::string& label() const noexcept { return label_; }
  const std::vector<ParamDef>& params() const noexcept { return params_; }
  const NamesPtr& param_names() const noexcept { return param_names_; }
  const std::shared_ptr<const std::vector<Transform>>& transforms() const noexcept { return transforms_; }
  const NamesPtr& stat_names() const noexcept { return stat_names_; }

  ParamVector make_params(std::vector<double> values) const {
    return ParamVector(std::move(values), param_names_, transforms_);
  }

  ParamVector draw_prior(Rng& rng) const {
    std::vector<double> values;
    values.reserve(params_.size());
    for (const auto& p : params_) {
      const double x = sample(p.prior, rng);
      values.push_back(p.power == 1.0 ? x : std::pow(x, p.power));
    }
    return make_params(std::move(values));
  }

  /// Runs the simulator and enforces the output contract.
  SummaryVector simulate(const ParamVector& theta, std::uint64_t seed) const {
    SummaryVector s = [&] {
      try {
        return simulator_(theta, seed);
      } catch (const SimulationError&) {
        throw;
      } catch (const Error& e) {
        throw SimulationError(seed, "model '" + label_ + "': " + e.what());
      }
    }();
    if (!same_names(s.names_ptr(), stat_names_)) {
      throw SimulationError(seed, "model '" + label_ + "' emitted mismatched statistic names");
    }
    return s;
  }

 private:
  std::string label_;
  std::vector<ParamDef> params_;
  NamesPtr stat_names_;
  Simulator simulator_;
  NamesPtr param_names_;
  std::shared_ptr<const std::vector<Transform>> transforms_;
};

/// Per-model column metadata inside a reference table.
struct TableModel {
  std::string label;
  NamesPtr param_names;
  std::shared_ptr<const std::vector<Transform>> transforms;
};

/// One prior-predictive simulation.  `index` is the global row number that
/// also determines the row's seed.
struct TableRow {
  std::size_t index = 0;
  std::size_t model = 0;  // position in ReferenceTable::models()
  std::vector<double> params;
  std::vector<double> stats;

  friend bool operator==(const TableRow&, const TableRow&) = default;
};

class ReferenceTable {
 public:
  ReferenceTable(std::vector<TableModel> models, NamesPtr stat_names, std::uint64_t root_seed,
                 std::vector<TableRow> rows)
      : models_(std::move(models)), stat_names_(std::move(stat_names)), root_seed_(root_seed), rows_(std::move(rows)) {
    if (!stat_names_ || stat_names_->empty()) fail(ErrorKind::invalid_argument, "ReferenceTable: no statistics");
    for (const auto& r : rows_) {
      if (r.model >= models_.size() || r.stats.size() != stat_names_->size() ||
          r.params.size() != models_[r.model].param_names->size()) {
        fail(ErrorKind::invalid_argument, "ReferenceTable: row " + std::to_string(r.index) + " has the wrong shape");
      }
      for (double v : r.stats) {
        if (!std::isfinite(v)) {
          fail(ErrorKind::invalid_argument, "ReferenceTable: row " + std::to_string(r.index) + " is not finite");
        }
      }
    }
  }

  const std::vector<TableModel>& models() const noexcept { return models_; }
  const Names& stat_names() const noexcept { return *stat_names_; }
  const NamesPtr& stat_names_ptr() const noexcept { return stat_names_; }
  std::uint64_t root_seed() const noexcept { return root_seed_; }
  const std::vector<TableRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t num_stats() const noexcept { return stat_names_->size(); }

  /// Position of a model label, or npos.
  std::size_t model_index(std::string_view label) const noexcept {
    for (std::size_t m = 0; m < models_.size(); ++m) {
      if (models_[m].label == label) return m;
    }
    return npos;
  }

  SummaryVector summary(std::size_t row) const { return SummaryVector(rows_[row].stats, stat_names_); }
  ParamVector param_vector(std::size_t row) const {
    const auto& m = models_[rows_[row].model];
    return ParamVector(rows_[row].params, m.param_names, m.transforms);
  }

  friend bool operator==(const ReferenceTable& a, const ReferenceTable& b) {
    if (a.root_seed_ != b.root_seed_ || *a.stat_names_ != *b.stat_names_ || a.rows_ != b.rows_) return false;
    if (a.models_.size() != b.models_.size()) return false;
    for (std::size_t m = 0; m < a.models_.size(); ++m) {
      if (a.models_[m].label != b.models_[m].label || *a.models_[m].param_names != *b.models_[m].param_names ||
          *a.models_[m].transforms != *b.models_[m].transforms) {
        return false;
      }
    }
    return true;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<TableModel> models_;
  NamesPtr stat_names_;
  std::uint64_t root_seed_;
  std::vector<TableRow> rows_;
};

/// Seeds used for one reference-table row: the prior draw and the simulator
/// get separate children of the row seed.
struct RowSeeds {
  std::uint64_t prior;
  std::uint64_t simulation;
};

inline RowSeeds row_seeds(std::uint64_t root_seed, std::size_t row) {
  const std::uint64_t base = child_seed(root_seed, row);
  return {child_seed(base, 0), child_seed(base, 1)};
}

/// Prior-predictive simulation: n_per_model rows for each model, laid out
/// model-major, row i seeded from child_seed(root_seed, i).
inline ReferenceTable build_reference_table(std::span<const ModelSpec> models, std::size_t n_per_model,
                                            std::uint64_t root_seed, unsigned threads = 1) {
  if (models.empty()) fail(ErrorKind::invalid_argument, "build_reference_table: no models");
  if (n_per_model == 0) fail(ErrorKind::invalid_argument, "build_reference_table: nPerModel must be >= 1");
  for (const auto& m : models) {
    if (*m.stat_names() != *models.front().stat_names()) {
      fail(ErrorKind::invalid_argument, "build_reference_table: models '" + models.front().label() + "' and '" +
                                            m.label() + "' emit different statistics");
    }
  }
  std::vector<TableModel> meta;
  for (const auto& m : models) meta.push_back({m.label(), m.param_names(), m.transforms()});

  std::vector<TableRow> rows(models.size() * n_per_model);
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    const std::size_t m = i / n_per_model;
    const RowSeeds seeds = row_seeds(root_seed, i);
    Rng prior_rng(seeds.prior);
    ParamVector theta = models[m].draw_prior(prior_rng);
    SummaryVector s = models[m].simulate(theta, seeds.simulation);
    rows[i] = TableRow{i, m, std::vector<double>(theta.values().begin(), theta.values().end()),
                       std::vector<double>(s.values().begin(), s.values().end())};
  });
  return ReferenceTable(std::move(meta), models.front().stat_names(), root_seed, std::move(rows));
}

}  // namespace abcdic
