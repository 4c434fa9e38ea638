#pragma once

// End-to-end studies: build (or load) a pooled reference table, then for
// every observed replicate run rejection, regression adjustment, DIC,
// predictive checks and model probabilities, and write a report bundle.
//
// Seed layout for root seed R (all via child_seed):
//   reference table            child(R, 0)
//   replicate r                B = child(child(R, 1), r)
//     observed statistics      child(B, 0)
//     candidate c              C = child(B, 1 + c)
//       predictive check       child(C, 0)
//       DIC variant v          child(C, v)

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abcdic/abc.hpp"
#include "abcdic/core.hpp"
#include "abcdic/dic.hpp"
#include "abcdic/io.hpp"
#include "abcdic/registry.hpp"

namespace abcdic {

inline constexpr int experiment_schema_version = 1;

/// Simulates observed data from a model at fixed parameter values.
struct Generator {
  std::string model;  // candidate label or registered model name
  std::map<std::string, double> truth;
  std::size_t replicates = 1;
  std::optional<Aggregation> aggregation;  // overrides dic.aggregation for these replicates
};

struct KernelSpec {
  enum class Bandwidth { unit, tolerance, fixed };
  enum class Scale { raw, standardized };
  Bandwidth bandwidth = Bandwidth::unit;
  double epsilon = 1.0;  // used with Bandwidth::fixed
  Scale scale = Scale::raw;
  bool normalized = false;
};

struct ExperimentConfig {
  int schema_version = experiment_schema_version;
  std::vector<ModelRequest> models;
  std::optional<std::vector<double>> observed_values;
  std::string observed_fixture;
  std::vector<Generator> generators;
  std::size_t simulations_per_model = 10000;
  double rate = 0.1;
  bool adjust = true;
  std::vector<int> dic_variants{1, 2};
  std::size_t dic_n1 = 1000;  // simulations for DIC_1
  std::size_t dic_n = 200;    // inner simulations for DIC_2
  std::size_t dic_m = 200;    // outer posterior draws for DIC_2
  Aggregation aggregation = Aggregation::mean;
  KernelSpec kernel;
  std::size_t predictive_n = 1000;  // 0 disables predictive checks
  std::vector<ModelProbabilities::Method> probability_methods{ModelProbabilities::Method::count,
                                                              ModelProbabilities::Method::mnlogistic};
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string table_path;  // load instead of simulating when set
  bool write_table = false;
  bool write_posteriors = false;

  void validate() const {
    if (schema_version != experiment_schema_version) {
      fail(ErrorKind::config, "unsupported schema_version " + std::to_string(schema_version));
    }
    if (models.empty()) fail(ErrorKind::config, "config: no models");
    if (!(rate > 0 && rate <= 1)) fail(ErrorKind::config, "config: rate must lie in (0, 1]");
    if (simulations_per_model == 0) fail(ErrorKind::config, "config: simulations_per_model must be >= 1");
    if (dic_n == 0 || dic_m == 0 || dic_n1 == 0) fail(ErrorKind::config, "config: dic n and m must be >= 1");
    for (int v : dic_variants) {
      if (v != 1 && v != 2) fail(ErrorKind::config, "config: DIC variants are 1 and 2");
    }
    for (const auto& g : generators) {
      if (g.replicates == 0) fail(ErrorKind::config, "config: replicate count must be >= 1");
    }
    const int sources = (observed_values ? 1 : 0) + (observed_fixture.empty() ? 0 : 1) + (generators.empty() ? 0 : 1);
    if (sources != 1) fail(ErrorKind::config, "config: observed needs exactly one of values, fixture, generators");
  }
};

// ------------------------------------------------------------------ JSON

namespace detail {

inline const io::json& field(const io::json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorKind::config, std::string("config: missing field '") + key + "'");
  return j.at(key);
}

inline Aggregation parse_aggregation(const io::json& j) {
  const auto s = j.get<std::string>();
  if (s == "mean") return Aggregation::mean;
  if (s == "median") return Aggregation::median;
  fail(ErrorKind::config, "config: aggregation must be 'mean' or 'median'");
}

inline ModelRequest parse_model(const io::json& j) {
  io::detail::only_fields(j, {"name", "label", "priors", "settings"}, "config model");
  ModelRequest req;
  req.name = field(j, "name").get<std::string>();
  const auto& reg = registered_models();
  if (std::find(reg.begin(), reg.end(), req.name) == reg.end()) {
    fail(ErrorKind::unknown_model, "unknown model '" + req.name + "'");
  }
  req.label = j.value("label", req.name);
  if (j.contains("priors")) {
    for (const auto& [param, prior] : j.at("priors").items()) req.priors.emplace(param, io::prior_from_json(prior));
  }
  if (j.contains("settings")) {
    const auto& s = j.at("settings");
    io::detail::only_fields(s, {"loci", "sample"}, "config settings");
    coal::LocusSettings settings = req.name == "coal.isolation" || req.name == "coal.im_asym" || req.name == "coal.im_full"
                                       ? coal::structured_settings()
                                       : coal::demographic_settings();
    if (s.contains("loci")) settings.loci = s.at("loci").get<std::size_t>();
    if (s.contains("sample")) {
      const auto v = s.at("sample").get<std::vector<int>>();
      if (v.empty() || v.size() > 2) fail(ErrorKind::config, "config: sample lists one or two deme sizes");
      settings.sample = {v[0], v.size() > 1 ? v[1] : 0};
    }
    if (settings.loci == 0) fail(ErrorKind::config, "config: loci must be >= 1");
    req.settings = settings;
  }
  return req;
}

}  // namespace detail

inline ExperimentConfig parse_config(const io::json& j) {
  try {
    io::detail::only_fields(j,
                            {"schema_version", "models", "observed", "simulations_per_model", "rate", "adjust", "dic",
                             "kernel", "predictive", "model_probabilities", "seed", "threads", "table",
                             "write_table", "write_posteriors", "description"},
                            "config");
    ExperimentConfig c;
    c.schema_version = detail::field(j, "schema_version").get<int>();
    for (const auto& m : detail::field(j, "models")) c.models.push_back(detail::parse_model(m));
    const auto& obs = detail::field(j, "observed");
    io::detail::only_fields(obs, {"values", "fixture", "generators"}, "config observed");
    if (obs.contains("values")) c.observed_values = obs.at("values").get<std::vector<double>>();
    if (obs.contains("fixture")) c.observed_fixture = obs.at("fixture").get<std::string>();
    if (obs.contains("generators")) {
      for (const auto& g : obs.at("generators")) {
        io::detail::only_fields(g, {"model", "truth", "replicates", "aggregation"}, "config generator");
        Generator gen;
        gen.model = detail::field(g, "model").get<std::string>();
        gen.truth = detail::field(g, "truth").get<std::map<std::string, double>>();
        gen.replicates = g.value("replicates", std::size_t{1});
        if (g.contains("aggregation")) gen.aggregation = detail::parse_aggregation(g.at("aggregation"));
        c.generators.push_back(std::move(gen));
      }
    }
    c.simulations_per_model = j.value("simulations_per_model", c.simulations_per_model);
    c.rate = j.value("rate", c.rate);
    if (j.contains("adjust")) {
      const auto a = j.at("adjust").get<std::string>();
      if (a != "loclinear" && a != "none") fail(ErrorKind::config, "config: adjust must be 'loclinear' or 'none'");
      c.adjust = a == "loclinear";
    }
    if (j.contains("dic")) {
      const auto& d = j.at("dic");
      io::detail::only_fields(d, {"variants", "n", "n1", "m", "aggregation"}, "config dic");
      c.dic_variants = d.value("variants", c.dic_variants);
      c.dic_n = d.value("n", c.dic_n);
      c.dic_n1 = d.value("n1", d.value("n", c.dic_n1));
      c.dic_m = d.value("m", c.dic_m);
      if (d.contains("aggregation")) c.aggregation = detail::parse_aggregation(d.at("aggregation"));
    }
    if (j.contains("kernel")) {
      const auto& k = j.at("kernel");
      io::detail::only_fields(k, {"bandwidth", "scale", "normalized"}, "config kernel");
      if (k.contains("bandwidth")) {
        const auto& b = k.at("bandwidth");
        if (b.is_number()) {
          c.kernel.bandwidth = KernelSpec::Bandwidth::fixed;
          c.kernel.epsilon = b.get<double>();
          if (!(c.kernel.epsilon > 0)) fail(ErrorKind::config, "config: kernel bandwidth must be > 0");
        } else if (b == "unit") {
          c.kernel.bandwidth = KernelSpec::Bandwidth::unit;
        } else if (b == "tolerance") {
          c.kernel.bandwidth = KernelSpec::Bandwidth::tolerance;
        } else {
          fail(ErrorKind::config, "config: kernel bandwidth must be 'unit', 'tolerance' or a number");
        }
      }
      if (k.contains("scale")) {
        const auto s = k.at("scale").get<std::string>();
        if (s != "raw" && s != "standardized") fail(ErrorKind::config, "config: kernel scale must be 'raw' or 'standardized'");
        c.kernel.scale = s == "raw" ? KernelSpec::Scale::raw : KernelSpec::Scale::standardized;
      }
      c.kernel.normalized = k.value("normalized", c.kernel.normalized);
    }
    if (j.contains("predictive")) c.predictive_n = j.at("predictive").value("n", c.predictive_n);
    if (j.contains("model_probabilities")) {
      c.probability_methods.clear();
      for (const auto& m : j.at("model_probabilities")) {
        const auto s = m.get<std::string>();
        if (s == "count") {
          c.probability_methods.push_back(ModelProbabilities::Method::count);
        } else if (s == "mnlogistic") {
          c.probability_methods.push_back(ModelProbabilities::Method::mnlogistic);
        } else {
          fail(ErrorKind::config, "config: model_probabilities entries are 'count' or 'mnlogistic'");
        }
      }
    }
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.table_path = j.value("table", c.table_path);
    c.write_table = j.value("write_table", c.write_table);
    c.write_posteriors = j.value("write_posteriors", c.write_posteriors);
    c.validate();
    return c;
  } catch (const io::json::exception& e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error&) {
    fail(ErrorKind::config, "cannot read config '" + path.string() + "'");
  }
  io::json j;
  try {
    j = io::json::parse(text);
  } catch (const io::json::exception& e) {
    fail(ErrorKind::config, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

inline io::json to_json(const ExperimentConfig& c) {
  io::json j;
  j["schema_version"] = c.schema_version;
  io::json models = io::json::array();
  for (const auto& m : c.models) {
    io::json jm{{"name", m.name}, {"label", m.label.empty() ? m.name : m.label}};
    if (!m.priors.empty()) {
      io::json priors = io::json::object();
      for (const auto& [k, v] : m.priors) priors[k] = io::to_json(v);
      jm["priors"] = priors;
    }
    if (m.settings) {
      jm["settings"] = {{"loci", m.settings->loci}, {"sample", {m.settings->sample[0], m.settings->sample[1]}}};
    }
    models.push_back(jm);
  }
  j["models"] = models;
  io::json obs = io::json::object();
  if (c.observed_values) obs["values"] = *c.observed_values;
  if (!c.observed_fixture.empty()) obs["fixture"] = c.observed_fixture;
  if (!c.generators.empty()) {
    io::json gens = io::json::array();
    for (const auto& g : c.generators) {
      io::json jg{{"model", g.model}, {"truth", g.truth}, {"replicates", g.replicates}};
      if (g.aggregation) jg["aggregation"] = aggregation_name(*g.aggregation);
      gens.push_back(jg);
    }
    obs["generators"] = gens;
  }
  j["observed"] = obs;
  j["simulations_per_model"] = c.simulations_per_model;
  j["rate"] = c.rate;
  j["adjust"] = c.adjust ? "loclinear" : "none";
  j["dic"] = {{"variants", c.dic_variants}, {"n", c.dic_n}, {"n1", c.dic_n1}, {"m", c.dic_m},
              {"aggregation", aggregation_name(c.aggregation)}};
  io::json bw = c.kernel.bandwidth == KernelSpec::Bandwidth::fixed ? io::json(c.kernel.epsilon)
                : c.kernel.bandwidth == KernelSpec::Bandwidth::unit ? io::json("unit")
                                                                    : io::json("tolerance");
  j["kernel"] = {{"bandwidth", bw},
                 {"scale", c.kernel.scale == KernelSpec::Scale::raw ? "raw" : "standardized"},
                 {"normalized", c.kernel.normalized}};
  j["predictive"] = {{"n", c.predictive_n}};
  io::json methods = io::json::array();
  for (auto m : c.probability_methods) methods.push_back(method_name(m));
  j["model_probabilities"] = methods;
  j["seed"] = c.seed;
  if (!c.table_path.empty()) j["table"] = c.table_path;
  return j;
}

// --------------------------------------------------------------- results

struct CandidateResult {
  std::string label;
  std::size_t accepted = 0;
  double tolerance = 0.0;
  std::vector<DicReport> dic;  // in config variant order
  std::optional<PredictiveCheck> check;
  std::optional<PosteriorSample> posterior;  // kept only when requested
};

struct ReplicateResult {
  std::size_t index = 0;
  std::string truth;  // generator model, or "observed"
  std::size_t generator = 0;
  std::vector<double> observed;
  Aggregation aggregation = Aggregation::mean;
  std::vector<ModelProbabilities> probabilities;  // in config method order
  std::vector<CandidateResult> candidates;

  /// DIC of each candidate for one variant; NaN when not computed.
  std::vector<double> dic_values(int variant) const {
    std::vector<double> out;
    for (const auto& c : candidates) {
      double v = std::numeric_limits<double>::quiet_NaN();
      for (const auto& r : c.dic) {
        if (r.variant == variant) v = r.dic;
      }
      out.push_back(v);
    }
    return out;
  }
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<std::string> labels;  // candidate labels
  NamesPtr stat_names;
  std::vector<std::string> truths;  // one per generator (or "observed")
  std::vector<ReplicateResult> replicates;
  std::optional<ReferenceTable> table;
  std::vector<ModelSpec> specs;
};

/// Winner of one replicate: share 1 for the argmin, or an equal split
/// among exactly tied minima (flagged).
struct Selection {
  std::vector<double> share;
  bool tie = false;
};

inline Selection select_min(std::span<const double> dic) {
  Selection s;
  s.share.assign(dic.size(), 0.0);
  double best = std::numeric_limits<double>::infinity();
  for (double v : dic) {
    if (!std::isnan(v)) best = std::min(best, v);
  }
  std::size_t winners = 0;
  for (double v : dic) winners += v == best;
  if (winners == 0) return s;
  for (std::size_t i = 0; i < dic.size(); ++i) {
    if (dic[i] == best) s.share[i] = 1.0 / static_cast<double>(winners);
  }
  s.tie = winners > 1;
  return s;
}

/// Per true model: fraction of replicates in which each candidate had the
/// smallest DIC of the given variant.
struct SelectionSummary {
  int variant = 1;
  std::vector<std::string> truths;
  std::vector<std::string> candidates;
  std::vector<std::vector<double>> frequency;  // [truth][candidate]
  std::vector<std::size_t> replicates;         // per truth
  std::vector<std::size_t> ties;               // replicates with a tie, per truth
};

inline SelectionSummary emit_selection_summary(const ExperimentResult& result, int variant) {
  if (result.replicates.empty()) fail(ErrorKind::invalid_argument, "selection summary needs >= 1 replicate");
  SelectionSummary s;
  s.variant = variant;
  s.truths = result.truths;
  s.candidates = result.labels;
  s.frequency.assign(s.truths.size(), std::vector<double>(s.candidates.size(), 0.0));
  s.replicates.assign(s.truths.size(), 0);
  s.ties.assign(s.truths.size(), 0);
  for (const auto& r : result.replicates) {
    const auto sel = select_min(r.dic_values(variant));
    ++s.replicates[r.generator];
    s.ties[r.generator] += sel.tie;
    for (std::size_t c = 0; c < sel.share.size(); ++c) s.frequency[r.generator][c] += sel.share[c];
  }
  for (std::size_t t = 0; t < s.truths.size(); ++t) {
    for (auto& f : s.frequency[t]) f = s.replicates[t] ? f / static_cast<double>(s.replicates[t]) : 0.0;
  }
  return s;
}

// ------------------------------------------------------------- pipeline

namespace detail {

inline KernelConfig make_kernel(const KernelSpec& spec, const PosteriorSample& sample) {
  const std::size_t d = sample.standardization.scales.size();
  const double eps = spec.bandwidth == KernelSpec::Bandwidth::unit      ? 1.0
                     : spec.bandwidth == KernelSpec::Bandwidth::fixed   ? spec.epsilon
                     : sample.tolerance > 0                              ? sample.tolerance
                                                                         : 1.0;
  std::vector<double> scales =
      spec.scale == KernelSpec::Scale::raw ? std::vector<double>(d, 1.0) : sample.standardization.scales;
  return KernelConfig(eps, std::move(scales), spec.normalized);
}

inline ParamVector truth_params(const ModelSpec& model, const std::map<std::string, double>& truth) {
  std::vector<double> values;
  for (const auto& name : *model.param_names()) {
    auto it = truth.find(name);
    if (it == truth.end()) fail(ErrorKind::config, "generator for '" + model.label() + "' lacks truth for '" + name + "'");
    values.push_back(it->second);
  }
  if (truth.size() != values.size()) fail(ErrorKind::config, "generator for '" + model.label() + "' has extra truth values");
  try {
    return model.make_params(std::move(values));
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
}

}  // namespace detail

/// Analysis of one observation against every candidate model.
inline ReplicateResult analyse_observation(const ExperimentConfig& config, const std::vector<ModelSpec>& specs,
                                           const ReferenceTable& table, const Standardization& std_,
                                           const SummaryVector& s0, std::uint64_t replicate_seed,
                                           Aggregation agg, unsigned threads = 1) {
  ReplicateResult out;
  out.observed.assign(s0.values().begin(), s0.values().end());
  out.aggregation = agg;
  if (specs.size() > 1) {
    for (auto method : config.probability_methods) {
      out.probabilities.push_back(method == ModelProbabilities::Method::count
                                      ? model_probs_count(table, s0, config.rate, std_)
                                      : model_probs_mnlogistic(table, s0, config.rate, std_));
    }
  }
  for (std::size_t c = 0; c < specs.size(); ++c) {
    const ModelSpec& model = specs[c];
    const std::uint64_t cseed = child_seed(replicate_seed, 1 + c);
    PosteriorSample sample = reject(table, s0, config.rate, std_, model.label());
    if (config.adjust) sample = adjust_loclinear(sample, table, s0);
    CandidateResult cr;
    cr.label = model.label();
    cr.accepted = sample.rows.size();
    cr.tolerance = sample.tolerance;
    const KernelConfig kernel = detail::make_kernel(config.kernel, sample);
    for (int v : config.dic_variants) {
      DicReport rep = v == 1 ? dic1(sample, model, config.dic_n1, kernel, agg, child_seed(cseed, 1), threads)
                             : dic2(sample, model, config.dic_m, config.dic_n, kernel, agg, child_seed(cseed, 2), threads);
      cr.dic.push_back(std::move(rep));
    }
    if (config.predictive_n > 0) cr.check = predictive_check(sample, model, config.predictive_n, child_seed(cseed, 0), threads);
    if (config.write_posteriors) cr.posterior = std::move(sample);
    out.candidates.push_back(std::move(cr));
  }
  return out;
}

inline std::vector<ModelSpec> make_models(const ExperimentConfig& config) {
  std::vector<ModelSpec> specs;
  for (const auto& req : config.models) {
    specs.push_back(make_model(req));
    for (std::size_t i = 0; i + 1 < specs.size(); ++i) {
      if (specs[i].label() == specs.back().label()) fail(ErrorKind::config, "duplicate model label '" + specs.back().label() + "'");
    }
  }
  return specs;
}

/// Reference table for the config's candidate models: loaded from
/// `table_path` when set (labels and statistics must match), else simulated.
inline ReferenceTable obtain_table(const ExperimentConfig& config, const std::vector<ModelSpec>& specs, unsigned threads) {
  if (config.table_path.empty()) {
    return build_reference_table(specs, config.simulations_per_model, child_seed(config.seed, 0), threads);
  }
  ReferenceTable table = io::read_table(config.table_path);
  for (const auto& m : specs) {
    const std::size_t idx = table.model_index(m.label());
    if (idx == ReferenceTable::npos) fail(ErrorKind::table_io, "table has no rows for model '" + m.label() + "'");
    if (*table.models()[idx].param_names != *m.param_names()) {
      fail(ErrorKind::table_io, "table parameters for '" + m.label() + "' do not match the model");
    }
  }
  if (table.stat_names() != *specs.front().stat_names()) fail(ErrorKind::table_io, "table statistics do not match the models");
  return table;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const unsigned threads = resolve_threads(config.threads);
  ExperimentResult result;
  result.config = config;
  result.specs = make_models(config);
  const auto& specs = result.specs;
  for (const auto& m : specs) result.labels.push_back(m.label());
  result.stat_names = specs.front().stat_names();

  // observations to analyse
  struct Job {
    std::size_t generator;
    std::optional<SummaryVector> fixed;
    std::optional<ParamVector> truth;
    const ModelSpec* model = nullptr;
    Aggregation agg;
  };
  std::vector<Job> jobs;
  std::vector<ModelSpec> generator_models;
  generator_models.reserve(config.generators.size());
  if (config.observed_values) {
    result.truths.push_back("observed");
    jobs.push_back({0, SummaryVector(*config.observed_values, result.stat_names), std::nullopt, nullptr, config.aggregation});
  } else if (!config.observed_fixture.empty()) {
    if (config.observed_fixture != "toy") fail(ErrorKind::config, "unknown observed fixture '" + config.observed_fixture + "'");
    const SummaryVector fx = toy::observed_fixture();
    if (fx.names() != *result.stat_names) fail(ErrorKind::config, "fixture 'toy' does not match the models' statistics");
    result.truths.push_back("toy");
    jobs.push_back({0, SummaryVector(std::vector<double>(fx.values().begin(), fx.values().end()), result.stat_names), std::nullopt,
                    nullptr, config.aggregation});
  } else {
    for (std::size_t g = 0; g < config.generators.size(); ++g) {
      const auto& gen = config.generators[g];
      auto it = std::find_if(specs.begin(), specs.end(), [&](const ModelSpec& m) { return m.label() == gen.model; });
      generator_models.push_back(it != specs.end() ? *it : make_model(gen.model));
      if (*generator_models.back().stat_names() != *result.stat_names) {
        fail(ErrorKind::config, "generator '" + gen.model + "' emits different statistics from the candidates");
      }
      result.truths.push_back(gen.model);
    }
    for (std::size_t g = 0; g < config.generators.size(); ++g) {
      const auto& gen = config.generators[g];
      const ParamVector truth = detail::truth_params(generator_models[g], gen.truth);
      for (std::size_t r = 0; r < gen.replicates; ++r) {
        jobs.push_back({g, std::nullopt, truth, &generator_models[g], gen.aggregation.value_or(config.aggregation)});
      }
    }
  }

  result.table = obtain_table(config, specs, threads);
  const ReferenceTable& table = *result.table;
  const Standardization std_ = standardize(table);
  const std::uint64_t replicate_root = child_seed(config.seed, 1);

  result.replicates.resize(jobs.size());
  const bool outer = jobs.size() > 1;
  parallel_for(jobs.size(), outer ? threads : 1, [&](std::size_t r) {
    const Job& job = jobs[r];
    const std::uint64_t rseed = child_seed(replicate_root, r);
    const SummaryVector s0 = job.fixed ? *job.fixed : job.model->simulate(*job.truth, child_seed(rseed, 0));
    ReplicateResult rr = analyse_observation(config, specs, table, std_, s0, rseed, job.agg, outer ? 1 : threads);
    rr.index = r;
    rr.generator = job.generator;
    rr.truth = result.truths[job.generator];
    result.replicates[r] = std::move(rr);
  });
  return result;
}

// --------------------------------------------------------------- bundle

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string join_warnings(const std::vector<std::string>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? ";" : "") + w[i];
  return out;
}

}  // namespace detail

/// Mean and sample sd of DIC per (truth, candidate) for one variant.
inline std::string dic_summary_csv(const ExperimentResult& result) {
  using io::format_double;
  std::string out = "variant,truth,candidate,mean,sd,replicates\n";
  for (int v : result.config.dic_variants) {
    for (std::size_t t = 0; t < result.truths.size(); ++t) {
      for (std::size_t c = 0; c < result.labels.size(); ++c) {
        std::vector<double> vals;
        for (const auto& r : result.replicates) {
          if (r.generator != t) continue;
          const double x = r.dic_values(v)[c];
          if (std::isfinite(x)) vals.push_back(x);
        }
        double mean = 0.0, sd = 0.0;
        for (double x : vals) mean += x;
        if (!vals.empty()) mean /= static_cast<double>(vals.size());
        for (double x : vals) sd += (x - mean) * (x - mean);
        sd = vals.size() > 1 ? std::sqrt(sd / static_cast<double>(vals.size() - 1)) : 0.0;
        out += std::to_string(v) + "," + detail::csv_escape(result.truths[t]) + "," + detail::csv_escape(result.labels[c]) +
               "," + format_double(mean) + "," + format_double(sd) + "," + std::to_string(vals.size()) + "\n";
      }
    }
  }
  return out;
}

/// Writes the report bundle to `out_dir` atomically (staged, then renamed).
/// `extra` maps additional file names to their contents.
inline void write_bundle(const ExperimentResult& result, const std::filesystem::path& out_dir,
                         const std::map<std::string, std::string>& extra = {}) {
  using io::format_double;
  using io::json;
  io::StagedDirectory stage(out_dir);
  const auto& cfg = result.config;
  const Names& stats = *result.stat_names;
  std::vector<std::string> files;
  auto emit = [&](const std::string& name, const std::string& content) {
    io::write_atomic(stage.file(name), content);
    files.push_back(name);
  };

  // observed statistics; log H is added when H > 0, else the raw value is flagged
  {
    const auto h = std::find(stats.begin(), stats.end(), "fwH");
    std::string out = "replicate,truth";
    for (const auto& s : stats) out += "," + s;
    if (h != stats.end()) out += ",log_fwH,log_fwH_is_raw";
    out += "\n";
    for (const auto& r : result.replicates) {
      out += std::to_string(r.index) + "," + detail::csv_escape(r.truth);
      for (double v : r.observed) out += "," + format_double(v);
      if (h != stats.end()) {
        const double hv = r.observed[static_cast<std::size_t>(h - stats.begin())];
        out += hv > 0 ? "," + format_double(std::log(hv)) + ",0" : "," + format_double(hv) + ",1";
      }
      out += "\n";
    }
    emit("observed.csv", out);
  }

  // DIC reports
  {
    std::string out = "replicate,truth,candidate,variant,dBar,dHat,pD,dic,aggregation,n,m,epsilon,accepted,tolerance,warnings\n";
    json reports = json::array();
    for (const auto& r : result.replicates) {
      for (const auto& c : r.candidates) {
        for (const auto& d : c.dic) {
          out += std::to_string(r.index) + "," + detail::csv_escape(r.truth) + "," + detail::csv_escape(c.label) + "," +
                 std::to_string(d.variant) + "," + format_double(d.d_bar) + "," + format_double(d.d_hat) + "," +
                 format_double(d.p_d) + "," + format_double(d.dic) + "," + aggregation_name(d.aggregation) + "," +
                 std::to_string(d.n) + "," + std::to_string(d.m) + "," + format_double(d.epsilon) + "," +
                 std::to_string(c.accepted) + "," + format_double(c.tolerance) + "," +
                 detail::csv_escape(detail::join_warnings(d.warnings)) + "\n";
          json jd = io::to_json(d);
          jd["replicate"] = r.index;
          jd["truth"] = r.truth;
          jd["candidate"] = c.label;
          reports.push_back(jd);
        }
      }
    }
    emit("dic.csv", out);
    emit("dic_reports.json", reports.dump(2) + "\n");
    emit("dic_summary.csv", dic_summary_csv(result));
  }

  // model probabilities
  if (result.labels.size() > 1 && !cfg.probability_methods.empty()) {
    json all = json::array();
    std::string out = "replicate,truth,method,model,prob,count\n";
    for (const auto& r : result.replicates) {
      for (const auto& mp : r.probabilities) {
        json jm = io::to_json(mp);
        jm["replicate"] = r.index;
        jm["truth"] = r.truth;
        all.push_back(jm);
        for (std::size_t k = 0; k < mp.labels.size(); ++k) {
          out += std::to_string(r.index) + "," + detail::csv_escape(r.truth) + "," + method_name(mp.method) + "," +
                 detail::csv_escape(mp.labels[k]) + "," + format_double(mp.probs[k]) + "," +
                 std::to_string(mp.counts[k]) + "\n";
        }
      }
    }
    emit("model_probs.json", all.dump(2) + "\n");
    emit("model_probs.csv", out);
  }

  // predictive checks
  if (cfg.predictive_n > 0) {
    std::string out = "replicate,truth,candidate,stat,observed,quantile,tail_prob\n";
    for (const auto& r : result.replicates) {
      for (const auto& c : r.candidates) {
        if (!c.check) continue;
        for (const auto& e : c.check->entries) {
          out += std::to_string(r.index) + "," + detail::csv_escape(r.truth) + "," + detail::csv_escape(c.label) + "," +
                 e.stat + "," + format_double(e.observed) + "," + format_double(e.quantile) + "," +
                 format_double(e.tail_prob) + "\n";
        }
      }
    }
    emit("predcheck.csv", out);
    if (result.replicates.size() == 1) {
      for (const auto& c : result.replicates.front().candidates) {
        if (c.check) emit("predictive_draws_" + c.label + ".csv", io::predictive_draws_csv(*c.check, stats));
      }
    }
  }

  // per-replicate winners and selection frequencies
  {
    std::string per = "replicate,truth,variant,selected,tie\n";
    std::string freq = "variant,truth,candidate,frequency,ties,replicates\n";
    for (int v : cfg.dic_variants) {
      for (const auto& r : result.replicates) {
        const auto sel = select_min(r.dic_values(v));
        std::string winners;
        for (std::size_t c = 0; c < sel.share.size(); ++c) {
          if (sel.share[c] > 0) winners += (winners.empty() ? "" : ";") + result.labels[c];
        }
        per += std::to_string(r.index) + "," + detail::csv_escape(r.truth) + "," + std::to_string(v) + "," +
               detail::csv_escape(winners) + "," + (sel.tie ? "1" : "0") + "\n";
      }
      const auto s = emit_selection_summary(result, v);
      for (std::size_t t = 0; t < s.truths.size(); ++t) {
        for (std::size_t c = 0; c < s.candidates.size(); ++c) {
          freq += std::to_string(v) + "," + detail::csv_escape(s.truths[t]) + "," + detail::csv_escape(s.candidates[c]) +
                  "," + format_double(s.frequency[t][c]) + "," + std::to_string(s.ties[t]) + "," +
                  std::to_string(s.replicates[t]) + "\n";
        }
      }
    }
    emit("selected.csv", per);
    emit("selection.csv", freq);
  }

  if (cfg.write_posteriors) {
    for (const auto& r : result.replicates) {
      for (const auto& c : r.candidates) {
        if (c.posterior) emit("posterior_" + std::to_string(r.index) + "_" + c.label + ".csv", io::posterior_csv(*c.posterior));
      }
    }
  }
  if (cfg.write_table && result.table) {
    io::write_table(stage.file("reference_table.csv"), *result.table, result.specs);
    files.push_back("reference_table.csv");
    files.push_back("reference_table.csv.json");
  }

  for (const auto& [name, content] : extra) emit(name, content);

  json manifest;
  manifest["format"] = "abcdic-bundle";
  manifest["schema_version"] = experiment_schema_version;
  manifest["config"] = to_json(cfg);
  manifest["models"] = result.labels;
  manifest["statNames"] = stats;
  manifest["truths"] = result.truths;
  manifest["replicates"] = result.replicates.size();
  manifest["tableRootSeed"] = result.table ? result.table->root_seed() : 0;
  manifest["commonRandomNumbers"] = true;
  manifest["files"] = files;
  io::write_atomic(stage.file("manifest.json"), manifest.dump(2) + "\n");
  stage.commit();
}

}  // namespace abcdic
