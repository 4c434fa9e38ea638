// abcdic command-line front end.
//
// Exit codes: 0 success, 1 usage or unexpected failure, 2 invalid argument,
// 3 config error, 4 unknown model, 5 table I/O error, 6 simulation error,
// 7 numerical failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "abcdic/abcdic.hpp"

namespace {

using namespace abcdic;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;
  std::string table;
  std::string model;
};

void add_common(CLI::App* cmd, Common& c, bool needs_table_option) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "root seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--threads", c.threads, "worker threads, 0 = all (ABCDIC_THREADS overrides)");
  if (needs_table_option) {
    cmd->add_option("--table", c.table, "reference table CSV to load instead of simulating");
    cmd->add_option("--model", c.model, "restrict to one candidate model label");
  }
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (!c.table.empty()) cfg.table_path = c.table;
  return cfg;
}

/// The single observation analysed by infer/dic/predcheck/modelprob: the
/// configured values or fixture, or replicate 0 of the first generator.
SummaryVector single_observation(const ExperimentConfig& cfg, const std::vector<ModelSpec>& specs) {
  const NamesPtr& names = specs.front().stat_names();
  if (cfg.observed_values) return SummaryVector(*cfg.observed_values, names);
  if (cfg.observed_fixture == "toy") {
    const SummaryVector fx = toy::observed_fixture();
    if (fx.names() != *names) fail(ErrorKind::config, "fixture 'toy' does not match the models' statistics");
    return SummaryVector(std::vector<double>(fx.values().begin(), fx.values().end()), names);
  }
  if (!cfg.observed_fixture.empty()) fail(ErrorKind::config, "unknown observed fixture '" + cfg.observed_fixture + "'");
  const auto& gen = cfg.generators.front();
  auto it = std::find_if(specs.begin(), specs.end(), [&](const ModelSpec& m) { return m.label() == gen.model; });
  const ModelSpec model = it != specs.end() ? *it : make_model(gen.model);
  const std::uint64_t rseed = child_seed(child_seed(cfg.seed, 1), 0);
  return model.simulate(detail::truth_params(model, gen.truth), child_seed(rseed, 0));
}

std::vector<std::size_t> selected_models(const std::vector<ModelSpec>& specs, const std::string& label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (label.empty() || specs[i].label() == label) out.push_back(i);
  }
  if (out.empty()) fail(ErrorKind::unknown_model, "no candidate model labelled '" + label + "'");
  return out;
}

int cmd_simulate(const Common& c) {
  ExperimentConfig cfg = load(c);
  const auto specs = make_models(cfg);
  const unsigned threads = resolve_threads(cfg.threads);
  const ReferenceTable table = build_reference_table(specs, cfg.simulations_per_model, child_seed(cfg.seed, 0), threads);
  io::StagedDirectory stage(c.out);
  io::write_table(stage.file("reference_table.csv"), table, specs);
  stage.commit();
  std::printf("wrote %zu rows to %s\n", table.size(), (fs::path(c.out) / "reference_table.csv").string().c_str());
  return 0;
}

/// Shared body of infer, dic, predcheck: per selected model, reject,
/// adjust and emit the requested artefacts.
int cmd_per_model(const Common& c, bool want_dic, bool want_check) {
  ExperimentConfig cfg = load(c);
  const auto specs = make_models(cfg);
  const unsigned threads = resolve_threads(cfg.threads);
  const ReferenceTable table = obtain_table(cfg, specs, threads);
  const SummaryVector s0 = single_observation(cfg, specs);
  const Standardization std_ = standardize(table);
  const std::uint64_t rseed = child_seed(child_seed(cfg.seed, 1), 0);

  io::StagedDirectory stage(c.out);
  io::json reports = io::json::array();
  std::string checks = "candidate,stat,observed,quantile,tail_prob\n";
  for (std::size_t idx : selected_models(specs, c.model)) {
    const ModelSpec& model = specs[idx];
    const std::uint64_t cseed = child_seed(rseed, 1 + idx);
    PosteriorSample sample = reject(table, s0, cfg.rate, std_, model.label());
    if (cfg.adjust) sample = adjust_loclinear(sample, table, s0);
    io::write_atomic(stage.file("posterior_" + model.label() + ".csv"), io::posterior_csv(sample));
    if (want_dic) {
      const KernelConfig kernel = detail::make_kernel(cfg.kernel, sample);
      for (int v : cfg.dic_variants) {
        const DicReport r = v == 1 ? dic1(sample, model, cfg.dic_n1, kernel, cfg.aggregation, child_seed(cseed, 1), threads)
                                   : dic2(sample, model, cfg.dic_m, cfg.dic_n, kernel, cfg.aggregation,
                                          child_seed(cseed, 2), threads);
        io::json j = io::to_json(r);
        j["candidate"] = model.label();
        reports.push_back(j);
        std::printf("%s DIC%d = %.6g (dBar %.6g, pD %.6g)\n", model.label().c_str(), v, r.dic, r.d_bar, r.p_d);
      }
    }
    if (want_check) {
      const std::size_t n = cfg.predictive_n > 0 ? cfg.predictive_n : 1000;
      const PredictiveCheck pc = predictive_check(sample, model, n, child_seed(cseed, 0), threads);
      for (const auto& e : pc.entries) {
        checks += model.label() + "," + e.stat + "," + io::format_double(e.observed) + "," +
                  io::format_double(e.quantile) + "," + io::format_double(e.tail_prob) + "\n";
      }
      io::write_atomic(stage.file("predictive_draws_" + model.label() + ".csv"),
                       io::predictive_draws_csv(pc, *model.stat_names()));
    }
  }
  if (want_dic) io::write_atomic(stage.file("dic_reports.json"), reports.dump(2) + "\n");
  if (want_check) io::write_atomic(stage.file("predcheck.csv"), checks);
  io::write_atomic(stage.file("observed.csv"), io::summary_csv(s0));
  stage.commit();
  return 0;
}

int cmd_modelprob(const Common& c) {
  ExperimentConfig cfg = load(c);
  const auto specs = make_models(cfg);
  if (specs.size() < 2) fail(ErrorKind::config, "modelprob needs at least two models");
  const unsigned threads = resolve_threads(cfg.threads);
  const ReferenceTable table = obtain_table(cfg, specs, threads);
  const SummaryVector s0 = single_observation(cfg, specs);
  const Standardization std_ = standardize(table);
  io::json all = io::json::array();
  for (auto method : cfg.probability_methods) {
    const ModelProbabilities mp = method == ModelProbabilities::Method::count
                                      ? model_probs_count(table, s0, cfg.rate, std_)
                                      : model_probs_mnlogistic(table, s0, cfg.rate, std_);
    for (std::size_t k = 0; k < mp.labels.size(); ++k) {
      std::printf("%s P(%s) = %.6f\n", method_name(mp.method), mp.labels[k].c_str(), mp.probs[k]);
    }
    all.push_back(io::to_json(mp));
  }
  io::StagedDirectory stage(c.out);
  io::write_atomic(stage.file("model_probs.json"), all.dump(2) + "\n");
  stage.commit();
  return 0;
}

void print_selection(const ExperimentResult& res) {
  for (int v : res.config.dic_variants) {
    const auto s = emit_selection_summary(res, v);
    std::printf("DIC%d selection frequencies (rows: truth, columns:", v);
    for (const auto& c : s.candidates) std::printf(" %s", c.c_str());
    std::printf(")\n");
    for (std::size_t t = 0; t < s.truths.size(); ++t) {
      std::printf("  %-16s", s.truths[t].c_str());
      for (double f : s.frequency[t]) std::printf(" %6.3f", f);
      std::printf("  (%zu replicates, %zu ties)\n", s.replicates[t], s.ties[t]);
    }
  }
}

int cmd_experiment(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const ExperimentResult res = run_experiment(cfg);
  write_bundle(res, c.out);
  print_selection(res);
  std::printf("bundle written to %s\n", c.out.c_str());
  return 0;
}

/// Models differing only in priors, each scored by DIC on one observation.
int cmd_scan(const Common& c) {
  ExperimentConfig cfg = load(c);
  cfg.probability_methods.clear();
  if (!cfg.generators.empty()) {
    std::size_t total = 0;
    for (const auto& g : cfg.generators) total += g.replicates;
    if (total != 1) fail(ErrorKind::config, "scan analyses a single observation");
  }
  const ExperimentResult res = run_experiment(cfg);
  std::string scan = "candidate,variant,dBar,pD,dic\n";
  for (const auto& cand : res.replicates.front().candidates) {
    for (const auto& d : cand.dic) {
      scan += cand.label + "," + std::to_string(d.variant) + "," + io::format_double(d.d_bar) + "," +
              io::format_double(d.p_d) + "," + io::format_double(d.dic) + "\n";
      std::printf("%-20s DIC%d dBar %10.4f  DIC %10.4f\n", cand.label.c_str(), d.variant, d.d_bar, d.dic);
    }
  }
  write_bundle(res, c.out, {{"scan.csv", scan}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::setlocale(LC_ALL, "C");
  CLI::App app{"Approximate Bayesian computation with deviance information criteria"};
  app.require_subcommand(1);
  Common simulate, infer, dic, predcheck, modelprob, experiment, scan;
  add_common(app.add_subcommand("simulate", "build a reference table from the config's models"), simulate, false);
  add_common(app.add_subcommand("infer", "rejection and regression adjustment per model"), infer, true);
  add_common(app.add_subcommand("dic", "DIC_1 / DIC_2 per model"), dic, true);
  add_common(app.add_subcommand("predcheck", "posterior predictive checks per model"), predcheck, true);
  add_common(app.add_subcommand("modelprob", "approximate posterior model probabilities"), modelprob, true);
  add_common(app.add_subcommand("experiment", "run a full study and write a report bundle"), experiment, true);
  add_common(app.add_subcommand("scan", "DIC scan over models differing only in priors"), scan, true);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    if (app.got_subcommand("simulate")) return cmd_simulate(simulate);
    if (app.got_subcommand("infer")) return cmd_per_model(infer, false, false);
    if (app.got_subcommand("dic")) return cmd_per_model(dic, true, false);
    if (app.got_subcommand("predcheck")) return cmd_per_model(predcheck, false, true);
    if (app.got_subcommand("modelprob")) return cmd_modelprob(modelprob);
    if (app.got_subcommand("experiment")) return cmd_experiment(experiment);
    if (app.got_subcommand("scan")) return cmd_scan(scan);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
