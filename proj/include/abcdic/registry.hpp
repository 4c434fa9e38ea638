#pragma once

// Named model fixtures: toy.gaussian, toy.laplace, coal.constant,
// coal.bottleneck, coal.expansion, coal.isolation, coal.im_asym, coal.im_full.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abcdic/coalescent.hpp"
#include "abcdic/core.hpp"
#include "abcdic/toy_models.hpp"

namespace abcdic {

/// A registered model name plus optional label, prior overrides (by
/// parameter name) and locus settings for coalescent models.
struct ModelRequest {
  std::string name;
  std::string label;  // defaults to the name
  std::map<std::string, PriorSpec> priors;
  std::optional<coal::LocusSettings> settings;
};

inline const std::vector<std::string>& registered_models() {
  static const std::vector<std::string> names{"toy.gaussian",    "toy.laplace",    "coal.constant",
                                              "coal.bottleneck", "coal.expansion", "coal.isolation",
                                              "coal.im_asym",    "coal.im_full"};
  return names;
}

/// Parameter names of a registered model, in order.
inline std::vector<std::string> registered_params(const std::string& name) {
  if (name == "toy.gaussian") return {"mu", "sigma2"};
  if (name == "toy.laplace") return {"lambda"};
  if (name == "coal.constant") return {"theta"};
  if (name == "coal.bottleneck") return {"theta", "t", "severity"};
  if (name == "coal.expansion") return {"theta", "alpha"};
  if (name == "coal.isolation") return {"theta", "t_split", "nu1", "nu2"};
  if (name == "coal.im_asym") return {"theta", "t_split", "nu1", "nu2", "M1"};
  if (name == "coal.im_full") return {"theta", "t_split", "nu1", "nu2", "M1", "M2"};
  fail(ErrorKind::unknown_model, "unknown model '" + name + "'");
}

inline ModelSpec make_model(const ModelRequest& req) {
  const auto params = registered_params(req.name);
  for (const auto& [param, prior] : req.priors) {
    if (std::find(params.begin(), params.end(), param) == params.end()) {
      fail(ErrorKind::config, "model '" + req.name + "' has no parameter '" + param + "'");
    }
  }
  auto prior = [&](const std::string& param, PriorSpec fallback) {
    auto it = req.priors.find(param);
    return it == req.priors.end() ? fallback : it->second;
  };
  const std::string label = req.label.empty() ? req.name : req.label;
  const bool toy = req.name.starts_with("toy.");
  if (toy && req.settings) fail(ErrorKind::config, "model '" + req.name + "' takes no locus settings");

  if (req.name == "toy.gaussian") {
    if (req.priors.contains("sigma2")) {
      fail(ErrorKind::config, "toy.gaussian: the prior is placed on sigma; override 'sigma2' is not supported");
    }
    return toy::gaussian_model(label, prior("mu", Gaussian(2.0, 10.0)));
  }
  if (req.name == "toy.laplace") return toy::laplace_model(label, prior("lambda", Exponential(1.0)));

  const PriorSpec theta = prior("theta", Uniform(0, 15));
  if (req.name == "coal.constant") {
    return coal::constant_model(label, req.settings.value_or(coal::demographic_settings()), theta);
  }
  if (req.name == "coal.bottleneck") {
    return coal::bottleneck_model(label, req.settings.value_or(coal::demographic_settings()), theta,
                                  prior("t", Uniform(0, 1)), prior("severity", Log10Uniform(0, 1.5)));
  }
  if (req.name == "coal.expansion") {
    return coal::expansion_model(label, req.settings.value_or(coal::demographic_settings()), theta,
                                 prior("alpha", Log10Uniform(0, 1.5)));
  }
  const int rates = req.name == "coal.isolation" ? 0 : req.name == "coal.im_asym" ? 1 : 2;
  if (req.priors.contains("nu2") && !(req.priors.contains("nu1"))) {
    fail(ErrorKind::config, "model '" + req.name + "': nu1 and nu2 share one prior; override 'nu1'");
  }
  if (req.priors.contains("M2") && !(req.priors.contains("M1"))) {
    fail(ErrorKind::config, "model '" + req.name + "': M1 and M2 share one prior; override 'M1'");
  }
  return coal::structured_model(label, rates, req.settings.value_or(coal::structured_settings()), theta,
                                prior("t_split", Uniform(0, 1)), prior("nu1", Uniform(0, 3)),
                                prior("M1", Uniform(0, 100)));
}

inline ModelSpec make_model(const std::string& name) { return make_model(ModelRequest{name, {}, {}, {}}); }

}  // namespace abcdic
