// Gaussian versus Laplace on one observation: posterior model probabilities
// favour Laplace while both DIC variants favour the Gaussian model.

#include <cstdio>

#include "abcdic/abcdic.hpp"

int main() {
  using namespace abcdic;
  const std::vector<ModelSpec> models{toy::gaussian_model(), toy::laplace_model()};
  const SummaryVector s0 = toy::observed_fixture();
  const ReferenceTable table = build_reference_table(models, 10000, 1);
  const Standardization scales = standardize(table);

  const ModelProbabilities count = model_probs_count(table, s0, 0.1, scales);
  const ModelProbabilities logit = model_probs_mnlogistic(table, s0, 0.1, scales);
  for (std::size_t k = 0; k < models.size(); ++k) {
    std::printf("P(%s): count %.3f, logistic %.3f\n", count.labels[k].c_str(), count.probs[k], logit.probs[k]);
  }

  for (std::size_t k = 0; k < models.size(); ++k) {
    const ModelSpec& m = models[k];
    const PosteriorSample sample = adjust_loclinear(reject(table, s0, 0.1, scales, m.label()), table, s0);
    const KernelConfig kernel(1.0, std::vector<double>(s0.size(), 1.0), false);
    const DicReport d1 = dic1(sample, m, 1000, kernel, Aggregation::mean, child_seed(2, k));
    const DicReport d2 = dic2(sample, m, 200, 200, kernel, Aggregation::mean, child_seed(3, k));
    std::printf("%-8s DIC1 %7.3f (pD %6.3f)  DIC2 %7.3f (pD %6.3f)\n", m.label().c_str(), d1.dic, d1.p_d, d2.dic,
                d2.p_d);
  }
  return 0;
}
