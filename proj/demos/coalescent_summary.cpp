// Summary statistics of one simulated data set under each demographic
// scenario: 100 haplotypes at 20 loci with theta = 3.

#include <cstdio>

#include "abcdic/coalescent.hpp"

int main() {
  using namespace abcdic::coal;
  const SampleConfig sample{100, 0};
  const struct {
    const char* name;
    Demography demography;
  } scenarios[] = {
      {"constant", Demography::constant()},
      {"bottleneck", Demography::bottleneck(0.2, 0.25)},
      {"expansion", Demography::exponential_growth(2.0)},
  };
  std::printf("%-12s %8s %8s %8s\n", "scenario", "pi", "tajD", "fwH");
  for (const auto& s : scenarios) {
    const abcdic::SummaryVector v = simulate_loci(s.demography, sample, 3.0, 20, 42);
    std::printf("%-12s %8.3f %8.3f %8.3f\n", s.name, v[0], v[1], v[2]);
  }
  const abcdic::SummaryVector im =
      simulate_loci(Demography::isolation_migration(0.7, 1.0, 1.0, 40.0, 30.0), {100, 100}, 4.0, 100, 42);
  std::printf("isolation with migration: pi %.3f, tajD %.3f, fwH %.3f, fst %.3f\n", im[0], im[1], im[2], im[3]);
  return 0;
}
