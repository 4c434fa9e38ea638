#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "catch_amalgamated.hpp"

#include "abcdic/coalescent.hpp"
#include "abcdic/io.hpp"
#include "abcdic/toy_models.hpp"

using namespace abcdic;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("abcdic_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace

TEST_CASE("doubles round-trip through their text form") {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 100000; ++i) {
    double x;
    const std::uint64_t bits = gen();
    std::memcpy(&x, &bits, sizeof x);
    if (!std::isfinite(x)) continue;
    REQUIRE(io::parse_double(io::format_double(x)) == x);
  }
  CHECK(io::parse_double("1.5") == 1.5);
  CHECK_FALSE(io::parse_double("1.5x").has_value());
  CHECK_FALSE(io::parse_double("").has_value());
}

TEST_CASE("a 20000-row table round-trips losslessly") {
  const std::vector<ModelSpec> models{toy::gaussian_model(), toy::laplace_model()};
  const ReferenceTable t = build_reference_table(models, 10000, 99);
  const fs::path dir = scratch_dir("roundtrip");
  io::write_table(dir / "table.csv", t, models);
  const ReferenceTable back = io::read_table(dir / "table.csv");
  CHECK(back == t);
  CHECK(back.root_seed() == 99);
  CHECK(*back.models()[0].transforms == *t.models()[0].transforms);
  fs::remove_all(dir);
}

TEST_CASE("tables without a sidecar keep their rows and statistics") {
  const std::vector<ModelSpec> models{coal::constant_model(), coal::expansion_model()};
  const ReferenceTable t = build_reference_table(models, 5, 3);
  const ReferenceTable back = io::parse_table(io::table_csv(t));
  CHECK(back.rows() == t.rows());
  CHECK(back.stat_names() == t.stat_names());
  CHECK(back.models()[1].label == "expansion");
}

TEST_CASE("column order in the file does not matter") {
  const std::vector<ModelSpec> models{toy::gaussian_model(), toy::laplace_model()};
  const ReferenceTable t = build_reference_table(models, 50, 5);
  const io::json side = io::table_sidecar(t, models);
  const auto lines = lines_of(io::table_csv(t));
  // reverse every field after the first two
  std::vector<std::string> swapped;
  for (const auto& line : lines) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    if (line.back() == ',') f.emplace_back();
    std::reverse(f.begin() + 2, f.end());
    std::string out;
    for (std::size_t k = 0; k < f.size(); ++k) out += (k ? "," : "") + f[k];
    swapped.push_back(out);
  }
  CHECK(io::parse_table(join_lines(swapped), &side) == t);
}

TEST_CASE("shuffled rows are restored to index order") {
  const std::vector<ModelSpec> models{toy::gaussian_model(), toy::laplace_model()};
  const ReferenceTable t = build_reference_table(models, 30, 6);
  const io::json side = io::table_sidecar(t, models);
  auto lines = lines_of(io::table_csv(t));
  std::mt19937_64 gen(2);
  std::shuffle(lines.begin() + 1, lines.end(), gen);
  CHECK(io::parse_table(join_lines(lines), &side) == t);
}

TEST_CASE("table read errors") {
  const std::vector<ModelSpec> models{toy::gaussian_model()};
  const ReferenceTable t = build_reference_table(models, 4, 1);
  const std::string csv = io::table_csv(t);

  SECTION("header only") {
    const std::string header = lines_of(csv).front() + "\n";
    CHECK_THROWS_WITH(io::parse_table(header), Catch::Matchers::ContainsSubstring("empty table"));
  }
  SECTION("truncated last line") {
    try {
      io::parse_table(csv.substr(0, csv.size() - 3));
      FAIL("expected an error");
    } catch (const TableIoError& e) {
      CHECK(e.line() == 5);
      CHECK(e.kind() == ErrorKind::table_io);
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }
  SECTION("missing field") {
    auto lines = lines_of(csv);
    lines[2] = lines[2].substr(0, lines[2].rfind(','));
    try {
      io::parse_table(join_lines(lines));
      FAIL("expected an error");
    } catch (const TableIoError& e) {
      CHECK(e.line() == 3);
    }
  }
  SECTION("bad number") {
    auto lines = lines_of(csv);
    lines[1] += "x";
    CHECK_THROWS_AS(io::parse_table(join_lines(lines)), TableIoError);
  }
  SECTION("duplicate row index") {
    auto lines = lines_of(csv);
    lines.push_back(lines[1]);
    CHECK_THROWS_WITH(io::parse_table(join_lines(lines)), Catch::Matchers::ContainsSubstring("duplicate row"));
  }
  SECTION("unknown column") {
    auto lines = lines_of(csv);
    lines[0] += ",extra";
    for (std::size_t i = 1; i < lines.size(); ++i) lines[i] += ",1";
    CHECK_THROWS_AS(io::parse_table(join_lines(lines)), TableIoError);
  }
  SECTION("missing file") { CHECK_THROWS_AS(io::read_table("/nonexistent/table.csv"), TableIoError); }
  SECTION("empty tables are not written") {
    const ReferenceTable empty(t.models(), t.stat_names_ptr(), 0, {});
    CHECK_THROWS_AS(io::table_csv(empty), Error);
  }
}

TEST_CASE("priors round-trip through JSON") {
  for (const PriorSpec& p : {PriorSpec(Uniform(0, 15)), PriorSpec(Log10Uniform(0, 1.5)), PriorSpec(Gaussian(2, 10)),
                             PriorSpec(Exponential(1)), PriorSpec(InverseExponential(1)), PriorSpec(Gamma(2.5, 0.5)),
                             PriorSpec(InverseGamma(11, 92.885))}) {
    const io::json j = io::to_json(p);
    const PriorSpec back = io::prior_from_json(io::json::parse(j.dump()));
    CHECK(io::to_json(back) == j);
    CHECK(kind_name(back) == kind_name(p));
  }
  CHECK_THROWS_AS(io::prior_from_json(io::json::parse(R"({"kind":"uniform","a":0})")), Error);
  CHECK_THROWS_AS(io::prior_from_json(io::json::parse(R"({"kind":"cauchy"})")), Error);
}

TEST_CASE("transforms round-trip through JSON") {
  for (const Transform& t : {Transform::identity(), Transform::log(), Transform::logit(0.0, 15.0)}) {
    CHECK(io::transform_from_json(io::json::parse(io::to_json(t).dump())) == t);
  }
}

TEST_CASE("DIC reports round-trip through JSON") {
  DicReport r = DicReport::make(2, 3.25, 4.5, Aggregation::median, 200, 100, 0.123456789012345678, {});
  const DicReport back = io::dic_report_from_json(io::json::parse(io::to_json(r).dump()));
  CHECK(back.variant == 2);
  CHECK(back.d_bar == r.d_bar);
  CHECK(back.d_hat == r.d_hat);
  CHECK(back.p_d == r.p_d);
  CHECK(back.dic == r.dic);
  CHECK(back.aggregation == Aggregation::median);
  CHECK(back.n == 200);
  CHECK(back.m == 100);
  CHECK(back.epsilon == r.epsilon);
  CHECK(back.warnings == r.warnings);
}

TEST_CASE("infinite Bayes factors are written as null with a flag") {
  ModelProbabilities mp;
  mp.labels = {"a", "b"};
  mp.probs = {1.0, 0.0};
  mp.counts = {10, 0};
  mp.bayes_factors = {{1.0, std::numeric_limits<double>::infinity()}, {0.0, 1.0}};
  mp.infinite_bayes_factor = true;
  const io::json j = io::json::parse(io::to_json(mp).dump());
  CHECK(j["bayesFactors"][0][1].is_null());
  CHECK(j["infiniteBayesFactor"] == true);
}

TEST_CASE("staged directories appear only on commit") {
  const fs::path base = scratch_dir("staged");
  const fs::path target = base / "out";
  {
    io::StagedDirectory stage(target);
    io::write_atomic(stage.file("a.txt"), "x\n");
    CHECK_FALSE(fs::exists(target));
  }
  CHECK_FALSE(fs::exists(target));
  {
    io::StagedDirectory stage(target);
    io::write_atomic(stage.file("a.txt"), "y\n");
    stage.commit();
  }
  CHECK(io::read_file(target / "a.txt") == "y\n");
  fs::remove_all(base);
}
