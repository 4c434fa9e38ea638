#pragma once

// Serialization: reference-table CSV with a JSON sidecar, JSON for priors,
// DIC reports and model probabilities, CSV for posterior samples and
// predictive checks.  Numbers are written locale-independently with 17
// significant digits; files are written to a temporary name and renamed.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <vector>

#include "json.hpp"

#include "abcdic/abc.hpp"
#include "abcdic/core.hpp"
#include "abcdic/dic.hpp"

namespace abcdic::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

/// Strict decimal parse; the whole field must be consumed.
inline std::optional<double> parse_double(std::string_view text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
  return v;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::table_io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline fs::path temp_sibling(const fs::path& target) {
  static std::atomic<unsigned> counter{0};
  const fs::path parent = target.parent_path().empty() ? fs::path(".") : target.parent_path();
  return parent / ("." + target.filename().string() + ".tmp-" + std::to_string(::getpid()) + "-" +
                   std::to_string(counter.fetch_add(1)));
}

}  // namespace detail

/// Writes `content` to a temporary sibling of `path`, then renames it over `path`.
inline void write_atomic(const fs::path& path, std::string_view content) {
  const fs::path tmp = detail::temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::table_io, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      fail(ErrorKind::table_io, "short write to '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::table_io, "cannot rename into '" + path.string() + "'");
  }
}

/// Output directory built under a temporary name and promoted by rename on
/// commit(); an uncommitted staging directory is removed on destruction.
class StagedDirectory {
 public:
  explicit StagedDirectory(fs::path target) : target_(std::move(target)), staging_(detail::temp_sibling(target_)) {
    if (!target_.parent_path().empty()) fs::create_directories(target_.parent_path());
    fs::create_directories(staging_);
  }
  StagedDirectory(const StagedDirectory&) = delete;
  StagedDirectory& operator=(const StagedDirectory&) = delete;
  ~StagedDirectory() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  const fs::path& path() const noexcept { return staging_; }
  fs::path file(const std::string& name) const { return staging_ / name; }

  /// Replaces any existing target directory.
  void commit() {
    std::error_code ec;
    if (fs::exists(target_)) fs::remove_all(target_, ec);
    fs::rename(staging_, target_, ec);
    if (ec) fail(ErrorKind::table_io, "cannot promote output to '" + target_.string() + "': " + ec.message());
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

// ---------------------------------------------------------------- priors

inline json to_json(const PriorSpec& prior) {
  json j;
  j["kind"] = std::string(kind_name(prior));
  std::visit(overloaded{
                 [&](const Uniform& p) { j["a"] = p.a, j["b"] = p.b; },
                 [&](const Log10Uniform& p) { j["a"] = p.a, j["b"] = p.b; },
                 [&](const Gaussian& p) { j["mean"] = p.mean, j["sd"] = p.sd; },
                 [&](const Exponential& p) { j["rate"] = p.rate; },
                 [&](const InverseExponential& p) { j["rate"] = p.rate; },
                 [&](const Gamma& p) { j["shape"] = p.shape, j["rate"] = p.rate; },
                 [&](const InverseGamma& p) { j["shape"] = p.shape, j["rate"] = p.rate; },
             },
             prior);
  return j;
}

namespace detail {

inline double number_field(const json& j, const char* key, const char* where) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_number()) {
    fail(ErrorKind::config, std::string(where) + ": missing numeric field '" + key + "'");
  }
  return j.at(key).get<double>();
}

inline void only_fields(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      fail(ErrorKind::config, where + ": unknown field '" + key + "'");
    }
  }
}

}  // namespace detail

inline PriorSpec prior_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    fail(ErrorKind::config, "prior: expected an object with a string 'kind'");
  }
  const std::string kind = j.at("kind").get<std::string>();
  const std::string where = "prior " + kind;
  auto num = [&](const char* key) { return detail::number_field(j, key, where.c_str()); };
  try {
    if (kind == "Uniform" || kind == "Log10Uniform") {
      detail::only_fields(j, {"kind", "a", "b"}, where);
      return kind == "Uniform" ? PriorSpec(Uniform(num("a"), num("b"))) : PriorSpec(Log10Uniform(num("a"), num("b")));
    }
    if (kind == "Gaussian") {
      detail::only_fields(j, {"kind", "mean", "sd"}, where);
      return Gaussian(num("mean"), num("sd"));
    }
    if (kind == "Exponential" || kind == "InverseExponential") {
      detail::only_fields(j, {"kind", "rate"}, where);
      return kind == "Exponential" ? PriorSpec(Exponential(num("rate"))) : PriorSpec(InverseExponential(num("rate")));
    }
    if (kind == "Gamma" || kind == "InverseGamma") {
      detail::only_fields(j, {"kind", "shape", "rate"}, where);
      return kind == "Gamma" ? PriorSpec(Gamma(num("shape"), num("rate")))
                             : PriorSpec(InverseGamma(num("shape"), num("rate")));
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    fail(ErrorKind::config, where + ": " + e.what());
  }
  fail(ErrorKind::config, "prior: unknown kind '" + kind + "'");
}

// ------------------------------------------------------------ transforms

inline json to_json(const Transform& t) {
  switch (t.kind) {
    case Transform::Kind::identity: return json{{"kind", "identity"}};
    case Transform::Kind::log: return json{{"kind", "log"}};
    case Transform::Kind::logit: return json{{"kind", "logit"}, {"lo", t.lo}, {"hi", t.hi}};
  }
  return json{};
}

inline Transform transform_from_json(const json& j) {
  const std::string kind = j.is_object() && j.contains("kind") ? j.at("kind").get<std::string>() : "";
  if (kind == "identity") return Transform::identity();
  if (kind == "log") return Transform::log();
  if (kind == "logit") return Transform::logit(detail::number_field(j, "lo", "transform"), detail::number_field(j, "hi", "transform"));
  fail(ErrorKind::table_io, "unknown transform '" + kind + "'");
}

// ------------------------------------------------------- reference table

inline std::string table_csv(const ReferenceTable& table) {
  if (table.size() == 0) fail(ErrorKind::table_io, "empty table");
  // union of parameter names in model order
  std::vector<std::string> params;
  for (const auto& m : table.models()) {
    for (const auto& p : *m.param_names) {
      if (std::find(params.begin(), params.end(), p) == params.end()) params.push_back(p);
    }
  }
  std::string out = "row,model";
  for (const auto& p : params) out += ",param:" + p;
  for (const auto& s : table.stat_names()) out += ",stat:" + s;
  out += '\n';
  std::vector<int> slot(params.size());
  for (const auto& r : table.rows()) {
    const auto& m = table.models()[r.model];
    std::fill(slot.begin(), slot.end(), -1);
    for (std::size_t k = 0; k < m.param_names->size(); ++k) {
      slot[static_cast<std::size_t>(std::find(params.begin(), params.end(), (*m.param_names)[k]) - params.begin())] =
          static_cast<int>(k);
    }
    out += std::to_string(r.index);
    out += ',';
    out += m.label;
    for (int k : slot) {
      out += ',';
      if (k >= 0) out += format_double(r.params[static_cast<std::size_t>(k)]);
    }
    for (double v : r.stats) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

/// Sidecar metadata: root seed, statistic names and per-model parameter
/// names and transforms (plus priors when the model specs are supplied).
inline json table_sidecar(const ReferenceTable& table, std::span<const ModelSpec> specs = {}) {
  json j;
  j["format"] = "abcdic-reference-table";
  j["version"] = 1;
  j["rootSeed"] = table.root_seed();
  j["statNames"] = table.stat_names();
  j["rows"] = table.size();
  json models = json::array();
  for (const auto& m : table.models()) {
    json jm;
    jm["label"] = m.label;
    jm["params"] = *m.param_names;
    json tr = json::array();
    for (const auto& t : *m.transforms) tr.push_back(to_json(t));
    jm["transforms"] = tr;
    for (const auto& spec : specs) {
      if (spec.label() != m.label) continue;
      json priors = json::object();
      for (const auto& p : spec.params()) {
        json pj = to_json(p.prior);
        if (p.power != 1.0) pj["power"] = p.power;
        priors[p.name] = pj;
      }
      jm["priors"] = priors;
    }
    models.push_back(jm);
  }
  j["models"] = models;
  return j;
}

inline fs::path sidecar_path(const fs::path& csv) { return fs::path(csv.string() + ".json"); }

inline void write_table(const fs::path& csv, const ReferenceTable& table, std::span<const ModelSpec> specs = {}) {
  write_atomic(csv, table_csv(table));
  write_atomic(sidecar_path(csv), table_sidecar(table, specs).dump(2) + "\n");
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

/// Parses a table from CSV text.  Columns are matched by header name, so
/// their order in the file is free.  Without a sidecar, models appear in
/// first-use order, their parameters are the non-empty cells of their first
/// row, transforms are identity and the root seed is 0.
inline ReferenceTable parse_table(std::string_view text, const json* sidecar = nullptr) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      throw TableIoError(lines.size() + 1, "truncated file: last line has no line terminator");
    }
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  if (lines.empty()) throw TableIoError(1, "empty table");

  const auto header = detail::split_fields(lines[0]);
  if (header.size() < 3 || header[0] != "row" || header[1] != "model") {
    throw TableIoError(1, "header must start with 'row,model'");
  }
  std::map<std::string, std::size_t, std::less<>> param_col, stat_col;
  std::vector<std::string> stat_order;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const std::string_view h = header[c];
    if (h.starts_with("param:") && h.size() > 6) {
      if (!param_col.emplace(std::string(h.substr(6)), c).second) throw TableIoError(1, "duplicate column '" + std::string(h) + "'");
    } else if (h.starts_with("stat:") && h.size() > 5) {
      if (!stat_col.emplace(std::string(h.substr(5)), c).second) throw TableIoError(1, "duplicate column '" + std::string(h) + "'");
      stat_order.emplace_back(h.substr(5));
    } else {
      throw TableIoError(1, "unexpected column '" + std::string(h) + "'");
    }
  }
  if (stat_col.empty()) throw TableIoError(1, "no statistic columns");
  if (lines.size() == 1) throw TableIoError(1, "empty table");

  std::vector<TableModel> models;
  std::uint64_t root_seed = 0;
  NamesPtr stat_names;
  if (sidecar) {
    try {
      root_seed = sidecar->at("rootSeed").get<std::uint64_t>();
      stat_names = make_names(sidecar->at("statNames").get<Names>());
      for (const auto& jm : sidecar->at("models")) {
        std::vector<Transform> tr;
        for (const auto& jt : jm.at("transforms")) tr.push_back(transform_from_json(jt));
        models.push_back({jm.at("label").get<std::string>(), make_names(jm.at("params").get<Names>()),
                          std::make_shared<const std::vector<Transform>>(std::move(tr))});
      }
    } catch (const json::exception& e) {
      throw TableIoError(0, std::string("malformed sidecar: ") + e.what());
    }
    Names sorted_file = stat_order, sorted_meta = *stat_names;
    std::sort(sorted_file.begin(), sorted_file.end());
    std::sort(sorted_meta.begin(), sorted_meta.end());
    if (sorted_file != sorted_meta) throw TableIoError(1, "statistic columns do not match the sidecar");
    for (const auto& m : models) {
      for (const auto& p : *m.param_names) {
        if (!param_col.contains(p)) throw TableIoError(1, "missing column 'param:" + p + "'");
      }
    }
  } else {
    stat_names = make_names(stat_order);
  }

  std::vector<TableRow> rows;
  rows.reserve(lines.size() - 1);
  std::vector<bool> seen;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const std::size_t line_no = l + 1;
    if (lines[l].empty() && l + 1 == lines.size()) break;
    const auto fields = detail::split_fields(lines[l]);
    if (fields.size() != header.size()) {
      throw TableIoError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                      std::to_string(fields.size()));
    }
    TableRow row;
    std::size_t index = 0;
    {
      const auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), index);
      if (res.ec != std::errc() || res.ptr != fields[0].data() + fields[0].size()) {
        throw TableIoError(line_no, "bad row index '" + std::string(fields[0]) + "'");
      }
    }
    row.index = index;
    const std::string label(fields[1]);
    auto it = std::find_if(models.begin(), models.end(), [&](const TableModel& m) { return m.label == label; });
    if (it == models.end()) {
      if (sidecar) throw TableIoError(line_no, "model '" + label + "' is not listed in the sidecar");
      Names names;
      for (const auto& [name, col] : param_col) {
        if (!fields[col].empty()) names.push_back(name);
      }
      std::sort(names.begin(), names.end(),
                [&](const std::string& a, const std::string& b) { return param_col.at(a) < param_col.at(b); });
      models.push_back({label, make_names(names),
                        std::make_shared<const std::vector<Transform>>(names.size(), Transform::identity())});
      it = models.end() - 1;
    }
    row.model = static_cast<std::size_t>(it - models.begin());
    auto number = [&](std::size_t col, const std::string& what) {
      const auto v = parse_double(fields[col]);
      if (!v) throw TableIoError(line_no, "bad number '" + std::string(fields[col]) + "' in column " + what);
      return *v;
    };
    for (const auto& p : *it->param_names) row.params.push_back(number(param_col.at(p), "param:" + p));
    for (const auto& s : *stat_names) row.stats.push_back(number(stat_col.at(s), "stat:" + s));
    if (index >= seen.size()) seen.resize(index + 1, false);
    if (seen[index]) throw TableIoError(line_no, "duplicate row index " + std::to_string(index));
    seen[index] = true;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw TableIoError(1, "empty table");
  std::sort(rows.begin(), rows.end(), [](const TableRow& a, const TableRow& b) { return a.index < b.index; });
  try {
    return ReferenceTable(std::move(models), std::move(stat_names), root_seed, std::move(rows));
  } catch (const Error& e) {
    throw TableIoError(0, e.what());
  }
}

/// Reads `csv` and, when present, its sidecar `csv.json`.
inline ReferenceTable read_table(const fs::path& csv) {
  if (!fs::exists(csv)) throw TableIoError(0, "cannot open '" + csv.string() + "'");
  const std::string text = read_file(csv);
  const fs::path side = sidecar_path(csv);
  if (fs::exists(side)) {
    json meta;
    try {
      meta = json::parse(read_file(side));
    } catch (const json::exception& e) {
      throw TableIoError(0, "malformed sidecar '" + side.string() + "': " + e.what());
    }
    return parse_table(text, &meta);
  }
  return parse_table(text);
}

// ----------------------------------------------------------- reports

inline json nullable(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const ParamVector& p) {
  json j = json::object();
  for (std::size_t k = 0; k < p.size(); ++k) j[p.names()[k]] = p[k];
  return j;
}

inline json to_json(const DicReport& r) {
  json j;
  j["variant"] = r.variant;
  j["dBar"] = nullable(r.d_bar);
  j["dHat"] = nullable(r.d_hat);
  j["pD"] = nullable(r.p_d);
  j["dic"] = nullable(r.dic);
  j["aggregation"] = aggregation_name(r.aggregation);
  j["n"] = r.n;
  j["m"] = r.m;
  j["epsilon"] = r.epsilon;
  j["warnings"] = r.warnings;
  j["commonRandomNumbers"] = r.common_random_numbers;
  if (r.point_estimate.size() > 0) j["pointEstimate"] = to_json(r.point_estimate);
  return j;
}

inline DicReport dic_report_from_json(const json& j) {
  DicReport r;
  auto num = [&](const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  r.variant = j.at("variant").get<int>();
  r.d_bar = num("dBar");
  r.d_hat = num("dHat");
  r.p_d = num("pD");
  r.dic = num("dic");
  r.aggregation = j.at("aggregation").get<std::string>() == "median" ? Aggregation::median : Aggregation::mean;
  r.n = j.at("n").get<std::size_t>();
  r.m = j.at("m").get<std::size_t>();
  r.epsilon = j.at("epsilon").get<double>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.common_random_numbers = j.value("commonRandomNumbers", true);
  return r;
}

/// Infinite or undefined Bayes factors are written as null.
inline json to_json(const ModelProbabilities& mp) {
  json j;
  j["method"] = method_name(mp.method);
  j["labels"] = mp.labels;
  j["probs"] = mp.probs;
  j["counts"] = mp.counts;
  j["tolerance"] = mp.tolerance;
  json bf = json::array();
  for (const auto& row : mp.bayes_factors) {
    json r = json::array();
    for (double v : row) r.push_back(nullable(v));
    bf.push_back(r);
  }
  j["bayesFactors"] = bf;
  j["infiniteBayesFactor"] = mp.infinite_bayes_factor;
  return j;
}

inline std::string posterior_csv(const PosteriorSample& sample) {
  std::string out = "row,model";
  const bool single = sample.single_model() && !sample.rows.empty();
  const Names* names = single ? sample.meta().param_names.get() : nullptr;
  if (names) {
    for (const auto& p : *names) out += ",param_raw:" + p;
    for (const auto& p : *names) out += ",param_adj:" + p;
  }
  out += ",weight,distance\n";
  for (const auto& r : sample.rows) {
    out += std::to_string(r.row) + "," + sample.models[r.model].label;
    if (names) {
      for (double v : r.raw) out += "," + format_double(v);
      for (double v : r.adjusted) out += "," + format_double(v);
    }
    out += "," + format_double(r.weight) + "," + format_double(r.distance) + "\n";
  }
  return out;
}

inline std::string predictive_csv(const PredictiveCheck& pc) {
  std::string out = "stat,observed,quantile,tail_prob\n";
  for (const auto& e : pc.entries) {
    out += e.stat + "," + format_double(e.observed) + "," + format_double(e.quantile) + "," +
           format_double(e.tail_prob) + "\n";
  }
  return out;
}

/// Predictive draws as CSV (one simulated statistic vector per line), for plotting.
inline std::string predictive_draws_csv(const PredictiveCheck& pc, const Names& stats) {
  std::string out;
  for (std::size_t k = 0; k < stats.size(); ++k) out += (k ? "," : "") + stats[k];
  out += '\n';
  for (const auto& row : pc.draws) {
    for (std::size_t k = 0; k < row.size(); ++k) out += (k ? "," : "") + format_double(row[k]);
    out += '\n';
  }
  return out;
}

inline std::string summary_csv(const SummaryVector& s) {
  std::string out;
  for (std::size_t k = 0; k < s.size(); ++k) out += (k ? "," : "") + s.names()[k];
  out += '\n';
  for (std::size_t k = 0; k < s.size(); ++k) out += (k ? "," : "") + format_double(s[k]);
  out += '\n';
  return out;
}

}  // namespace abcdic::io
