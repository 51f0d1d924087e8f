#pragma once

// Ingestion of per-sample evaluation logs and emission of report artifacts.
//
// Input wire format (line-delimited JSON, UTF-8):
//   header, first line:  {"model_id": "...", "developer": "...?",
//                         "dataset": "...", "schema_version": "1"}
//   record lines:        {"qid": "...", "category": "...?", "gold": 0,
//                         "probs": [...]}  or  {... "loglikes": [...]}
// Exactly one of probs/loglikes per record. Log-likelihoods are converted by
// softmax (subtract max, exponentiate, normalize). Probability vectors with
// sum drift up to 1e-3 are renormalized. Malformed lines are collected into a
// rejects list; the load fails only when more than 1% of record lines reject.
//
// Report writers produce deterministic bytes: JSON with lexicographically
// ordered keys, CSV with comma separator, LF line ends and minimal quoting.
// Floats are serialized in shortest round-trip decimal form. Writes go
// through a temp file plus rename, so a failed run never leaves a truncated
// artifact behind.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "capa/analysis.hpp"
#include "capa/core.hpp"
#include "capa/errors.hpp"
#include "capa/metrics.hpp"
#include "capa/simulation.hpp"
#include "capa/stats.hpp"

namespace capa::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Formatting primitives
// ---------------------------------------------------------------------------

// Shortest decimal form that round-trips the exact double.
inline std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

// Temp file in the destination directory, then rename over the target.
inline void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path temp = path;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) fail(errc::io_error, "cannot open '" + temp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(errc::io_error, "short write to '" + temp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(temp, path, ec);
  if (ec) {
    std::filesystem::remove(temp);
    fail(errc::io_error, "cannot rename into '" + path.string() + "': " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

// Shift-invariant by construction: the max is subtracted before
// exponentiation.
inline std::vector<double> softmax(std::span<const double> loglikes) {
  double max_ll = -std::numeric_limits<double>::infinity();
  for (double ll : loglikes) max_ll = std::max(max_ll, ll);
  std::vector<double> probs(loglikes.size());
  KahanSum total;
  for (std::size_t i = 0; i < loglikes.size(); ++i) {
    probs[i] = std::exp(loglikes[i] - max_ll);
    total.add(probs[i]);
  }
  for (double& p : probs) p /= total.value();
  return probs;
}

// ---------------------------------------------------------------------------
// Prediction-log loading
// ---------------------------------------------------------------------------

struct RejectedLine {
  std::size_t line_number = 0;
  std::string reason;
};

struct LoadResult {
  PredictionSet set;
  std::string dataset;
  std::size_t n_record_lines = 0;
  std::vector<RejectedLine> rejects;
};

namespace detail {

inline bool parse_record(const json& j, SampleRecord& record, std::string& reason) {
  if (!j.is_object()) {
    reason = "record line is not an object";
    return false;
  }
  if (!j.contains("qid") || !j.at("qid").is_string()) {
    reason = "missing or non-string qid";
    return false;
  }
  record.qid = j.at("qid").get<std::string>();
  if (record.qid.empty()) {
    reason = "empty qid";
    return false;
  }
  record.category = j.value("category", std::string{});
  if (!j.contains("gold") || !j.at("gold").is_number_integer()) {
    reason = "missing or non-integer gold";
    return false;
  }
  record.gold_index = j.at("gold").get<int>();

  const bool has_probs = j.contains("probs");
  const bool has_loglikes = j.contains("loglikes");
  if (has_probs == has_loglikes) {
    reason = "need exactly one of probs/loglikes";
    return false;
  }
  const json& values = has_probs ? j.at("probs") : j.at("loglikes");
  if (!values.is_array() || values.size() < 2) {
    reason = "probs/loglikes must be an array of >= 2 numbers";
    return false;
  }
  std::vector<double> numbers;
  numbers.reserve(values.size());
  for (const json& v : values) {
    if (!v.is_number()) {
      reason = "non-numeric probability entry";
      return false;
    }
    numbers.push_back(v.get<double>());
  }
  for (double v : numbers) {
    if (!std::isfinite(v)) {
      reason = "non-finite probability entry";
      return false;
    }
  }

  if (has_loglikes) {
    record.probs = softmax(numbers);
  } else {
    for (double v : numbers) {
      if (v < 0.0 || v > 1.0) {
        reason = "probability outside [0,1]";
        return false;
      }
    }
    if (!normalize_probs(numbers)) {
      reason = "probability sum drifts by more than 1e-3";
      return false;
    }
    record.probs = std::move(numbers);
  }

  if (record.gold_index < 0 ||
      static_cast<std::size_t>(record.gold_index) >= record.probs.size()) {
    reason = "gold index out of range";
    return false;
  }
  return true;
}

}  // namespace detail

inline LoadResult load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open '" + path.string() + "'");

  LoadResult result;
  std::string line;
  std::size_t line_number = 0;
  bool header_seen = false;
  std::map<std::string, std::size_t> qids;

  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;

    if (!header_seen) {
      json header = json::parse(line, nullptr, false);
      if (header.is_discarded() || !header.is_object() || !header.contains("model_id") ||
          !header.contains("dataset")) {
        fail(errc::schema_error,
             "first line of '" + path.string() + "' is not a valid header record");
      }
      if (header.value("schema_version", std::string{}) != "1") {
        fail(errc::schema_error, "unsupported schema_version (want \"1\")");
      }
      result.set.model_id = header.at("model_id").get<std::string>();
      result.set.developer = header.value("developer", std::string{});
      result.dataset = header.at("dataset").get<std::string>();
      header_seen = true;
      continue;
    }

    ++result.n_record_lines;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      result.rejects.push_back({line_number, "unparseable JSON"});
      continue;
    }
    SampleRecord record;
    std::string reason;
    if (!detail::parse_record(j, record, reason)) {
      result.rejects.push_back({line_number, reason});
      continue;
    }
    if (!qids.emplace(record.qid, line_number).second) {
      result.rejects.push_back({line_number, "duplicate qid '" + record.qid + "'"});
      continue;
    }
    result.set.records.push_back(std::move(record));
  }

  if (!header_seen) fail(errc::schema_error, "'" + path.string() + "' has no header record");
  if (result.n_record_lines > 0 &&
      static_cast<double>(result.rejects.size()) >
          0.01 * static_cast<double>(result.n_record_lines)) {
    fail(errc::too_many_rejects,
         std::to_string(result.rejects.size()) + " of " + std::to_string(result.n_record_lines) +
             " record lines rejected in '" + path.string() + "'");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Score table loading
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline double parse_number(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    fail(errc::schema_error, std::string("cannot parse ") + what + " '" + text + "'");
  }
}

}  // namespace detail

// CSV with columns judge, model, score (plus optional accuracy, size).
inline analysis::ScoreTable load_score_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) fail(errc::schema_error, "empty score table");
  const std::vector<std::string> header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> columns;
  for (std::size_t i = 0; i < header.size(); ++i) columns[header[i]] = i;
  for (const char* required : {"judge", "model", "score"}) {
    if (!columns.count(required)) {
      fail(errc::schema_error, std::string("score table lacks column '") + required + "'");
    }
  }

  analysis::ScoreTable table;
  std::set<std::pair<std::string, std::string>> keys;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    auto field = [&](const char* name) -> const std::string& {
      return fields.at(columns.at(name));
    };
    analysis::ScoreRow row;
    row.judge = field("judge");
    row.model = field("model");
    row.score = detail::parse_number(field("score"), "score");
    if (row.score < 0.0 || row.score > 1.0) {
      fail(errc::range_error, "score " + format_double(row.score) + " outside [0,1] for (" +
                                  row.judge + ", " + row.model + ")");
    }
    if (columns.count("accuracy") && !fields.at(columns.at("accuracy")).empty()) {
      const double acc = detail::parse_number(field("accuracy"), "accuracy");
      if (acc < 0.0 || acc > 1.0) {
        fail(errc::range_error, "accuracy " + format_double(acc) + " outside [0,1]");
      }
      row.accuracy = acc;
    }
    if (columns.count("size") && !fields.at(columns.at("size")).empty()) {
      row.size = detail::parse_number(field("size"), "size");
    }
    if (!keys.emplace(row.judge, row.model).second) {
      fail(errc::duplicate_key, "duplicate (judge, model) row (" + row.judge + ", " + row.model + ")");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace capa::io

// ---------------------------------------------------------------------------
// JSON conversions (ADL hooks next to each type)
// ---------------------------------------------------------------------------

namespace capa {

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json{{"metric", r.metric_name},
                     {"value", r.value},
                     {"degenerate", r.degenerate},
                     {"note", r.note},
                     {"intermediates", r.intermediates}};
}

inline void from_json(const nlohmann::json& j, MetricReport& r) {
  j.at("metric").get_to(r.metric_name);
  j.at("value").get_to(r.value);
  j.at("degenerate").get_to(r.degenerate);
  j.at("note").get_to(r.note);
  j.at("intermediates").get_to(r.intermediates);
}

inline void to_json(nlohmann::json& j, const ValidationReport& r) {
  nlohmann::json violations = nlohmann::json::array();
  for (const Violation& v : r.violations) {
    violations.push_back({{"qid", v.qid}, {"kind", violation_name(v.kind)}, {"detail", v.detail}});
  }
  j = nlohmann::json{
      {"model_id", r.model_id}, {"n_records", r.n_records}, {"violations", violations}};
}

}  // namespace capa

namespace capa::stats {

inline void to_json(nlohmann::json& j, const Diagnostics& d) {
  j = nlohmann::json{{"durbin_watson", d.durbin_watson},
                     {"jarque_bera_stat", d.jarque_bera_stat},
                     {"jarque_bera_p", d.jarque_bera_p},
                     {"breusch_pagan_lm", d.breusch_pagan_lm},
                     {"breusch_pagan_p", d.breusch_pagan_p}};
}

inline void from_json(const nlohmann::json& j, Diagnostics& d) {
  j.at("durbin_watson").get_to(d.durbin_watson);
  j.at("jarque_bera_stat").get_to(d.jarque_bera_stat);
  j.at("jarque_bera_p").get_to(d.jarque_bera_p);
  j.at("breusch_pagan_lm").get_to(d.breusch_pagan_lm);
  j.at("breusch_pagan_p").get_to(d.breusch_pagan_p);
}

inline void to_json(nlohmann::json& j, const RegressionFit& f) {
  j = nlohmann::json{{"coefficients", f.coefficients},
                     {"standard_errors", f.standard_errors},
                     {"t_values", f.t_values},
                     {"p_values", f.p_values},
                     {"r_squared", f.r_squared},
                     {"adj_r_squared", f.adj_r_squared},
                     {"residuals", f.residuals},
                     {"diagnostics", f.diagnostics},
                     {"n_obs", f.n_obs},
                     {"intercept", f.intercept}};
}

inline void from_json(const nlohmann::json& j, RegressionFit& f) {
  j.at("coefficients").get_to(f.coefficients);
  j.at("standard_errors").get_to(f.standard_errors);
  j.at("t_values").get_to(f.t_values);
  j.at("p_values").get_to(f.p_values);
  j.at("r_squared").get_to(f.r_squared);
  j.at("adj_r_squared").get_to(f.adj_r_squared);
  j.at("residuals").get_to(f.residuals);
  j.at("diagnostics").get_to(f.diagnostics);
  j.at("n_obs").get_to(f.n_obs);
  j.at("intercept").get_to(f.intercept);
}

}  // namespace capa::stats

namespace capa::sim {

inline void to_json(nlohmann::json& j, const SweepTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SweepRow& row : t.rows) {
    nlohmann::json cells = nlohmann::json::array();
    for (const SweepCell& cell : row.cells) {
      nlohmann::json c{{"flag", cell.flag}};
      if (std::isnan(cell.value)) {
        c["value"] = nullptr;
      } else {
        c["value"] = cell.value;
      }
      cells.push_back(std::move(c));
    }
    rows.push_back({{"parameter", row.parameter}, {"cells", cells}});
  }
  j = nlohmann::json{
      {"parameter_name", t.parameter_name}, {"metrics", t.metric_names}, {"rows", rows}};
}

inline void from_json(const nlohmann::json& j, SweepTable& t) {
  j.at("parameter_name").get_to(t.parameter_name);
  j.at("metrics").get_to(t.metric_names);
  t.rows.clear();
  for (const nlohmann::json& row : j.at("rows")) {
    SweepRow r;
    row.at("parameter").get_to(r.parameter);
    for (const nlohmann::json& cell : row.at("cells")) {
      SweepCell c;
      cell.at("flag").get_to(c.flag);
      if (!cell.at("value").is_null()) cell.at("value").get_to(c.value);
      r.cells.push_back(std::move(c));
    }
    t.rows.push_back(std::move(r));
  }
}

}  // namespace capa::sim

namespace capa::analysis {

inline void to_json(nlohmann::json& j, const MatrixCell& c) {
  j = nlohmann::json{{"n_samples", c.n_samples}, {"degenerate", c.degenerate}, {"error", c.error}};
  if (std::isnan(c.value)) {
    j["value"] = nullptr;
  } else {
    j["value"] = c.value;
  }
}

inline void from_json(const nlohmann::json& j, MatrixCell& c) {
  j.at("n_samples").get_to(c.n_samples);
  j.at("degenerate").get_to(c.degenerate);
  j.at("error").get_to(c.error);
  if (j.at("value").is_null()) {
    c.value = std::numeric_limits<double>::quiet_NaN();
  } else {
    j.at("value").get_to(c.value);
  }
}

inline void to_json(nlohmann::json& j, const SimilarityMatrix& m) {
  j = nlohmann::json{
      {"metric", m.metric_name}, {"model_ids", m.model_ids}, {"cells", m.cells}};
}

inline void from_json(const nlohmann::json& j, SimilarityMatrix& m) {
  j.at("metric").get_to(m.metric_name);
  j.at("model_ids").get_to(m.model_ids);
  j.at("cells").get_to(m.cells);
}

inline void to_json(nlohmann::json& j, const TrendRow& r) {
  j = nlohmann::json{{"bucket_index", r.bucket_index},
                     {"percentile_lo", r.percentile_lo},
                     {"percentile_hi", r.percentile_hi},
                     {"mean_pair_accuracy", r.mean_pair_accuracy},
                     {"mean_similarity", r.mean_similarity},
                     {"n_pairs", r.n_pairs},
                     {"n_models", r.n_models}};
}

inline void from_json(const nlohmann::json& j, TrendRow& r) {
  j.at("bucket_index").get_to(r.bucket_index);
  j.at("percentile_lo").get_to(r.percentile_lo);
  j.at("percentile_hi").get_to(r.percentile_hi);
  j.at("mean_pair_accuracy").get_to(r.mean_pair_accuracy);
  j.at("mean_similarity").get_to(r.mean_similarity);
  j.at("n_pairs").get_to(r.n_pairs);
  j.at("n_models").get_to(r.n_models);
}

inline void to_json(nlohmann::json& j, const TrendTable& t) {
  j = nlohmann::json{
      {"metric", t.metric_name}, {"pair_weighted", t.pair_weighted}, {"rows", t.rows}};
}

inline void from_json(const nlohmann::json& j, TrendTable& t) {
  j.at("metric").get_to(t.metric_name);
  j.at("pair_weighted").get_to(t.pair_weighted);
  j.at("rows").get_to(t.rows);
}

inline void to_json(nlohmann::json& j, const QuadrantCell& c) {
  j = nlohmann::json{{"count", c.count}, {"target_accuracy", c.target_accuracy}};
}

inline void from_json(const nlohmann::json& j, QuadrantCell& c) {
  j.at("count").get_to(c.count);
  j.at("target_accuracy").get_to(c.target_accuracy);
}

inline void to_json(nlohmann::json& j, const QuadrantReport& r) {
  j = nlohmann::json{{"weak_id", r.weak_id},
                     {"strong_id", r.strong_id},
                     {"target_id", r.target_id},
                     {"both_correct", r.both_correct},
                     {"only_weak_correct", r.only_weak_correct},
                     {"only_strong_correct", r.only_strong_correct},
                     {"both_wrong", r.both_wrong},
                     {"overall_accuracy", r.overall_accuracy},
                     {"total", r.total}};
}

inline void from_json(const nlohmann::json& j, QuadrantReport& r) {
  j.at("weak_id").get_to(r.weak_id);
  j.at("strong_id").get_to(r.strong_id);
  j.at("target_id").get_to(r.target_id);
  j.at("both_correct").get_to(r.both_correct);
  j.at("only_weak_correct").get_to(r.only_weak_correct);
  j.at("only_strong_correct").get_to(r.only_strong_correct);
  j.at("both_wrong").get_to(r.both_wrong);
  j.at("overall_accuracy").get_to(r.overall_accuracy);
  j.at("total").get_to(r.total);
}

inline void to_json(nlohmann::json& j, const HardnessRow& r) {
  j = nlohmann::json{{"bucket_index", r.bucket_index},
                     {"hardness_lo", r.hardness_lo},
                     {"hardness_hi", r.hardness_hi},
                     {"mean_similarity", r.mean_similarity},
                     {"n_questions", r.n_questions}};
}

inline void to_json(nlohmann::json& j, const HardnessTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const HardnessRow& r : t.rows) rows.push_back(r);
  j = nlohmann::json{{"metric", t.metric_name}, {"rows", rows}};
}

inline void to_json(nlohmann::json& j, const JudgeAffinity& a) {
  j = nlohmann::json{{"judge", a.judge},
                     {"n_models", a.n_models},
                     {"pearson_r", a.pearson_r},
                     {"pearson_p", a.pearson_p},
                     {"partial_r", a.partial_r},
                     {"partial_p", a.partial_p},
                     {"partial_ci_low", a.partial_ci_low},
                     {"partial_ci_high", a.partial_ci_high},
                     {"partial_ci_method", a.partial_ci_method},
                     {"ols", a.ols}};
}

}  // namespace capa::analysis

// ---------------------------------------------------------------------------
// CSV conversions and write_report
// ---------------------------------------------------------------------------

namespace capa::io {

enum class Format { csv, json };

inline Format parse_format(const std::string& name) {
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  fail(errc::invalid_argument, "unknown format '" + name + "' (want csv or json)");
}

inline std::string to_csv(const MetricReport& r) {
  std::string header = "metric,value,degenerate,note";
  std::string row = csv_escape(r.metric_name) + "," + format_double(r.value) + "," +
                    (r.degenerate ? "true" : "false") + "," + csv_escape(r.note);
  for (const auto& [key, value] : r.intermediates) {
    header += "," + csv_escape(key);
    row += "," + format_double(value);
  }
  return header + "\n" + row + "\n";
}

inline std::string to_csv(const ValidationReport& r) {
  std::string out = "qid,kind,detail\n";
  for (const Violation& v : r.violations) {
    out += csv_escape(v.qid);
    out += ",";
    out += violation_name(v.kind);
    out += ",";
    out += csv_escape(v.detail);
    out += "\n";
  }
  return out;
}

inline std::string to_csv(const analysis::SimilarityMatrix& m) {
  std::string out = "model_id";
  for (const std::string& id : m.model_ids) out += "," + csv_escape(id);
  out += "\n";
  for (std::size_t i = 0; i < m.model_ids.size(); ++i) {
    out += csv_escape(m.model_ids[i]);
    for (std::size_t j = 0; j < m.model_ids.size(); ++j) {
      out += ",";
      out += m.cells[i][j].ok() ? format_double(m.cells[i][j].value) : "nan";
    }
    out += "\n";
  }
  return out;
}

inline std::string to_csv(const analysis::TrendTable& t) {
  std::string out =
      "bucket_index,percentile_lo,percentile_hi,mean_pair_accuracy,mean_similarity,n_pairs,"
      "n_models\n";
  for (const analysis::TrendRow& r : t.rows) {
    out += std::to_string(r.bucket_index) + "," + format_double(r.percentile_lo) + "," +
           format_double(r.percentile_hi) + "," + format_double(r.mean_pair_accuracy) + "," +
           format_double(r.mean_similarity) + "," + std::to_string(r.n_pairs) + "," +
           std::to_string(r.n_models) + "\n";
  }
  return out;
}

inline std::string to_csv(const sim::SweepTable& t) {
  std::string out = csv_escape(t.parameter_name);
  for (const std::string& name : t.metric_names) out += "," + csv_escape(name);
  out += "\n";
  for (const sim::SweepRow& row : t.rows) {
    out += format_double(row.parameter);
    for (const sim::SweepCell& cell : row.cells) {
      out += ",";
      out += cell.ok() ? format_double(cell.value) : "nan";
    }
    out += "\n";
  }
  return out;
}

inline std::string to_csv(const analysis::QuadrantReport& r) {
  std::string out = "quadrant,count,target_accuracy\n";
  auto line = [&](const char* name, const analysis::QuadrantCell& c) {
    out += std::string(name) + "," + std::to_string(c.count) + "," +
           format_double(c.target_accuracy) + "\n";
  };
  line("both_correct", r.both_correct);
  line("only_weak_correct", r.only_weak_correct);
  line("only_strong_correct", r.only_strong_correct);
  line("both_wrong", r.both_wrong);
  out += "overall," + std::to_string(r.total) + "," + format_double(r.overall_accuracy) + "\n";
  return out;
}

inline std::string to_csv(const stats::RegressionFit& f) {
  std::string out = "key,value\n";
  for (std::size_t i = 0; i < f.coefficients.size(); ++i) {
    const std::string suffix = std::to_string(i);
    out += "coefficient_" + suffix + "," + format_double(f.coefficients[i]) + "\n";
    out += "standard_error_" + suffix + "," + format_double(f.standard_errors[i]) + "\n";
    out += "t_value_" + suffix + "," + format_double(f.t_values[i]) + "\n";
    out += "p_value_" + suffix + "," + format_double(f.p_values[i]) + "\n";
  }
  out += "r_squared," + format_double(f.r_squared) + "\n";
  out += "adj_r_squared," + format_double(f.adj_r_squared) + "\n";
  out += "durbin_watson," + format_double(f.diagnostics.durbin_watson) + "\n";
  out += "jarque_bera_stat," + format_double(f.diagnostics.jarque_bera_stat) + "\n";
  out += "jarque_bera_p," + format_double(f.diagnostics.jarque_bera_p) + "\n";
  out += "breusch_pagan_lm," + format_double(f.diagnostics.breusch_pagan_lm) + "\n";
  out += "breusch_pagan_p," + format_double(f.diagnostics.breusch_pagan_p) + "\n";
  out += "n_obs," + std::to_string(f.n_obs) + "\n";
  return out;
}

inline std::string to_csv(const analysis::HardnessTable& t) {
  std::string out = "bucket_index,hardness_lo,hardness_hi,mean_similarity,n_questions\n";
  for (const analysis::HardnessRow& r : t.rows) {
    out += std::to_string(r.bucket_index) + "," + format_double(r.hardness_lo) + "," +
           format_double(r.hardness_hi) + "," + format_double(r.mean_similarity) + "," +
           std::to_string(r.n_questions) + "\n";
  }
  return out;
}

inline std::string to_csv(const std::vector<analysis::JudgeAffinity>& results) {
  std::string out =
      "judge,n_models,pearson_r,pearson_p,partial_r,partial_p,partial_ci_low,partial_ci_high,"
      "ols_coef_similarity,ols_p_similarity,ols_coef_accuracy,ols_p_accuracy,ols_adj_r_squared\n";
  for (const analysis::JudgeAffinity& a : results) {
    out += csv_escape(a.judge) + "," + std::to_string(a.n_models) + "," +
           format_double(a.pearson_r) + "," + format_double(a.pearson_p) + "," +
           format_double(a.partial_r) + "," + format_double(a.partial_p) + "," +
           format_double(a.partial_ci_low) + "," + format_double(a.partial_ci_high) + "," +
           format_double(a.ols.coefficients.at(1)) + "," + format_double(a.ols.p_values.at(1)) +
           "," + format_double(a.ols.coefficients.at(2)) + "," +
           format_double(a.ols.p_values.at(2)) + "," + format_double(a.ols.adj_r_squared) + "\n";
  }
  return out;
}

// Deterministic bytes for any serializable report; bit-identical across runs
// for identical inputs.
template <typename Report>
void write_report(const Report& report, const std::filesystem::path& path, Format format) {
  std::string bytes;
  if (format == Format::json) {
    const nlohmann::json j = report;
    bytes = j.dump(2);
    bytes += "\n";
  } else {
    bytes = to_csv(report);
  }
  atomic_write(path, bytes);
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open '" + path.string() + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(errc::schema_error, "'" + path.string() + "' is not valid JSON");
  return j;
}

}  // namespace capa::io
