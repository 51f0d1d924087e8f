#include <capa/io.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>

#include "test_support.hpp"

using namespace capa;
using Catch::Matchers::WithinAbs;

namespace {

bool is_error(const std::function<void()>& fn, errc code) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("capa_io_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::filesystem::path write_file(const TempDir& dir, const std::string& name,
                                 const std::string& content) {
  const std::filesystem::path p = dir.path / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

constexpr const char* kHeader =
    R"({"model_id": "m1", "developer": "acme", "dataset": "bench", "schema_version": "1"})";

}  // namespace

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

TEST_CASE("softmax of equal loglikes is uniform", "[io]") {
  const std::vector<double> out = io::softmax(std::vector<double>{0.0, 0.0});
  CHECK_THAT(out[0], WithinAbs(0.5, 1e-15));
  CHECK_THAT(out[1], WithinAbs(0.5, 1e-15));
}

TEST_CASE("softmax of (ln 9, 0) is (0.9, 0.1)", "[io]") {
  const std::vector<double> out = io::softmax(std::vector<double>{std::log(9.0), 0.0});
  CHECK_THAT(out[0], WithinAbs(0.9, 1e-12));
  CHECK_THAT(out[1], WithinAbs(0.1, 1e-12));
}

TEST_CASE("softmax is shift invariant", "[io][property]") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> loglikes(4);
    for (double& ll : loglikes) ll = normal(rng);
    std::vector<double> shifted = loglikes;
    const double shift = normal(rng);
    for (double& ll : shifted) ll += shift;
    const std::vector<double> a = io::softmax(loglikes);
    const std::vector<double> b = io::softmax(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK_THAT(a[i], WithinAbs(b[i], 1e-12));
  }
}

// ---------------------------------------------------------------------------
// Prediction loading
// ---------------------------------------------------------------------------

TEST_CASE("well-formed log loads with metadata", "[io]") {
  TempDir dir;
  const auto p = write_file(dir, "m1.jsonl",
                            std::string(kHeader) + "\n" +
                                R"({"qid": "q1", "category": "math", "gold": 0, "probs": [0.9, 0.1]})" +
                                "\n" +
                                R"({"qid": "q2", "gold": 1, "loglikes": [0.0, 0.0]})" + "\n");
  const io::LoadResult result = io::load_predictions(p);
  CHECK(result.set.model_id == "m1");
  CHECK(result.set.developer == "acme");
  CHECK(result.dataset == "bench");
  REQUIRE(result.set.records.size() == 2);
  CHECK(result.set.records[0].category == "math");
  CHECK_THAT(result.set.records[1].probs[0], WithinAbs(0.5, 1e-15));
  CHECK(result.rejects.empty());
  CHECK(validate(result.set).ok());
}

TEST_CASE("loglike records convert to probabilities by softmax", "[io]") {
  TempDir dir;
  const auto p = write_file(dir, "m1.jsonl",
                            std::string(kHeader) + "\n" +
                                R"({"qid": "q1", "gold": 0, "loglikes": [2.1972245773362196, 0.0]})" +
                                "\n");
  const io::LoadResult result = io::load_predictions(p);
  REQUIRE(result.set.records.size() == 1);
  CHECK_THAT(result.set.records[0].probs[0], WithinAbs(0.9, 1e-12));
}

TEST_CASE("small probability drift renormalizes on load", "[io]") {
  TempDir dir;
  const auto p = write_file(dir, "m1.jsonl",
                            std::string(kHeader) + "\n" +
                                R"({"qid": "q1", "gold": 0, "probs": [0.6002, 0.4]})" + "\n");
  const io::LoadResult result = io::load_predictions(p);
  REQUIRE(result.set.records.size() == 1);
  KahanSum sum;
  for (double v : result.set.records[0].probs) sum.add(v);
  CHECK_THAT(sum.value(), WithinAbs(1.0, 1e-12));
}

TEST_CASE("missing header is a schema error", "[io]") {
  TempDir dir;
  const auto p = write_file(dir, "m1.jsonl",
                            R"({"qid": "q1", "gold": 0, "probs": [0.5, 0.5]})" "\n");
  CHECK(is_error([&] { io::load_predictions(p); }, errc::schema_error));
}

TEST_CASE("wrong schema version is a schema error", "[io]") {
  TempDir dir;
  const auto p = write_file(
      dir, "m1.jsonl",
      R"({"model_id": "m1", "dataset": "bench", "schema_version": "2"})" "\n");
  CHECK(is_error([&] { io::load_predictions(p); }, errc::schema_error));
}

TEST_CASE("malformed lines reject with reasons but the load survives", "[io]") {
  TempDir dir;
  std::string content = std::string(kHeader) + "\n";
  for (int i = 0; i < 200; ++i) {
    content += R"({"qid": "q)" + std::to_string(i) + R"(", "gold": 0, "probs": [0.5, 0.5]})" "\n";
  }
  content += "this is not json\n";
  content += R"({"qid": "dup", "gold": 0, "probs": [0.5, 0.5]})" "\n";
  content += R"({"qid": "dup", "gold": 0, "probs": [0.5, 0.5]})" "\n";

  const auto p = write_file(dir, "m1.jsonl", content);
  const io::LoadResult result = io::load_predictions(p);
  CHECK(result.set.records.size() == 201);
  REQUIRE(result.rejects.size() == 2);
  CHECK(result.rejects[0].reason == "unparseable JSON");
  CHECK(result.rejects[1].reason.find("duplicate qid") != std::string::npos);
}

TEST_CASE("excessive rejects abort the load", "[io]") {
  TempDir dir;
  std::string content = std::string(kHeader) + "\n";
  for (int i = 0; i < 10; ++i) {
    content += R"({"qid": "q)" + std::to_string(i) + R"(", "gold": 0, "probs": [0.5, 0.5]})" "\n";
  }
  content += R"({"qid": "bad", "gold": 7, "probs": [0.5, 0.5]})" "\n";  // gold out of range
  const auto p = write_file(dir, "m1.jsonl", content);
  CHECK(is_error([&] { io::load_predictions(p); }, errc::too_many_rejects));
}

TEST_CASE("record-level violations reject individual lines", "[io]") {
  TempDir dir;
  std::string content = std::string(kHeader) + "\n";
  for (int i = 0; i < 600; ++i) {
    content += R"({"qid": "q)" + std::to_string(i) + R"(", "gold": 0, "probs": [0.5, 0.5]})" "\n";
  }
  content += R"({"qid": "one_option", "gold": 0, "probs": [1.0]})" "\n";
  content += R"({"qid": "both_kinds", "gold": 0, "probs": [0.5, 0.5], "loglikes": [0, 0]})" "\n";
  content += R"({"qid": "big_drift", "gold": 0, "probs": [0.7, 0.4]})" "\n";
  content += R"({"qid": "neg", "gold": 0, "probs": [-0.1, 1.1]})" "\n";
  const auto p = write_file(dir, "m1.jsonl", content);
  const io::LoadResult result = io::load_predictions(p);
  CHECK(result.set.records.size() == 600);
  CHECK(result.rejects.size() == 4);
}

// ---------------------------------------------------------------------------
// Score tables
// ---------------------------------------------------------------------------

TEST_CASE("well-formed score table loads", "[io]") {
  TempDir dir;
  const auto p = write_file(dir, "scores.csv",
                            "judge,model,score,accuracy,size\n"
                            "j1,m1,0.7,0.6,7.0\n"
                            "j1,m2,0.5,0.4,\n"
                            "j2,m1,0.9,0.6,7.0\n");
  const analysis::ScoreTable table = io::load_score_table(p);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0].judge == "j1");
  CHECK(table.rows[0].score == 0.7);
  REQUIRE(table.rows[0].accuracy.has_value());
  CHECK(*table.rows[0].accuracy == 0.6);
  CHECK_FALSE(table.rows[1].size.has_value());
}

TEST_CASE("score table range and duplicate violations", "[io]") {
  TempDir dir;
  const auto out_of_range = write_file(dir, "bad_range.csv",
                                       "judge,model,score\n"
                                       "j1,m1,1.2\n");
  CHECK(is_error([&] { io::load_score_table(out_of_range); }, errc::range_error));

  const auto duplicated = write_file(dir, "dup.csv",
                                     "judge,model,score\n"
                                     "j1,m1,0.5\n"
                                     "j1,m1,0.6\n");
  CHECK(is_error([&] { io::load_score_table(duplicated); }, errc::duplicate_key));

  const auto missing_column = write_file(dir, "cols.csv",
                                         "judge,model\n"
                                         "j1,m1\n");
  CHECK(is_error([&] { io::load_score_table(missing_column); }, errc::schema_error));
}

// ---------------------------------------------------------------------------
// Report writing
// ---------------------------------------------------------------------------

TEST_CASE("two-model matrix serializes to one header and two data rows", "[io]") {
  analysis::SimilarityMatrix matrix;
  matrix.metric_name = "capa";
  matrix.model_ids = {"a", "b"};
  matrix.cells.assign(2, std::vector<analysis::MatrixCell>(2));
  matrix.cells[0][0].value = 1.0;
  matrix.cells[1][1].value = 1.0;
  matrix.cells[0][1].value = 0.25;
  matrix.cells[1][0].value = 0.25;

  const std::string csv = io::to_csv(matrix);
  CHECK(csv == "model_id,a,b\na,1,0.25\nb,0.25,1\n");
}

TEST_CASE("writing the same report twice produces identical bytes", "[io]") {
  TempDir dir;
  MetricReport report;
  report.metric_name = "capa";
  report.value = 0.2121212121212121;
  report.intermediates = {{"c_obs", 0.61}, {"c_exp", 0.505}, {"n_samples", 2.0}};

  const auto p1 = dir.path / "r1.json";
  const auto p2 = dir.path / "r2.json";
  io::write_report(report, p1, io::Format::json);
  io::write_report(report, p2, io::Format::json);
  CHECK(read_file(p1) == read_file(p2));

  const auto c1 = dir.path / "r1.csv";
  const auto c2 = dir.path / "r2.csv";
  io::write_report(report, c1, io::Format::csv);
  io::write_report(report, c2, io::Format::csv);
  CHECK(read_file(c1) == read_file(c2));
  CHECK(!std::filesystem::exists(dir.path / "r1.csv.tmp"));
}

TEST_CASE("json round-trips preserve report values", "[io][property]") {
  TempDir dir;

  analysis::SimilarityMatrix matrix;
  matrix.metric_name = "capa";
  matrix.model_ids = {"a", "b", "c"};
  matrix.cells.assign(3, std::vector<analysis::MatrixCell>(3));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      matrix.cells[i][j].value = i == j ? 1.0 : 0.1 * static_cast<double>(i + j) + 0.01;
      matrix.cells[i][j].n_samples = 100 + i + j;
    }
  }
  matrix.cells[0][2].error = "EmptyIntersection";
  matrix.cells[0][2].value = std::numeric_limits<double>::quiet_NaN();
  matrix.cells[2][0] = matrix.cells[0][2];

  const auto matrix_path = dir.path / "matrix.json";
  io::write_report(matrix, matrix_path, io::Format::json);
  const auto matrix_back = io::load_json(matrix_path).get<analysis::SimilarityMatrix>();
  CHECK(matrix_back.model_ids == matrix.model_ids);
  CHECK(matrix_back.cells[1][2].value == matrix.cells[1][2].value);
  CHECK(matrix_back.cells[0][2].error == "EmptyIntersection");
  CHECK(std::isnan(matrix_back.cells[0][2].value));

  sim::SweepTable sweep;
  sweep.parameter_name = "mass_b";
  sweep.metric_names = {"capa", "jsd"};
  sweep.rows.push_back({0.25, {{0.1234567890123456, ""}, {0.5, ""}}});
  sweep.rows.push_back(
      {0.5, {{std::numeric_limits<double>::quiet_NaN(), "degenerate"}, {0.75, ""}}});
  const auto sweep_path = dir.path / "sweep.json";
  io::write_report(sweep, sweep_path, io::Format::json);
  const auto sweep_back = io::load_json(sweep_path).get<sim::SweepTable>();
  CHECK(sweep_back.rows[0].cells[0].value == sweep.rows[0].cells[0].value);
  CHECK(sweep_back.rows[1].cells[0].flag == "degenerate");

  analysis::TrendTable trend;
  trend.metric_name = "capa";
  trend.rows.push_back({0, 0.0, 50.0, 0.61234, 0.1415926535897932, 10, 5});
  const auto trend_path = dir.path / "trend.json";
  io::write_report(trend, trend_path, io::Format::json);
  const auto trend_back = io::load_json(trend_path).get<analysis::TrendTable>();
  CHECK(trend_back.rows[0].mean_similarity == trend.rows[0].mean_similarity);

  analysis::QuadrantReport quadrant;
  quadrant.weak_id = "w";
  quadrant.strong_id = "s";
  quadrant.target_id = "t";
  quadrant.both_correct = {600, 0.97};
  quadrant.only_weak_correct = {100, 0.42};
  quadrant.only_strong_correct = {200, 0.72};
  quadrant.both_wrong = {100, 0.12};
  quadrant.overall_accuracy = 0.799;
  quadrant.total = 1000;
  const auto quadrant_path = dir.path / "quadrant.json";
  io::write_report(quadrant, quadrant_path, io::Format::json);
  const auto quadrant_back = io::load_json(quadrant_path).get<analysis::QuadrantReport>();
  CHECK(quadrant_back.both_correct.count == 600);
  CHECK(quadrant_back.overall_accuracy == quadrant.overall_accuracy);

  stats::RegressionFit fit;
  fit.coefficients = {0.092, 0.586, 0.506};
  fit.standard_errors = {0.019, 0.132, 0.098};
  fit.t_values = {4.885, 4.442, 5.185};
  fit.p_values = {0.00002, 0.0000841, 0.00001};
  fit.r_squared = 0.913;
  fit.adj_r_squared = 0.908;
  fit.residuals = {0.01, -0.02, 0.005};
  fit.diagnostics = {2.097, 1.4, 0.496, 0.456, 0.796};
  fit.n_obs = 38;
  const auto fit_path = dir.path / "fit.json";
  io::write_report(fit, fit_path, io::Format::json);
  const auto fit_back = io::load_json(fit_path).get<stats::RegressionFit>();
  CHECK(fit_back.coefficients == fit.coefficients);
  CHECK(fit_back.diagnostics.durbin_watson == fit.diagnostics.durbin_watson);

  MetricReport metric;
  metric.metric_name = "capa";
  metric.value = 1.0 / 3.0;
  metric.intermediates = {{"c_obs", 0.61}};
  const auto metric_path = dir.path / "metric.json";
  io::write_report(metric, metric_path, io::Format::json);
  const auto metric_back = io::load_json(metric_path).get<MetricReport>();
  CHECK(metric_back.value == metric.value);
  CHECK(metric_back.intermediates.at("c_obs") == 0.61);
}

TEST_CASE("sweep csv has a header row naming metrics", "[io]") {
  sim::SweepTable sweep;
  sweep.parameter_name = "accuracy_b";
  sweep.metric_names = {"capa", "agreement"};
  sweep.rows.push_back({0.5, {{0.001, ""}, {0.5, ""}}});
  sweep.rows.push_back({0.9, {{std::numeric_limits<double>::quiet_NaN(), "degenerate"}, {0.82, ""}}});
  const std::string csv = io::to_csv(sweep);
  CHECK(csv ==
        "accuracy_b,capa,agreement\n"
        "0.5,0.001,0.5\n"
        "0.9,nan,0.82\n");
}

TEST_CASE("format_double emits shortest round-trip decimals", "[io]") {
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(1.0) == "1");
  CHECK(io::format_double(1.0 / 3.0) == "0.3333333333333333");
  CHECK(io::format_double(-0.0489) == "-0.0489");
}
