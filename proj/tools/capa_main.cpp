// capa: chance-adjusted probabilistic agreement between model prediction logs.
//
// Subcommands wire the io loaders into the metric, simulation and analysis
// layers and emit report artifacts (CSV or JSON, atomically written).
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <capa/analysis.hpp>
#include <capa/core.hpp>
#include <capa/io.hpp>
#include <capa/metrics.hpp>
#include <capa/simulation.hpp>
#include <capa/stats.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct OutputOptions {
  std::string path;
  std::string format = "csv";
};

void add_output_options(CLI::App* cmd, OutputOptions& out) {
  cmd->add_option("--out", out.path, "Report file to write");
  cmd->add_option("--format", out.format, "Report format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
}

template <typename Report>
void maybe_write(const Report& report, const OutputOptions& out) {
  if (out.path.empty()) return;
  capa::io::write_report(report, out.path, capa::io::parse_format(out.format));
  std::cout << "wrote " << out.path << "\n";
}

capa::PredictionSet load_set(const std::string& path, bool announce_rejects = true) {
  const capa::io::LoadResult result = capa::io::load_predictions(path);
  if (announce_rejects && !result.rejects.empty()) {
    std::cerr << path << ": " << result.rejects.size() << " of " << result.n_record_lines
              << " record lines rejected\n";
  }
  return result.set;
}

std::vector<capa::PredictionSet> load_sets(const std::vector<std::string>& paths) {
  std::vector<capa::PredictionSet> sets;
  sets.reserve(paths.size());
  for (const std::string& path : paths) sets.push_back(load_set(path));
  return sets;
}

bool is_pairwise_metric(const std::string& name) {
  const auto& names = capa::pairwise_metric_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::string describe(const capa::MetricReport& report) {
  std::string line = report.metric_name + " = " + capa::io::format_double(report.value);
  const auto n = report.intermediates.find("n_samples");
  if (n != report.intermediates.end()) {
    line += " (n=" + std::to_string(static_cast<long long>(n->second)) + ")";
  }
  if (report.degenerate) line += " [degenerate: " + report.note + "]";
  return line;
}

// Exact-match view of an MCQ log: the answer token is the argmax option
// index, correctness comes from the gold option.
std::vector<capa::EmRecord> em_view(const capa::AlignedPair& pair, capa::Side side) {
  std::vector<capa::EmRecord> records;
  records.reserve(pair.size());
  for (const capa::AlignedSample& s : pair.samples) {
    const auto& probs = capa::side_probs(s, side);
    const std::size_t pick = capa::argmax_option(probs);
    records.push_back({std::to_string(pick), pick == static_cast<std::size_t>(s.gold_index)});
  }
  return records;
}

capa::MetricReport evaluate_pair_metric(const std::string& metric, const capa::AlignedPair& pair) {
  if (metric == "capa-em") {
    return capa::capa_exact_match(em_view(pair, capa::Side::a), em_view(pair, capa::Side::b));
  }
  return capa::evaluate_metric(metric, pair);
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int run_validate(const std::string& input, const OutputOptions& out) {
  const capa::io::LoadResult result = capa::io::load_predictions(input);
  const capa::ValidationReport report = capa::validate(result.set);
  std::cout << "validate " << report.model_id << ": " << report.n_records << " records, "
            << report.violations.size() << " violations, " << result.rejects.size()
            << " rejected lines\n";
  maybe_write(report, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pair
// ---------------------------------------------------------------------------

struct CategoryRow {
  std::string category;
  capa::MetricReport report;
};

void to_json(nlohmann::json& j, const CategoryRow& row) {
  j = nlohmann::json{{"category", row.category}, {"report", row.report}};
}

int run_pair(const std::string& path_a, const std::string& path_b,
             const std::vector<std::string>& more, const std::string& metric, bool per_category,
             const OutputOptions& out) {
  std::vector<std::string> paths = {path_a, path_b};
  paths.insert(paths.end(), more.begin(), more.end());
  const std::vector<capa::PredictionSet> sets = load_sets(paths);

  const bool group_metric = metric == "capa-multi" || metric == "fleiss";
  if (sets.size() > 2 && !group_metric) {
    std::cerr << "error: metric '" << metric << "' is pairwise; drop --more or pick "
              << "capa-multi/fleiss\n";
    return kExitUsage;
  }

  if (per_category) {
    if (group_metric) {
      std::cerr << "error: --per-category supports pairwise metrics only\n";
      return kExitUsage;
    }
    const std::vector<std::string> categories = capa::analysis::categories_of(sets);
    if (categories.empty()) {
      std::cerr << "error: inputs carry no category labels\n";
      return kExitData;
    }
    std::vector<CategoryRow> rows;
    for (const std::string& category : categories) {
      const capa::PredictionSet a = capa::analysis::restrict_to_category(sets[0], category);
      const capa::PredictionSet b = capa::analysis::restrict_to_category(sets[1], category);
      try {
        const capa::MetricReport report = evaluate_pair_metric(metric, capa::align_pair(a, b));
        std::cout << category << ": " << describe(report) << "\n";
        rows.push_back({category, report});
      } catch (const capa::Error& e) {
        std::cout << category << ": skipped (" << e.what() << ")\n";
      }
    }
    if (rows.empty()) {
      std::cerr << "error: no category produced a result\n";
      return kExitData;
    }
    if (!out.path.empty()) {
      if (capa::io::parse_format(out.format) == capa::io::Format::json) {
        const nlohmann::json j = rows;
        capa::io::atomic_write(out.path, j.dump(2) + "\n");
      } else {
        std::string csv = "category,metric,value,degenerate,n_samples\n";
        for (const CategoryRow& row : rows) {
          csv += capa::io::csv_escape(row.category) + "," + row.report.metric_name + "," +
                 capa::io::format_double(row.report.value) + "," +
                 (row.report.degenerate ? "true" : "false") + "," +
                 capa::io::format_double(row.report.intermediates.at("n_samples")) + "\n";
        }
        capa::io::atomic_write(out.path, csv);
      }
      std::cout << "wrote " << out.path << "\n";
    }
    return kExitOk;
  }

  capa::MetricReport report;
  if (group_metric) {
    const capa::AlignedGroup group = capa::align_group(sets);
    report = metric == "capa-multi" ? capa::capa_multi(group) : capa::fleiss_kappa(group);
  } else {
    report = evaluate_pair_metric(metric, capa::align_pair(sets[0], sets[1]));
  }
  std::cout << describe(report) << "\n";
  maybe_write(report, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// matrix
// ---------------------------------------------------------------------------

int run_matrix(const std::vector<std::string>& inputs, const std::string& metric,
               bool per_category, const OutputOptions& out) {
  const std::vector<capa::PredictionSet> sets = load_sets(inputs);

  if (per_category) {
    const std::vector<std::string> categories = capa::analysis::categories_of(sets);
    if (categories.empty()) {
      std::cerr << "error: inputs carry no category labels\n";
      return kExitData;
    }
    nlohmann::json by_category = nlohmann::json::object();
    std::string csv = "category,model_a,model_b,value,n_samples,flag\n";
    for (const std::string& category : categories) {
      std::vector<capa::PredictionSet> restricted;
      restricted.reserve(sets.size());
      for (const capa::PredictionSet& set : sets) {
        restricted.push_back(capa::analysis::restrict_to_category(set, category));
      }
      const capa::analysis::SimilarityMatrix matrix =
          capa::analysis::similarity_matrix(restricted, metric);
      by_category[category] = matrix;
      for (std::size_t i = 0; i < matrix.model_ids.size(); ++i) {
        for (std::size_t j = i + 1; j < matrix.model_ids.size(); ++j) {
          const capa::analysis::MatrixCell& cell = matrix.at(i, j);
          csv += capa::io::csv_escape(category) + "," +
                 capa::io::csv_escape(matrix.model_ids[i]) + "," +
                 capa::io::csv_escape(matrix.model_ids[j]) + "," +
                 (cell.ok() ? capa::io::format_double(cell.value) : "nan") + "," +
                 std::to_string(cell.n_samples) + "," +
                 (cell.ok() ? (cell.degenerate ? "degenerate" : "") : cell.error) + "\n";
        }
      }
      std::cout << "matrix[" << category << "] " << metric << ": " << matrix.model_ids.size()
                << " models\n";
    }
    if (!out.path.empty()) {
      if (capa::io::parse_format(out.format) == capa::io::Format::json) {
        capa::io::atomic_write(out.path, by_category.dump(2) + "\n");
      } else {
        capa::io::atomic_write(out.path, csv);
      }
      std::cout << "wrote " << out.path << "\n";
    }
    return kExitOk;
  }

  const capa::analysis::SimilarityMatrix matrix = capa::analysis::similarity_matrix(sets, metric);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < matrix.model_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < matrix.model_ids.size(); ++j) {
      if (!matrix.at(i, j).ok()) ++failed;
    }
  }
  std::cout << "matrix " << metric << ": " << matrix.model_ids.size() << " models, "
            << (matrix.model_ids.size() * (matrix.model_ids.size() - 1)) / 2 - failed
            << " cells computed, " << failed << " failed\n";
  maybe_write(matrix, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// trend
// ---------------------------------------------------------------------------

int run_trend(const std::vector<std::string>& inputs, std::size_t n_buckets,
              const std::string& metric, bool exclude_same_developer, bool pair_weighted,
              const OutputOptions& out) {
  const std::vector<capa::PredictionSet> sets = load_sets(inputs);
  const capa::analysis::TrendTable table =
      capa::analysis::capability_trend(sets, n_buckets, metric, exclude_same_developer,
                                       pair_weighted);
  for (const capa::analysis::TrendRow& row : table.rows) {
    std::printf("bucket %zu: pct [%.0f,%.0f) acc=%s sim=%s pairs=%zu\n", row.bucket_index,
                row.percentile_lo, row.percentile_hi,
                capa::io::format_double(row.mean_pair_accuracy).c_str(),
                capa::io::format_double(row.mean_similarity).c_str(), row.n_pairs);
  }
  maybe_write(table, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// judge-bias
// ---------------------------------------------------------------------------

int run_judge_bias(const std::string& scores_path, const std::vector<std::string>& inputs,
                   const std::string& metric, bool control_size, const OutputOptions& out) {
  const capa::analysis::ScoreTable scores = capa::io::load_score_table(scores_path);
  const std::vector<capa::PredictionSet> sets = load_sets(inputs);
  const capa::analysis::SimilarityMatrix matrix = capa::analysis::similarity_matrix(sets, metric);

  std::map<std::string, double> accuracies;
  for (const capa::PredictionSet& set : sets) accuracies[set.model_id] = capa::accuracy(set);

  const std::vector<capa::analysis::JudgeAffinity> results =
      capa::analysis::judge_affinity(scores, matrix, accuracies, control_size);
  for (const capa::analysis::JudgeAffinity& a : results) {
    std::cout << "judge " << a.judge << ": n=" << a.n_models
              << " pearson_r=" << capa::io::format_double(a.pearson_r)
              << " (p=" << capa::io::format_double(a.pearson_p) << ")"
              << " partial_r=" << capa::io::format_double(a.partial_r)
              << " (p=" << capa::io::format_double(a.partial_p) << ")\n";
  }
  maybe_write(results, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// w2s
// ---------------------------------------------------------------------------

int run_w2s(const std::string& before_path, const std::string& after_path,
            const std::string& weak_path, const std::string& strong_path,
            const OutputOptions& out) {
  const capa::PredictionSet before = load_set(before_path);
  const capa::PredictionSet after = load_set(after_path);
  const double gain = capa::analysis::w2s_gain(before, after);
  std::cout << "w2s_gain = " << capa::io::format_double(gain) << "\n";

  std::optional<capa::analysis::QuadrantReport> quadrants;
  std::optional<double> ceiling;
  if (!weak_path.empty() && !strong_path.empty()) {
    const capa::PredictionSet weak = load_set(weak_path);
    const capa::PredictionSet strong = load_set(strong_path);
    quadrants = capa::analysis::quadrant_decomposition(weak, strong, after);
    ceiling = capa::analysis::ceiling_union(weak, strong);
    std::cout << "ceiling_union = " << capa::io::format_double(*ceiling) << "\n";
    auto show = [](const char* name, const capa::analysis::QuadrantCell& cell) {
      std::cout << name << ": n=" << cell.count
                << " target_acc=" << capa::io::format_double(cell.target_accuracy) << "\n";
    };
    show("both_correct", quadrants->both_correct);
    show("only_weak_correct", quadrants->only_weak_correct);
    show("only_strong_correct", quadrants->only_strong_correct);
    show("both_wrong", quadrants->both_wrong);
  }

  if (!out.path.empty()) {
    if (capa::io::parse_format(out.format) == capa::io::Format::json) {
      nlohmann::json j{{"gain", gain}};
      if (ceiling) j["ceiling_union"] = *ceiling;
      if (quadrants) j["quadrants"] = *quadrants;
      capa::io::atomic_write(out.path, j.dump(2) + "\n");
    } else {
      std::string csv = "key,value\n";
      csv += "gain," + capa::io::format_double(gain) + "\n";
      if (ceiling) csv += "ceiling_union," + capa::io::format_double(*ceiling) + "\n";
      if (quadrants) {
        auto line = [&](const char* name, const capa::analysis::QuadrantCell& cell) {
          csv += std::string(name) + "_count," + std::to_string(cell.count) + "\n";
          csv += std::string(name) + "_target_accuracy," +
                 capa::io::format_double(cell.target_accuracy) + "\n";
        };
        line("both_correct", quadrants->both_correct);
        line("only_weak_correct", quadrants->only_weak_correct);
        line("only_strong_correct", quadrants->only_strong_correct);
        line("both_wrong", quadrants->both_wrong);
      }
      capa::io::atomic_write(out.path, csv);
    }
    std::cout << "wrote " << out.path << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sim
// ---------------------------------------------------------------------------

int run_sim(const capa::sim::SimSpec& spec, const std::vector<std::string>& metrics,
            const OutputOptions& out) {
  const capa::sim::SweepTable table = capa::sim::run_sweep(spec, metrics);
  if (out.path.empty()) {
    std::cout << capa::io::to_csv(table);
  } else {
    std::cout << "sweep: " << table.rows.size() << " rows\n";
    maybe_write(table, out);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chance-adjusted probabilistic agreement for model prediction logs"};
  app.require_subcommand(1);

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Check a prediction log");
  std::string validate_input;
  OutputOptions validate_out;
  validate_cmd->add_option("--input", validate_input, "Prediction log (jsonl)")->required();
  add_output_options(validate_cmd, validate_out);

  // pair
  auto* pair_cmd = app.add_subcommand("pair", "Score one model pair (or group)");
  std::string pair_a;
  std::string pair_b;
  std::vector<std::string> pair_more;
  std::string pair_metric = "capa";
  bool pair_adjusted = false;
  bool pair_per_category = false;
  OutputOptions pair_out;
  pair_cmd->add_option("--a", pair_a, "First prediction log")->required();
  pair_cmd->add_option("--b", pair_b, "Second prediction log")->required();
  pair_cmd->add_option("--more", pair_more, "Additional logs for group metrics");
  pair_cmd->add_option("--metric", pair_metric, "Metric name");
  pair_cmd->add_flag("--adjusted-capa", pair_adjusted, "Shorthand for --metric capa-adjusted");
  pair_cmd->add_flag("--per-category", pair_per_category, "One result per category label");
  add_output_options(pair_cmd, pair_out);

  // matrix
  auto* matrix_cmd = app.add_subcommand("matrix", "Pairwise similarity matrix");
  std::vector<std::string> matrix_inputs;
  std::string matrix_metric = "capa";
  bool matrix_adjusted = false;
  bool matrix_per_category = false;
  OutputOptions matrix_out;
  matrix_cmd->add_option("--inputs", matrix_inputs, "Prediction logs")
      ->required()
      ->expected(-2);
  matrix_cmd->add_option("--metric", matrix_metric, "Metric name");
  matrix_cmd->add_flag("--adjusted-capa", matrix_adjusted, "Shorthand for --metric capa-adjusted");
  matrix_cmd->add_flag("--per-category", matrix_per_category, "One matrix per category label");
  add_output_options(matrix_cmd, matrix_out);

  // trend
  auto* trend_cmd = app.add_subcommand("trend", "Capability-percentile similarity trend");
  std::vector<std::string> trend_inputs;
  std::size_t trend_buckets = 5;
  std::string trend_metric = "capa";
  bool trend_adjusted = false;
  bool trend_exclude = false;
  bool trend_pair_weighted = false;
  OutputOptions trend_out;
  trend_cmd->add_option("--inputs", trend_inputs, "Prediction logs")->required()->expected(-2);
  trend_cmd->add_option("--n-buckets", trend_buckets, "Number of percentile buckets");
  trend_cmd->add_option("--metric", trend_metric, "Metric name");
  trend_cmd->add_flag("--adjusted-capa", trend_adjusted, "Shorthand for --metric capa-adjusted");
  trend_cmd->add_flag("--exclude-same-developer", trend_exclude,
                      "Only cross-developer pairs inside a bucket");
  trend_cmd->add_flag("--pair-weighted", trend_pair_weighted,
                      "Average over pairs instead of per-model means");
  add_output_options(trend_cmd, trend_out);

  // judge-bias
  auto* judge_cmd = app.add_subcommand("judge-bias", "Judge affinity statistics");
  std::string judge_scores;
  std::vector<std::string> judge_inputs;
  std::string judge_metric = "capa";
  bool judge_adjusted = false;
  bool judge_control_size = false;
  OutputOptions judge_out;
  judge_cmd->add_option("--scores", judge_scores, "Judgment score table (csv)")->required();
  judge_cmd->add_option("--inputs", judge_inputs, "Prediction logs (judges and models)")
      ->required()
      ->expected(-2);
  judge_cmd->add_option("--metric", judge_metric, "Metric name");
  judge_cmd->add_flag("--adjusted-capa", judge_adjusted, "Shorthand for --metric capa-adjusted");
  judge_cmd->add_flag("--control-size", judge_control_size,
                      "Also control for standardized model size from the score table");
  add_output_options(judge_cmd, judge_out);

  // w2s
  auto* w2s_cmd = app.add_subcommand("w2s", "Weak-to-strong gain and quadrants");
  std::string w2s_before;
  std::string w2s_after;
  std::string w2s_weak;
  std::string w2s_strong;
  OutputOptions w2s_out;
  w2s_cmd->add_option("--before", w2s_before, "Student log before training")->required();
  w2s_cmd->add_option("--after", w2s_after, "Student log after training")->required();
  w2s_cmd->add_option("--weak", w2s_weak, "Weak supervisor log (for quadrants)");
  w2s_cmd->add_option("--strong", w2s_strong, "Strong elicited log (for quadrants)");
  add_output_options(w2s_cmd, w2s_out);

  // sim
  auto* sim_cmd = app.add_subcommand("sim", "Seeded metric-behavior sweeps");
  capa::sim::SimSpec spec;
  std::string sim_mode = "independent";
  std::vector<std::string> sim_metrics = {"capa"};
  OutputOptions sim_out;
  sim_cmd->add_option("--mode", sim_mode, "independent | agreement | disagreement")
      ->check(CLI::IsMember({"independent", "agreement", "disagreement"}));
  sim_cmd->add_option("--n", spec.n_samples, "Samples per generated pair");
  sim_cmd->add_option("--acc-a", spec.accuracy_a, "Model A accuracy");
  sim_cmd->add_option("--acc-b", spec.accuracy_b, "Model B accuracy (independent mode)");
  sim_cmd->add_option("--cal-a", spec.calibration_a, "Model A calibration");
  sim_cmd->add_option("--cal-b", spec.calibration_b, "Model B calibration / sweep point");
  sim_cmd->add_option("--sweep-points", spec.sweep_points, "Grid size (1 = single point)");
  sim_cmd->add_option("--sweep-from", spec.sweep_from, "Grid start (mode default otherwise)");
  sim_cmd->add_option("--sweep-to", spec.sweep_to, "Grid end (mode default otherwise)");
  sim_cmd->add_option("--seed", spec.seed, "Base seed");
  sim_cmd->add_option("--metrics", sim_metrics, "Metric columns")->delimiter(',');
  add_output_options(sim_cmd, sim_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto pick_metric = [](const std::string& metric, bool adjusted) {
    return adjusted ? std::string("capa-adjusted") : metric;
  };
  auto check_metric = [](const std::string& metric, bool allow_group) -> bool {
    if (is_pairwise_metric(metric) || metric == "capa-em") return true;
    if (allow_group && (metric == "capa-multi" || metric == "fleiss")) return true;
    std::cerr << "error: unknown metric '" << metric << "'\n";
    return false;
  };

  try {
    if (*validate_cmd) return run_validate(validate_input, validate_out);
    if (*pair_cmd) {
      const std::string metric = pick_metric(pair_metric, pair_adjusted);
      if (!check_metric(metric, true)) return kExitUsage;
      return run_pair(pair_a, pair_b, pair_more, metric, pair_per_category, pair_out);
    }
    if (*matrix_cmd) {
      const std::string metric = pick_metric(matrix_metric, matrix_adjusted);
      if (!check_metric(metric, false)) return kExitUsage;
      return run_matrix(matrix_inputs, metric, matrix_per_category, matrix_out);
    }
    if (*trend_cmd) {
      const std::string metric = pick_metric(trend_metric, trend_adjusted);
      if (!check_metric(metric, false)) return kExitUsage;
      return run_trend(trend_inputs, trend_buckets, metric, trend_exclude, trend_pair_weighted,
                       trend_out);
    }
    if (*judge_cmd) {
      const std::string metric = pick_metric(judge_metric, judge_adjusted);
      if (!check_metric(metric, false)) return kExitUsage;
      return run_judge_bias(judge_scores, judge_inputs, metric, judge_control_size, judge_out);
    }
    if (*w2s_cmd) {
      if (w2s_weak.empty() != w2s_strong.empty()) {
        std::cerr << "error: --weak and --strong must be given together\n";
        return kExitUsage;
      }
      return run_w2s(w2s_before, w2s_after, w2s_weak, w2s_strong, w2s_out);
    }
    if (*sim_cmd) {
      if (sim_mode == "independent") {
        spec.mode = capa::sim::Mode::independent;
      } else if (sim_mode == "agreement") {
        spec.mode = capa::sim::Mode::agreement_sweep;
      } else {
        spec.mode = capa::sim::Mode::disagreement_sweep;
      }
      for (const std::string& metric : sim_metrics) {
        if (!is_pairwise_metric(metric)) {
          std::cerr << "error: unknown sweep metric '" << metric << "'\n";
          return kExitUsage;
        }
      }
      return run_sim(spec, sim_metrics, sim_out);
    }
  } catch (const capa::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
