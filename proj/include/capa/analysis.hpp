#pragma once

// Experiment pipelines on top of the metric layer: pairwise similarity
// matrices, capability-percentile trend tables, judge-affinity statistics,
// weak-to-strong gain with its quadrant decomposition, and the
// question-hardness split.
//
// Matrices align each pair separately (the shared sample set differs per
// pair, and per-cell n is recorded so consumers can filter). Cells evaluate
// in parallel; every worker writes only its own preallocated cell, so output
// is deterministic regardless of scheduling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "capa/core.hpp"
#include "capa/errors.hpp"
#include "capa/metrics.hpp"
#include "capa/numeric.hpp"
#include "capa/stats.hpp"

namespace capa::analysis {

namespace detail {

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Similarity matrix
// ---------------------------------------------------------------------------

struct MatrixCell {
  double value = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_samples = 0;
  bool degenerate = false;
  std::string error;  // errc name when the cell failed

  bool ok() const { return error.empty(); }
};

struct SimilarityMatrix {
  std::string metric_name;
  std::vector<std::string> model_ids;
  std::vector<std::vector<MatrixCell>> cells;  // cells[i][j] == cells[j][i]

  const MatrixCell& at(std::size_t i, std::size_t j) const { return cells[i][j]; }

  std::optional<std::size_t> index_of(const std::string& model_id) const {
    for (std::size_t i = 0; i < model_ids.size(); ++i) {
      if (model_ids[i] == model_id) return i;
    }
    return std::nullopt;
  }
};

// All unordered pairs aligned and scored. Diagonal cells are filled with the
// conventional value 1 (self-similarity is not meaningful for the kappa
// family; consumers should read off-diagonals). Throws only when every
// off-diagonal cell failed.
inline SimilarityMatrix similarity_matrix(std::span<const PredictionSet> sets,
                                          const std::string& metric_name) {
  if (sets.size() < 2) fail(errc::too_few_models, "similarity_matrix needs >= 2 sets");

  const std::size_t m = sets.size();
  SimilarityMatrix matrix;
  matrix.metric_name = metric_name;
  for (const PredictionSet& set : sets) matrix.model_ids.push_back(set.model_id);
  matrix.cells.assign(m, std::vector<MatrixCell>(m));
  for (std::size_t i = 0; i < m; ++i) {
    matrix.cells[i][i].value = 1.0;
    matrix.cells[i][i].n_samples = sets[i].records.size();
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) pairs.emplace_back(i, j);
  }

  detail::parallel_for(pairs.size(), [&](std::size_t index) {
    const auto [i, j] = pairs[index];
    MatrixCell cell;
    try {
      const AlignedPair pair = align_pair(sets[i], sets[j]);
      cell.n_samples = pair.size();
      const MetricReport report = evaluate_metric(metric_name, pair);
      cell.value = report.value;
      cell.degenerate = report.degenerate;
    } catch (const Error& e) {
      cell.error = errc_name(e.code());
    }
    matrix.cells[i][j] = cell;
    matrix.cells[j][i] = cell;
  });

  bool any_ok = false;
  std::string first_error;
  for (std::size_t i = 0; i < m && !any_ok; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      if (matrix.cells[i][j].ok()) {
        any_ok = true;
        break;
      }
      if (first_error.empty()) first_error = matrix.cells[i][j].error;
    }
  }
  if (!any_ok) fail(errc::empty_intersection, "every matrix cell failed (" + first_error + ")");
  return matrix;
}

// ---------------------------------------------------------------------------
// Capability trend
// ---------------------------------------------------------------------------

struct TrendRow {
  std::size_t bucket_index = 0;
  double percentile_lo = 0.0;
  double percentile_hi = 0.0;
  double mean_pair_accuracy = 0.0;
  double mean_similarity = 0.0;
  std::size_t n_pairs = 0;
  std::size_t n_models = 0;
};

struct TrendTable {
  std::string metric_name;
  bool pair_weighted = false;
  std::vector<TrendRow> rows;
};

// Buckets models by accuracy percentile into n_buckets equal-count groups
// (ties broken by model id; earlier buckets absorb remainders). Per model,
// the mean similarity against same-bucket models -- from other developers
// when exclusion is on -- then averaged per bucket. pair_weighted averages
// over pairs directly instead.
inline TrendTable capability_trend(std::span<const PredictionSet> sets, std::size_t n_buckets,
                                   const std::string& metric_name, bool exclude_same_developer,
                                   bool pair_weighted = false) {
  if (n_buckets < 1) fail(errc::invalid_argument, "n_buckets must be >= 1");
  if (sets.size() < 2) fail(errc::too_few_models, "capability_trend needs >= 2 sets");

  struct ModelInfo {
    std::size_t index;
    double accuracy;
  };
  std::vector<ModelInfo> order;
  order.reserve(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) order.push_back({i, accuracy(sets[i])});
  std::sort(order.begin(), order.end(), [&](const ModelInfo& l, const ModelInfo& r) {
    if (l.accuracy != r.accuracy) return l.accuracy < r.accuracy;
    return sets[l.index].model_id < sets[r.index].model_id;
  });

  const std::size_t total = order.size();
  const std::size_t base = total / n_buckets;
  const std::size_t extra = total % n_buckets;

  TrendTable table;
  table.metric_name = metric_name;
  table.pair_weighted = pair_weighted;

  std::size_t cursor = 0;
  for (std::size_t b = 0; b < n_buckets; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    if (size == 0) continue;
    const std::size_t begin = cursor;
    cursor += size;

    std::vector<KahanSum> per_model(size);
    std::vector<std::size_t> per_model_count(size, 0);
    KahanSum pair_similarity;
    KahanSum pair_accuracy;
    std::size_t n_pairs = 0;

    for (std::size_t u = 0; u < size; ++u) {
      for (std::size_t v = u + 1; v < size; ++v) {
        const PredictionSet& mu = sets[order[begin + u].index];
        const PredictionSet& mv = sets[order[begin + v].index];
        if (exclude_same_developer &&
            (mu.developer == mv.developer || mu.developer.empty() || mv.developer.empty())) {
          continue;
        }
        double value = 0.0;
        try {
          const MetricReport report = evaluate_metric(metric_name, align_pair(mu, mv));
          if (report.degenerate) continue;
          value = report.value;
        } catch (const Error&) {
          continue;
        }
        per_model[u].add(value);
        per_model[v].add(value);
        ++per_model_count[u];
        ++per_model_count[v];
        pair_similarity.add(value);
        pair_accuracy.add(0.5 * (order[begin + u].accuracy + order[begin + v].accuracy));
        ++n_pairs;
      }
    }

    if (n_pairs == 0) {
      fail(errc::bucket_too_small,
           "bucket " + std::to_string(b) + " has no admissible model pair");
    }

    TrendRow row;
    row.bucket_index = b;
    row.percentile_lo = 100.0 * static_cast<double>(begin) / static_cast<double>(total);
    row.percentile_hi = 100.0 * static_cast<double>(cursor) / static_cast<double>(total);
    row.n_pairs = n_pairs;
    row.n_models = size;
    row.mean_pair_accuracy = pair_accuracy.value() / static_cast<double>(n_pairs);
    if (pair_weighted) {
      row.mean_similarity = pair_similarity.value() / static_cast<double>(n_pairs);
    } else {
      KahanSum model_means;
      std::size_t contributing = 0;
      for (std::size_t u = 0; u < size; ++u) {
        if (per_model_count[u] == 0) continue;
        model_means.add(per_model[u].value() / static_cast<double>(per_model_count[u]));
        ++contributing;
      }
      row.mean_similarity = model_means.value() / static_cast<double>(contributing);
    }
    table.rows.push_back(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Judge affinity
// ---------------------------------------------------------------------------

struct ScoreRow {
  std::string judge;
  std::string model;
  double score = 0.0;
  std::optional<double> accuracy;  // optional override for the accuracy table
  std::optional<double> size;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
};

struct JudgeAffinity {
  std::string judge;
  std::size_t n_models = 0;
  double pearson_r = 0.0;
  double pearson_p = 1.0;
  double partial_r = 0.0;
  double partial_p = 1.0;
  double partial_ci_low = -1.0;
  double partial_ci_high = 1.0;
  std::string partial_ci_method = "fisher-z";
  stats::RegressionFit ols;  // score ~ intercept + similarity + accuracy [+ size]
};

// Per judge: correlation of its judgment scores with judge-model similarity,
// the partial correlation controlling for accuracy (plus standardized size
// when control_size is set), and the corresponding multiple regression.
// The judge's own row is excluded from its list.
inline std::vector<JudgeAffinity> judge_affinity(const ScoreTable& scores,
                                                 const SimilarityMatrix& matrix,
                                                 const std::map<std::string, double>& accuracies,
                                                 bool control_size = false) {
  std::map<std::string, std::vector<const ScoreRow*>> by_judge;
  for (const ScoreRow& row : scores.rows) by_judge[row.judge].push_back(&row);

  std::vector<JudgeAffinity> results;
  for (const auto& [judge, rows] : by_judge) {
    const auto judge_index = matrix.index_of(judge);
    if (!judge_index) fail(errc::missing_cell, "judge '" + judge + "' not present in the matrix");

    std::vector<double> similarity;
    std::vector<double> score;
    std::vector<double> acc;
    std::vector<double> size;
    for (const ScoreRow* row : rows) {
      if (row->model == judge) continue;  // judge never scores itself here
      const auto model_index = matrix.index_of(row->model);
      if (!model_index) {
        fail(errc::missing_cell, "model '" + row->model + "' not present in the matrix");
      }
      const MatrixCell& cell = matrix.at(*judge_index, *model_index);
      if (!cell.ok()) {
        fail(errc::missing_cell,
             "matrix cell (" + judge + ", " + row->model + ") failed: " + cell.error);
      }
      double model_accuracy = 0.0;
      if (row->accuracy) {
        model_accuracy = *row->accuracy;
      } else {
        const auto it = accuracies.find(row->model);
        if (it == accuracies.end()) {
          fail(errc::missing_cell, "no accuracy for model '" + row->model + "'");
        }
        model_accuracy = it->second;
      }
      if (control_size) {
        if (!row->size) fail(errc::missing_cell, "no size for model '" + row->model + "'");
        size.push_back(*row->size);
      }
      similarity.push_back(cell.value);
      score.push_back(row->score);
      acc.push_back(model_accuracy);
    }

    if (score.size() < 5) {
      fail(errc::too_few_models,
           "judge '" + judge + "' has " + std::to_string(score.size()) + " scored models; need >= 5");
    }

    std::vector<std::vector<double>> controls = {acc};
    if (control_size) controls.push_back(stats::standardize(size));

    JudgeAffinity result;
    result.judge = judge;
    result.n_models = score.size();
    const stats::PearsonResult pr = stats::pearson(score, similarity);
    result.pearson_r = pr.r;
    result.pearson_p = pr.p;
    const stats::PartialCorrelation pc = stats::partial_correlation(score, similarity, controls);
    result.partial_r = pc.r;
    result.partial_p = pc.p;
    result.partial_ci_low = pc.ci_low;
    result.partial_ci_high = pc.ci_high;
    result.partial_ci_method = pc.ci_method;

    std::vector<std::vector<double>> predictors = {similarity, acc};
    if (control_size) predictors.push_back(stats::standardize(size));
    result.ols = stats::ols_fit(score, predictors, true);
    results.push_back(std::move(result));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Weak-to-strong analyses
// ---------------------------------------------------------------------------

// Accuracy delta of the same student before and after training, on the
// aligned common test samples.
inline double w2s_gain(const PredictionSet& student_before, const PredictionSet& student_after) {
  const AlignedPair pair = align_pair(student_before, student_after);
  return accuracy(pair, Side::b) - accuracy(pair, Side::a);
}

struct QuadrantCell {
  std::size_t count = 0;
  double target_accuracy = 0.0;
};

struct QuadrantReport {
  std::string weak_id;
  std::string strong_id;
  std::string target_id;
  QuadrantCell both_correct;
  QuadrantCell only_weak_correct;
  QuadrantCell only_strong_correct;
  QuadrantCell both_wrong;
  double overall_accuracy = 0.0;
  std::size_t total = 0;
};

// Partitions the three-way aligned samples by (weak correct?, strong
// correct?) and reports the target model's accuracy on each part. The
// partition itself depends only on the two reference models.
inline QuadrantReport quadrant_decomposition(const PredictionSet& ref_weak,
                                             const PredictionSet& ref_strong,
                                             const PredictionSet& target) {
  const std::vector<PredictionSet> sets = {ref_weak, ref_strong, target};
  const AlignedGroup group = align_group(sets);

  QuadrantReport report;
  report.weak_id = ref_weak.model_id;
  report.strong_id = ref_strong.model_id;
  report.target_id = target.model_id;
  report.total = group.size();

  std::size_t correct_in[2][2] = {{0, 0}, {0, 0}};
  std::size_t count_in[2][2] = {{0, 0}, {0, 0}};
  std::size_t target_correct_total = 0;
  for (const GroupSample& s : group.samples) {
    const bool weak_ok = is_correct(s.probs[0], s.gold_index);
    const bool strong_ok = is_correct(s.probs[1], s.gold_index);
    const bool target_ok = is_correct(s.probs[2], s.gold_index);
    ++count_in[weak_ok][strong_ok];
    correct_in[weak_ok][strong_ok] += target_ok;
    target_correct_total += target_ok;
  }

  auto cell = [&](bool weak_ok, bool strong_ok) {
    QuadrantCell c;
    c.count = count_in[weak_ok][strong_ok];
    c.target_accuracy = c.count == 0 ? 0.0
                                     : static_cast<double>(correct_in[weak_ok][strong_ok]) /
                                           static_cast<double>(c.count);
    return c;
  };
  report.both_correct = cell(true, true);
  report.only_weak_correct = cell(true, false);
  report.only_strong_correct = cell(false, true);
  report.both_wrong = cell(false, false);
  report.overall_accuracy =
      static_cast<double>(target_correct_total) / static_cast<double>(report.total);
  return report;
}

// Fraction of aligned samples where at least one reference model is correct:
// the training ceiling when every correct annotation could be exploited.
inline double ceiling_union(const PredictionSet& ref_weak, const PredictionSet& ref_strong) {
  const AlignedPair pair = align_pair(ref_weak, ref_strong);
  std::size_t any_correct = 0;
  for (const AlignedSample& s : pair.samples) {
    if (is_correct(s.probs_a, s.gold_index) || is_correct(s.probs_b, s.gold_index)) ++any_correct;
  }
  return static_cast<double>(any_correct) / static_cast<double>(pair.size());
}

// ---------------------------------------------------------------------------
// Question-hardness split
// ---------------------------------------------------------------------------

struct HardnessRow {
  std::size_t bucket_index = 0;
  double hardness_lo = 0.0;  // fraction of models answering correctly
  double hardness_hi = 0.0;
  double mean_similarity = 0.0;
  std::size_t n_questions = 0;
};

struct HardnessTable {
  std::string metric_name;
  std::vector<HardnessRow> rows;
};

// Hardness of a question = fraction of models whose argmax hits gold (low =
// hard). Questions are bucketed by hardness percentile; equal hardness values
// always share a bucket. The metric is evaluated per bucket on that bucket's
// questions, averaged over model pairs.
inline HardnessTable hardness_split(std::span<const PredictionSet> sets,
                                    std::size_t n_hardness_buckets,
                                    const std::string& metric_name) {
  if (n_hardness_buckets < 1) fail(errc::invalid_argument, "n_hardness_buckets must be >= 1");
  const AlignedGroup group = align_group(sets);
  const std::size_t m = group.model_ids.size();
  const std::size_t n = group.size();

  std::vector<double> hardness(n, 0.0);
  for (std::size_t q = 0; q < n; ++q) {
    std::size_t correct = 0;
    for (const std::vector<double>& probs : group.samples[q].probs) {
      if (is_correct(probs, group.samples[q].gold_index)) ++correct;
    }
    hardness[q] = static_cast<double>(correct) / static_cast<double>(m);
  }

  // Percentile by value: the share of questions strictly easier-to-rank
  // (lower correct-fraction means harder, so rank by correct-fraction).
  std::vector<double> sorted = hardness;
  std::sort(sorted.begin(), sorted.end());
  auto bucket_of = [&](double h) {
    const auto below = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), h) - sorted.begin());
    const double pct = static_cast<double>(below) / static_cast<double>(n);
    return std::min(n_hardness_buckets - 1,
                    static_cast<std::size_t>(pct * static_cast<double>(n_hardness_buckets)));
  };

  std::vector<std::vector<std::size_t>> members(n_hardness_buckets);
  for (std::size_t q = 0; q < n; ++q) members[bucket_of(hardness[q])].push_back(q);

  HardnessTable table;
  table.metric_name = metric_name;
  for (std::size_t b = 0; b < n_hardness_buckets; ++b) {
    if (members[b].empty()) continue;
    if (members[b].size() < 10) {
      fail(errc::bucket_too_small, "hardness bucket " + std::to_string(b) + " has " +
                                       std::to_string(members[b].size()) + " questions; need >= 10");
    }

    KahanSum values;
    std::size_t n_values = 0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        AlignedPair pair;
        pair.model_a = group.model_ids[i];
        pair.model_b = group.model_ids[j];
        for (std::size_t q : members[b]) {
          const GroupSample& s = group.samples[q];
          pair.samples.push_back({s.qid, s.gold_index, s.probs[i], s.probs[j]});
        }
        try {
          const MetricReport report = evaluate_metric(metric_name, pair);
          if (report.degenerate) continue;
          values.add(report.value);
          ++n_values;
        } catch (const Error&) {
          continue;
        }
      }
    }

    HardnessRow row;
    row.bucket_index = b;
    double lo = 2.0;
    double hi = -1.0;
    for (std::size_t q : members[b]) {
      lo = std::min(lo, hardness[q]);
      hi = std::max(hi, hardness[q]);
    }
    row.hardness_lo = lo;
    row.hardness_hi = hi;
    row.n_questions = members[b].size();
    row.mean_similarity =
        n_values == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : values.value() / static_cast<double>(n_values);
    table.rows.push_back(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Category helpers (per-category reports)
// ---------------------------------------------------------------------------

inline std::vector<std::string> categories_of(std::span<const PredictionSet> sets) {
  std::set<std::string> seen;
  for (const PredictionSet& set : sets) {
    for (const SampleRecord& rec : set.records) {
      if (!rec.category.empty()) seen.insert(rec.category);
    }
  }
  return {seen.begin(), seen.end()};
}

inline PredictionSet restrict_to_category(const PredictionSet& set, const std::string& category) {
  PredictionSet out;
  out.model_id = set.model_id;
  out.developer = set.developer;
  for (const SampleRecord& rec : set.records) {
    if (rec.category == category) out.records.push_back(rec);
  }
  return out;
}

}  // namespace capa::analysis
