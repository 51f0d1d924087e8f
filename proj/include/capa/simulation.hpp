#pragma once

// Seeded synthetic model pairs and the sweep runner behind the metric
// behavior tables.
//
// Three binary-option constructions:
//
//   * independent: golds are uniform per sample; each model is one-hot,
//     correct on its own uniformly drawn subset of exactly
//     round(accuracy * n) samples and confidently wrong elsewhere. Any
//     agreement between the two sides is pure chance.
//   * agreement_sweep: model A always favors the first option with fixed
//     calibration (probs [cal_a, 1-cal_a] on every sample); the gold is the
//     first option on exactly round(accuracy_a * n) samples, the second
//     elsewhere. Model B places mass_b on A's favored option. Sweeping
//     mass_b from low to high makes the pair arbitrarily similar.
//   * disagreement_sweep: same A; model B places mass_b on the opposed
//     option, so high mass_b means maximal disagreement.
//
// Exact-count subsets (not Bernoulli draws) pin each side's accuracy per
// trial. Randomness comes from the counter generator in rng.hpp
// ("splitmix64-counter/v1"); per-row streams in a sweep are derived as
// seed ^ row_index, so tables are byte-identical for a fixed spec.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "capa/core.hpp"
#include "capa/errors.hpp"
#include "capa/metrics.hpp"
#include "capa/numeric.hpp"
#include "capa/rng.hpp"

namespace capa::sim {

enum class Mode { independent, agreement_sweep, disagreement_sweep };

inline const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::independent:        return "independent";
    case Mode::agreement_sweep:    return "agreement";
    case Mode::disagreement_sweep: return "disagreement";
  }
  return "unknown";
}

struct SimSpec {
  std::size_t n_samples = 10000;
  double accuracy_a = 0.9;
  double accuracy_b = 0.7;
  double calibration_a = 0.99;
  double calibration_b = 0.99;
  Mode mode = Mode::independent;
  std::size_t sweep_points = 1;
  // Sweep grid endpoints; NaN picks the mode default (0.5..0.9 for the
  // independent accuracy sweep, 0.01..0.99 for the calibration sweeps).
  double sweep_from = std::numeric_limits<double>::quiet_NaN();
  double sweep_to = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

namespace detail {

inline constexpr std::uint64_t kGoldStream = 0x676f6c64;    // "gold"
inline constexpr std::uint64_t kModelAStream = 0x6d6f6441;  // "modA"
inline constexpr std::uint64_t kModelBStream = 0x6d6f6442;  // "modB"

inline void check_fraction(double value, const char* what) {
  if (!(value >= 0.0 && value <= 1.0)) {
    fail(errc::invalid_argument, std::string(what) + " must lie in [0,1]");
  }
}

inline std::string sim_qid(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "s%08zu", i);
  return buf;
}

inline std::vector<bool> correct_mask(std::size_t n, double accuracy, CounterRng rng) {
  const auto k = static_cast<std::size_t>(std::llround(accuracy * static_cast<double>(n)));
  std::vector<bool> mask(n, false);
  for (std::size_t index : sample_without_replacement(n, k, rng)) mask[index] = true;
  return mask;
}

}  // namespace detail

// Uncorrelated one-hot pair: gold uniform, each side correct on its own
// independent exact-count subset.
inline AlignedPair gen_independent_pair(const SimSpec& spec) {
  if (spec.n_samples < 1) fail(errc::invalid_argument, "n_samples must be >= 1");
  detail::check_fraction(spec.accuracy_a, "accuracy_a");
  detail::check_fraction(spec.accuracy_b, "accuracy_b");

  const CounterRng base(spec.seed);
  CounterRng gold_rng = base.derive(detail::kGoldStream);
  const std::vector<bool> correct_a =
      detail::correct_mask(spec.n_samples, spec.accuracy_a, base.derive(detail::kModelAStream));
  const std::vector<bool> correct_b =
      detail::correct_mask(spec.n_samples, spec.accuracy_b, base.derive(detail::kModelBStream));

  AlignedPair pair;
  pair.model_a = "sim_a";
  pair.model_b = "sim_b";
  pair.samples.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const int gold = gold_rng.next_bool() ? 1 : 0;
    auto one_hot = [&](bool correct) {
      std::vector<double> probs(2, 0.0);
      probs[static_cast<std::size_t>(correct ? gold : 1 - gold)] = 1.0;
      return probs;
    };
    pair.samples.push_back(
        {detail::sim_qid(i), gold, one_hot(correct_a[i]), one_hot(correct_b[i])});
  }
  return pair;
}

namespace detail {

inline AlignedPair gen_fixed_preference_pair(const SimSpec& spec, double mass_on_first) {
  if (spec.n_samples < 1) fail(errc::invalid_argument, "n_samples must be >= 1");
  check_fraction(spec.accuracy_a, "accuracy_a");
  check_fraction(spec.calibration_a, "calibration_a");
  check_fraction(mass_on_first, "mass_b");

  const CounterRng base(spec.seed);
  const std::vector<bool> gold_on_first =
      correct_mask(spec.n_samples, spec.accuracy_a, base.derive(kModelAStream));

  const std::vector<double> probs_a = {spec.calibration_a, 1.0 - spec.calibration_a};
  const std::vector<double> probs_b = {mass_on_first, 1.0 - mass_on_first};

  AlignedPair pair;
  pair.model_a = "sim_a";
  pair.model_b = "sim_b";
  pair.samples.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    pair.samples.push_back({sim_qid(i), gold_on_first[i] ? 0 : 1, probs_a, probs_b});
  }
  return pair;
}

}  // namespace detail

// Model B places mass_b on the option model A favors.
inline AlignedPair gen_calibrated_pair(const SimSpec& spec, double mass_b) {
  return detail::gen_fixed_preference_pair(spec, mass_b);
}

// Model B places mass_b on the option opposed to model A's preference.
inline AlignedPair gen_disagreement_pair(const SimSpec& spec, double mass_b) {
  return detail::gen_fixed_preference_pair(spec, 1.0 - mass_b);
}

// ---------------------------------------------------------------------------
// Sweep runner
// ---------------------------------------------------------------------------

struct SweepCell {
  double value = std::numeric_limits<double>::quiet_NaN();
  std::string flag;  // empty = clean value; "degenerate" or an error code

  bool ok() const { return flag.empty(); }
};

struct SweepRow {
  double parameter = 0.0;
  std::vector<SweepCell> cells;
};

struct SweepTable {
  std::string parameter_name;
  std::vector<std::string> metric_names;
  std::vector<SweepRow> rows;
};

// Grid of swept parameter values: accuracy_b in independent mode, mass_b in
// the calibration sweeps. A single-point sweep evaluates the spec's own
// accuracy_b / calibration_b instead of a grid.
inline std::vector<double> sweep_grid(const SimSpec& spec) {
  if (spec.sweep_points < 1) fail(errc::invalid_argument, "sweep_points must be >= 1");
  const bool independent = spec.mode == Mode::independent;
  if (spec.sweep_points == 1) {
    return {independent ? spec.accuracy_b : spec.calibration_b};
  }
  const double from =
      std::isnan(spec.sweep_from) ? (independent ? 0.5 : 0.01) : spec.sweep_from;
  const double to = std::isnan(spec.sweep_to) ? (independent ? 0.9 : 0.99) : spec.sweep_to;
  return linspace(from, to, spec.sweep_points);
}

// Evaluates every metric at every grid point. Metric failures and degenerate
// chance terms become flagged cells; a sweep never aborts on them.
inline SweepTable run_sweep(const SimSpec& spec, std::span<const std::string> metric_names) {
  SweepTable table;
  table.parameter_name = spec.mode == Mode::independent ? "accuracy_b" : "mass_b";
  table.metric_names.assign(metric_names.begin(), metric_names.end());

  const std::vector<double> grid = sweep_grid(spec);
  table.rows.reserve(grid.size());
  for (std::size_t row_index = 0; row_index < grid.size(); ++row_index) {
    SimSpec row_spec = spec;
    row_spec.seed = spec.seed ^ static_cast<std::uint64_t>(row_index);

    AlignedPair pair;
    switch (spec.mode) {
      case Mode::independent:
        row_spec.accuracy_b = grid[row_index];
        pair = gen_independent_pair(row_spec);
        break;
      case Mode::agreement_sweep:
        pair = gen_calibrated_pair(row_spec, grid[row_index]);
        break;
      case Mode::disagreement_sweep:
        pair = gen_disagreement_pair(row_spec, grid[row_index]);
        break;
    }

    SweepRow row;
    row.parameter = grid[row_index];
    row.cells.reserve(metric_names.size());
    for (const std::string& name : metric_names) {
      SweepCell cell;
      try {
        const MetricReport report = evaluate_metric(name, pair);
        cell.value = report.value;
        if (report.degenerate) cell.flag = "degenerate";
      } catch (const Error& e) {
        cell.flag = errc_name(e.code());
      }
      row.cells.push_back(std::move(cell));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace capa::sim
