#pragma once

// Domain types for per-sample prediction logs, their validation, and the
// alignment step every metric runs on.
//
// A PredictionSet holds one model's probability distributions over the
// options of a dataset, keyed by question id. Metrics never consume raw sets:
// they consume AlignedPair / AlignedGroup views, the qid intersection of the
// inputs restricted to samples whose gold index and option count agree,
// sorted by qid so that parallel and serial runs aggregate identically.
// Samples whose ground-truth option differs between sources are dropped (and
// counted), not errored.
//
// Everything here is immutable after construction and all operations are
// pure, so values can be shared freely across worker threads.

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "capa/errors.hpp"
#include "capa/numeric.hpp"

namespace capa {

// Tolerance on a normalized probability vector's sum.
inline constexpr double kProbEpsilon = 1e-6;
// Inputs whose sum drifts by at most this much are renormalized in place;
// anything worse is a validation error. Leaderboard logs store
// finite-precision log-likelihoods, so small drift is expected.
inline constexpr double kRenormalizableDrift = 1e-3;

struct SampleRecord {
  std::string qid;
  std::string category;  // optional subject/task label; empty means none
  int gold_index = 0;
  std::vector<double> probs;
};

struct PredictionSet {
  std::string model_id;
  std::string developer;  // optional; used for same-developer exclusion
  std::vector<SampleRecord> records;
};

// Renormalizes probs in place when the sum drift is within tolerance.
// Returns false (record untouched) when the drift is too large to trust.
inline bool normalize_probs(std::vector<double>& probs) {
  KahanSum acc;
  for (double p : probs) acc.add(p);
  const double sum = acc.value();
  if (!(std::abs(sum - 1.0) <= kRenormalizableDrift) || sum <= 0.0) return false;
  for (double& p : probs) p /= sum;
  return true;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationKind {
  duplicate_qid,
  prob_out_of_range,
  sum_drift,
  bad_gold_index,
  too_few_options,
};

inline const char* violation_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::duplicate_qid:     return "duplicate_qid";
    case ViolationKind::prob_out_of_range: return "prob_out_of_range";
    case ViolationKind::sum_drift:         return "sum_drift";
    case ViolationKind::bad_gold_index:    return "bad_gold_index";
    case ViolationKind::too_few_options:   return "too_few_options";
  }
  return "unknown";
}

struct Violation {
  std::string qid;
  ViolationKind kind;
  std::string detail;
};

struct ValidationReport {
  std::string model_id;
  std::size_t n_records = 0;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

// Report-only: a set with zero violations is admissible to every metric.
inline ValidationReport validate(const PredictionSet& set) {
  ValidationReport report;
  report.model_id = set.model_id;
  report.n_records = set.records.size();

  std::map<std::string, std::size_t> seen;
  for (const SampleRecord& rec : set.records) {
    if (++seen[rec.qid] == 2) {
      report.violations.push_back({rec.qid, ViolationKind::duplicate_qid, "qid repeats"});
    }
    if (rec.probs.size() < 2) {
      report.violations.push_back(
          {rec.qid, ViolationKind::too_few_options,
           "needs >= 2 options, got " + std::to_string(rec.probs.size())});
      continue;
    }
    if (rec.gold_index < 0 || static_cast<std::size_t>(rec.gold_index) >= rec.probs.size()) {
      report.violations.push_back(
          {rec.qid, ViolationKind::bad_gold_index, "gold " + std::to_string(rec.gold_index)});
    }
    bool in_range = true;
    KahanSum acc;
    for (double p : rec.probs) {
      if (!(p >= 0.0 && p <= 1.0)) in_range = false;
      acc.add(p);
    }
    if (!in_range) {
      report.violations.push_back({rec.qid, ViolationKind::prob_out_of_range, "prob outside [0,1]"});
    }
    const double sum = acc.value();
    if (std::abs(sum - 1.0) > kProbEpsilon) {
      report.violations.push_back(
          {rec.qid, ViolationKind::sum_drift, "sum " + std::to_string(sum)});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Shared primitives
// ---------------------------------------------------------------------------

// Ties resolve to the lowest option index, so results are deterministic and
// independent of input ordering.
inline std::size_t argmax_option(std::span<const double> probs) {
  return static_cast<std::size_t>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
}

inline bool is_correct(std::span<const double> probs, int gold_index) {
  return argmax_option(probs) == static_cast<std::size_t>(gold_index);
}

// ---------------------------------------------------------------------------
// Aligned views
// ---------------------------------------------------------------------------

struct AlignedSample {
  std::string qid;
  int gold_index = 0;
  std::vector<double> probs_a;
  std::vector<double> probs_b;
};

struct AlignmentDrops {
  std::size_t only_a = 0;  // qid present only in the first set
  std::size_t only_b = 0;
  std::size_t gold_mismatch = 0;
  std::size_t option_count_mismatch = 0;

  std::size_t dropped_from_a() const { return only_a + gold_mismatch + option_count_mismatch; }
  std::size_t dropped_from_b() const { return only_b + gold_mismatch + option_count_mismatch; }
};

struct AlignedPair {
  std::string model_a;
  std::string model_b;
  std::vector<AlignedSample> samples;  // canonical qid order
  AlignmentDrops drops;

  std::size_t size() const { return samples.size(); }
};

enum class Side { a, b };

inline const std::vector<double>& side_probs(const AlignedSample& s, Side side) {
  return side == Side::a ? s.probs_a : s.probs_b;
}

// Intersection on qid, excluding samples whose gold index or option count
// disagree. Throws EmptyIntersection when nothing survives.
inline AlignedPair align_pair(const PredictionSet& a, const PredictionSet& b) {
  std::map<std::string, const SampleRecord*> b_index;
  for (const SampleRecord& rec : b.records) b_index.emplace(rec.qid, &rec);

  AlignedPair pair;
  pair.model_a = a.model_id;
  pair.model_b = b.model_id;

  std::size_t matched_b = 0;
  std::vector<const SampleRecord*> a_sorted;
  a_sorted.reserve(a.records.size());
  for (const SampleRecord& rec : a.records) a_sorted.push_back(&rec);
  std::sort(a_sorted.begin(), a_sorted.end(),
            [](const SampleRecord* l, const SampleRecord* r) { return l->qid < r->qid; });

  for (const SampleRecord* ra : a_sorted) {
    auto it = b_index.find(ra->qid);
    if (it == b_index.end()) {
      ++pair.drops.only_a;
      continue;
    }
    const SampleRecord* rb = it->second;
    ++matched_b;
    if (ra->gold_index != rb->gold_index) {
      ++pair.drops.gold_mismatch;
      continue;
    }
    if (ra->probs.size() != rb->probs.size()) {
      ++pair.drops.option_count_mismatch;
      continue;
    }
    pair.samples.push_back({ra->qid, ra->gold_index, ra->probs, rb->probs});
  }
  pair.drops.only_b = b.records.size() - matched_b;

  if (pair.samples.empty()) {
    fail(errc::empty_intersection,
         "no common gold-consistent samples between '" + a.model_id + "' and '" + b.model_id + "'");
  }
  return pair;
}

struct GroupSample {
  std::string qid;
  int gold_index = 0;
  std::vector<std::vector<double>> probs;  // one vector per model
};

struct AlignedGroup {
  std::vector<std::string> model_ids;
  std::vector<GroupSample> samples;  // canonical qid order
  std::size_t dropped = 0;           // qids seen anywhere but not aligned

  std::size_t size() const { return samples.size(); }
};

// M-way generalization of align_pair: keeps qids present in every set with a
// consistent gold index and option count across all sources.
inline AlignedGroup align_group(std::span<const PredictionSet> sets) {
  if (sets.size() < 2) fail(errc::too_few_models, "align_group needs >= 2 sets");

  AlignedGroup group;
  for (const PredictionSet& set : sets) group.model_ids.push_back(set.model_id);

  std::vector<std::map<std::string, const SampleRecord*>> indices;
  indices.reserve(sets.size());
  for (const PredictionSet& set : sets) {
    std::map<std::string, const SampleRecord*> index;
    for (const SampleRecord& rec : set.records) index.emplace(rec.qid, &rec);
    indices.push_back(std::move(index));
  }

  std::map<std::string, std::size_t> qid_union;
  for (const auto& index : indices) {
    for (const auto& [qid, rec] : index) ++qid_union[qid];
  }

  for (const auto& [qid, presence] : qid_union) {
    if (presence != sets.size()) {
      ++group.dropped;
      continue;
    }
    const SampleRecord* first = indices.front().at(qid);
    bool consistent = true;
    for (std::size_t m = 1; m < indices.size(); ++m) {
      const SampleRecord* rec = indices[m].at(qid);
      if (rec->gold_index != first->gold_index || rec->probs.size() != first->probs.size()) {
        consistent = false;
        break;
      }
    }
    if (!consistent) {
      ++group.dropped;
      continue;
    }
    GroupSample sample;
    sample.qid = qid;
    sample.gold_index = first->gold_index;
    for (const auto& index : indices) sample.probs.push_back(index.at(qid)->probs);
    group.samples.push_back(std::move(sample));
  }

  if (group.samples.empty()) fail(errc::empty_intersection, "no common gold-consistent samples");
  return group;
}

// Pairwise view of two group members, preserving sample order, so pairwise
// and multi-model metrics run through the identical code path.
inline AlignedPair extract_pair(const AlignedGroup& group, std::size_t i, std::size_t j) {
  AlignedPair pair;
  pair.model_a = group.model_ids.at(i);
  pair.model_b = group.model_ids.at(j);
  pair.samples.reserve(group.samples.size());
  for (const GroupSample& s : group.samples) {
    pair.samples.push_back({s.qid, s.gold_index, s.probs.at(i), s.probs.at(j)});
  }
  return pair;
}

// ---------------------------------------------------------------------------
// Accuracy and mean correct probability
// ---------------------------------------------------------------------------

namespace detail {

template <typename Range, typename ProbsOf, typename GoldOf>
double accuracy_impl(const Range& range, ProbsOf&& probs_of, GoldOf&& gold_of) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& item : range) {
    ++total;
    if (is_correct(probs_of(item), gold_of(item))) ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

template <typename Range, typename ProbsOf, typename GoldOf>
double mean_correct_prob_impl(const Range& range, ProbsOf&& probs_of, GoldOf&& gold_of) {
  KahanSum acc;
  std::size_t total = 0;
  for (const auto& item : range) {
    ++total;
    std::span<const double> probs = probs_of(item);
    acc.add(probs[static_cast<std::size_t>(gold_of(item))]);
  }
  return total == 0 ? 0.0 : acc.value() / static_cast<double>(total);
}

}  // namespace detail

// Fraction of samples whose argmax option is the gold option.
inline double accuracy(const PredictionSet& set) {
  return detail::accuracy_impl(
      set.records, [](const SampleRecord& r) { return std::span<const double>(r.probs); },
      [](const SampleRecord& r) { return r.gold_index; });
}

inline double accuracy(const AlignedPair& pair, Side side) {
  return detail::accuracy_impl(
      pair.samples,
      [side](const AlignedSample& s) { return std::span<const double>(side_probs(s, side)); },
      [](const AlignedSample& s) { return s.gold_index; });
}

// Average probability assigned to the gold option (p-bar). Approaches the
// accuracy for a calibrated model; equals it exactly for one-hot predictions.
inline double mean_correct_prob(const PredictionSet& set) {
  return detail::mean_correct_prob_impl(
      set.records, [](const SampleRecord& r) { return std::span<const double>(r.probs); },
      [](const SampleRecord& r) { return r.gold_index; });
}

inline double mean_correct_prob(const AlignedPair& pair, Side side) {
  return detail::mean_correct_prob_impl(
      pair.samples,
      [side](const AlignedSample& s) { return std::span<const double>(side_probs(s, side)); },
      [](const AlignedSample& s) { return s.gold_index; });
}

}  // namespace capa
