#pragma once

// Pairwise and multi-model similarity metrics over aligned prediction logs.
//
// The kappa family shares one shape:
//
//     value = (observed agreement - chance agreement) / (1 - chance agreement)
//
// and differs only in how the two agreements are computed:
//
//   * capa: observed = mean over samples of the probability that both models
//     sample the same option, sum_i p1(o_i) * p2(o_i); chance = p1bar * p2bar
//     + (1 - p1bar)(1 - p2bar) * mean_x 1/(|O_x| - 1), where pbar is the mean
//     probability on the gold option and incorrect mass is assumed uniform
//     over the remaining options.
//   * error_consistency: both agreements over discretized correctness,
//     chance = acc1 * acc2 + (1 - acc1)(1 - acc2).
//   * cohen / scott (discrete and probabilistic): inter-rater chance from
//     per-category marginals; these require a consistent option count.
//
// Denominators within kDegenerateDelta of zero produce a flagged report with
// value 0 instead of +-inf; that matches how the discrete kappa/pi are
// conventionally reported when the chance term saturates at 1.

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "capa/core.hpp"
#include "capa/errors.hpp"
#include "capa/numeric.hpp"

namespace capa {

inline constexpr double kDegenerateDelta = 1e-9;

struct MetricReport {
  std::string metric_name;
  double value = 0.0;
  bool degenerate = false;
  std::string note;  // reason when degenerate
  std::map<std::string, double> intermediates;
};

namespace detail {

inline MetricReport kappa_report(std::string name, double c_obs, double c_exp,
                                 std::map<std::string, double> intermediates) {
  MetricReport report;
  report.metric_name = std::move(name);
  report.intermediates = std::move(intermediates);
  report.intermediates["c_obs"] = c_obs;
  report.intermediates["c_exp"] = c_exp;
  const double denom = 1.0 - c_exp;
  if (std::abs(denom) < kDegenerateDelta) {
    report.degenerate = true;
    report.note = "DegenerateChance: chance agreement saturates at 1";
    report.value = 0.0;
  } else {
    report.value = (c_obs - c_exp) / denom;
  }
  return report;
}

// Consistent option count across samples, or InconsistentCategories.
inline std::size_t category_count(const AlignedPair& pair) {
  const std::size_t k = pair.samples.front().probs_a.size();
  for (const AlignedSample& s : pair.samples) {
    if (s.probs_a.size() != k) {
      fail(errc::inconsistent_categories,
           "option counts vary across samples; this metric needs fixed categories");
    }
  }
  return k;
}

inline std::size_t category_count(const AlignedGroup& group) {
  const std::size_t k = group.samples.front().probs.front().size();
  for (const GroupSample& s : group.samples) {
    if (s.probs.front().size() != k) {
      fail(errc::inconsistent_categories,
           "option counts vary across samples; this metric needs fixed categories");
    }
  }
  return k;
}

// Argmax marginal: fraction of samples on which the side picks each category.
inline std::vector<double> discrete_marginal(const AlignedPair& pair, Side side, std::size_t k) {
  std::vector<double> marginal(k, 0.0);
  for (const AlignedSample& s : pair.samples) {
    marginal[argmax_option(side_probs(s, side))] += 1.0;
  }
  for (double& m : marginal) m /= static_cast<double>(pair.size());
  return marginal;
}

// Mean probability per category.
inline std::vector<double> prob_marginal(const AlignedPair& pair, Side side, std::size_t k) {
  std::vector<KahanSum> acc(k);
  for (const AlignedSample& s : pair.samples) {
    const std::vector<double>& probs = side_probs(s, side);
    for (std::size_t c = 0; c < k; ++c) acc[c].add(probs[c]);
  }
  std::vector<double> marginal(k);
  for (std::size_t c = 0; c < k; ++c) marginal[c] = acc[c].value() / static_cast<double>(pair.size());
  return marginal;
}

inline double fraction_equal_argmax(const AlignedPair& pair) {
  std::size_t equal = 0;
  for (const AlignedSample& s : pair.samples) {
    if (argmax_option(s.probs_a) == argmax_option(s.probs_b)) ++equal;
  }
  return static_cast<double>(equal) / static_cast<double>(pair.size());
}

// Fraction of samples where the two sides are both correct or both wrong.
inline double correctness_overlap(const AlignedPair& pair) {
  std::size_t overlap = 0;
  for (const AlignedSample& s : pair.samples) {
    if (is_correct(s.probs_a, s.gold_index) == is_correct(s.probs_b, s.gold_index)) ++overlap;
  }
  return static_cast<double>(overlap) / static_cast<double>(pair.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CAPA building blocks
// ---------------------------------------------------------------------------

// Probability that the two models pick the same option when sampling from
// their per-sample distributions, averaged over samples.
inline double observed_agreement_prob(const AlignedPair& pair) {
  KahanSum acc;
  for (const AlignedSample& s : pair.samples) {
    KahanSum dot;
    for (std::size_t i = 0; i < s.probs_a.size(); ++i) dot.add(s.probs_a[i] * s.probs_b[i]);
    acc.add(dot.value());
  }
  return acc.value() / static_cast<double>(pair.size());
}

// Agreement expected from independent models with the observed mean correct
// probabilities. incorrect_prior, when given, replaces the uniform spread of
// incorrect mass with a categorical prior over a fixed option count: both
// models then place incorrect mass on class c != gold proportionally to
// prior[c], and the same-incorrect-class term becomes
// sum_{c != gold} (prior[c] / (1 - prior[gold]))^2 per sample.
inline double expected_agreement_prob(const AlignedPair& pair,
                                      std::span<const double> incorrect_prior = {}) {
  const double p_bar_a = mean_correct_prob(pair, Side::a);
  const double p_bar_b = mean_correct_prob(pair, Side::b);

  KahanSum spread;
  if (incorrect_prior.empty()) {
    for (const AlignedSample& s : pair.samples) {
      spread.add(1.0 / static_cast<double>(s.probs_a.size() - 1));
    }
  } else {
    for (const AlignedSample& s : pair.samples) {
      if (s.probs_a.size() != incorrect_prior.size()) {
        fail(errc::inconsistent_categories, "prior length must match the option count");
      }
      const double gold_mass = incorrect_prior[static_cast<std::size_t>(s.gold_index)];
      const double rest = 1.0 - gold_mass;
      if (rest <= 0.0) fail(errc::invalid_argument, "prior places all mass on the gold class");
      KahanSum per_sample;
      for (std::size_t c = 0; c < incorrect_prior.size(); ++c) {
        if (c == static_cast<std::size_t>(s.gold_index)) continue;
        const double w = incorrect_prior[c] / rest;
        per_sample.add(w * w);
      }
      spread.add(per_sample.value());
    }
  }
  const double mean_spread = spread.value() / static_cast<double>(pair.size());
  return p_bar_a * p_bar_b + (1.0 - p_bar_a) * (1.0 - p_bar_b) * mean_spread;
}

// ---------------------------------------------------------------------------
// Kappa-family metrics
// ---------------------------------------------------------------------------

inline MetricReport capa_pair(const AlignedPair& pair, std::span<const double> incorrect_prior = {}) {
  const double c_obs = observed_agreement_prob(pair);
  const double c_exp = expected_agreement_prob(pair, incorrect_prior);
  return detail::kappa_report(
      "capa", c_obs, c_exp,
      {{"p_bar_a", mean_correct_prob(pair, Side::a)},
       {"p_bar_b", mean_correct_prob(pair, Side::b)},
       {"acc_a", accuracy(pair, Side::a)},
       {"acc_b", accuracy(pair, Side::b)},
       {"n_samples", static_cast<double>(pair.size())}});
}

// Lower-bound-adjusted variant: when the pair disagrees beyond chance
// (c_obs < c_exp) the denominator switches to c_exp - c_obs_min with
// c_obs_min = max(0, p1bar + p2bar - 1), so the metric can reach -1 for
// maximally opposed models.
inline MetricReport capa_adjusted(const AlignedPair& pair) {
  const double c_obs = observed_agreement_prob(pair);
  const double c_exp = expected_agreement_prob(pair);
  const double p_bar_a = mean_correct_prob(pair, Side::a);
  const double p_bar_b = mean_correct_prob(pair, Side::b);

  MetricReport report = detail::kappa_report(
      "capa-adjusted", c_obs, c_exp,
      {{"p_bar_a", p_bar_a},
       {"p_bar_b", p_bar_b},
       {"acc_a", accuracy(pair, Side::a)},
       {"acc_b", accuracy(pair, Side::b)},
       {"n_samples", static_cast<double>(pair.size())}});
  if (c_obs >= c_exp) return report;

  const double c_obs_min = std::max(0.0, p_bar_a + p_bar_b - 1.0);
  report.intermediates["c_obs_min"] = c_obs_min;
  const double denom = c_exp - c_obs_min;
  if (std::abs(denom) < kDegenerateDelta) {
    report.degenerate = true;
    report.note = "DegenerateChance: c_exp equals the disagreement floor";
    report.value = 0.0;
  } else {
    report.degenerate = false;
    report.note.clear();
    report.value = (c_obs - c_exp) / denom;
  }
  return report;
}

// Discrete predecessor: overlap in both-correct / both-wrong beyond what the
// two accuracies imply by chance.
inline MetricReport error_consistency(const AlignedPair& pair) {
  const double acc_a = accuracy(pair, Side::a);
  const double acc_b = accuracy(pair, Side::b);
  const double c_obs = detail::correctness_overlap(pair);
  const double c_exp = acc_a * acc_b + (1.0 - acc_a) * (1.0 - acc_b);
  return detail::kappa_report("error-consistency", c_obs, c_exp,
                              {{"acc_a", acc_a},
                               {"acc_b", acc_b},
                               {"n_samples", static_cast<double>(pair.size())}});
}

// Fraction of samples where both sides pick the same option.
inline double percent_agreement(const AlignedPair& pair) {
  return detail::fraction_equal_argmax(pair);
}

// 1 - correctness overlap. Note the asymmetry with percent_agreement: flips
// compare correctness, agreement compares the predicted options themselves.
inline double percent_flips(const AlignedPair& pair) {
  return 1.0 - detail::correctness_overlap(pair);
}

inline MetricReport cohen_kappa_discrete(const AlignedPair& pair) {
  const std::size_t k = detail::category_count(pair);
  const std::vector<double> marg_a = detail::discrete_marginal(pair, Side::a, k);
  const std::vector<double> marg_b = detail::discrete_marginal(pair, Side::b, k);
  KahanSum p_e;
  for (std::size_t c = 0; c < k; ++c) p_e.add(marg_a[c] * marg_b[c]);
  return detail::kappa_report("cohen", detail::fraction_equal_argmax(pair), p_e.value(),
                              {{"n_samples", static_cast<double>(pair.size())}});
}

inline MetricReport cohen_kappa_prob(const AlignedPair& pair) {
  const std::size_t k = detail::category_count(pair);
  const std::vector<double> marg_a = detail::prob_marginal(pair, Side::a, k);
  const std::vector<double> marg_b = detail::prob_marginal(pair, Side::b, k);
  KahanSum p_e;
  for (std::size_t c = 0; c < k; ++c) p_e.add(marg_a[c] * marg_b[c]);
  return detail::kappa_report("cohen-prob", observed_agreement_prob(pair), p_e.value(),
                              {{"n_samples", static_cast<double>(pair.size())}});
}

inline MetricReport scott_pi_discrete(const AlignedPair& pair) {
  const std::size_t k = detail::category_count(pair);
  const std::vector<double> marg_a = detail::discrete_marginal(pair, Side::a, k);
  const std::vector<double> marg_b = detail::discrete_marginal(pair, Side::b, k);
  KahanSum p_e;
  for (std::size_t c = 0; c < k; ++c) {
    const double shared = 0.5 * (marg_a[c] + marg_b[c]);
    p_e.add(shared * shared);
  }
  return detail::kappa_report("scott", detail::fraction_equal_argmax(pair), p_e.value(),
                              {{"n_samples", static_cast<double>(pair.size())}});
}

inline MetricReport scott_pi_prob(const AlignedPair& pair) {
  const std::size_t k = detail::category_count(pair);
  const std::vector<double> marg_a = detail::prob_marginal(pair, Side::a, k);
  const std::vector<double> marg_b = detail::prob_marginal(pair, Side::b, k);
  KahanSum p_e;
  for (std::size_t c = 0; c < k; ++c) {
    const double shared = 0.5 * (marg_a[c] + marg_b[c]);
    p_e.add(shared * shared);
  }
  return detail::kappa_report("scott-prob", observed_agreement_prob(pair), p_e.value(),
                              {{"n_samples", static_cast<double>(pair.size())}});
}

// ---------------------------------------------------------------------------
// Multi-model metrics
// ---------------------------------------------------------------------------

// Classic Fleiss kappa over argmax picks: every model answers every sample.
inline MetricReport fleiss_kappa(const AlignedGroup& group) {
  const std::size_t k = detail::category_count(group);
  const std::size_t m = group.model_ids.size();
  const double pair_count = static_cast<double>(m) * static_cast<double>(m - 1);

  KahanSum obs;
  std::vector<double> pooled(k, 0.0);
  std::vector<std::size_t> counts(k);
  for (const GroupSample& s : group.samples) {
    std::fill(counts.begin(), counts.end(), std::size_t{0});
    for (const std::vector<double>& probs : s.probs) ++counts[argmax_option(probs)];
    double agreements = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      agreements += static_cast<double>(counts[c]) * static_cast<double>(counts[c] - 1);
      pooled[c] += static_cast<double>(counts[c]);
    }
    obs.add(agreements / pair_count);
  }

  const double n = static_cast<double>(group.size());
  KahanSum p_e;
  for (std::size_t c = 0; c < k; ++c) {
    const double share = pooled[c] / (n * static_cast<double>(m));
    p_e.add(share * share);
  }
  return detail::kappa_report("fleiss", obs.value() / n, p_e.value(),
                              {{"n_samples", n}, {"n_models", static_cast<double>(m)}});
}

// Multi-model extension: observed and chance agreement are each averaged over
// all unordered model pairs, then pushed through the kappa formula. For M = 2
// this reduces to capa exactly.
inline MetricReport capa_multi(const AlignedGroup& group) {
  const std::size_t m = group.model_ids.size();
  KahanSum obs;
  KahanSum exp_;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const AlignedPair pair = extract_pair(group, i, j);
      obs.add(observed_agreement_prob(pair));
      exp_.add(expected_agreement_prob(pair));
      ++pairs;
    }
  }
  const double c_obs = obs.value() / static_cast<double>(pairs);
  const double c_exp = exp_.value() / static_cast<double>(pairs);
  return detail::kappa_report("capa-multi", c_obs, c_exp,
                              {{"n_samples", static_cast<double>(group.size())},
                               {"n_models", static_cast<double>(m)},
                               {"n_pairs", static_cast<double>(pairs)}});
}

// ---------------------------------------------------------------------------
// Exact-match variant
// ---------------------------------------------------------------------------

struct EmRecord {
  std::string answer;
  bool correct = false;
};

// Discrete variant for unconstrained answer sets: observed agreement is exact
// answer equality and chance agreement is acc1 * acc2 (independent models
// agree by chance only when both are correct).
inline MetricReport capa_exact_match(std::span<const EmRecord> a, std::span<const EmRecord> b) {
  if (a.size() != b.size() || a.empty()) {
    fail(errc::invalid_argument, "capa_exact_match needs two aligned non-empty sequences");
  }
  std::size_t equal = 0;
  std::size_t correct_a = 0;
  std::size_t correct_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].answer == b[i].answer) ++equal;
    if (a[i].correct) ++correct_a;
    if (b[i].correct) ++correct_b;
  }
  const double n = static_cast<double>(a.size());
  const double acc_a = static_cast<double>(correct_a) / n;
  const double acc_b = static_cast<double>(correct_b) / n;
  return detail::kappa_report("capa-em", static_cast<double>(equal) / n, acc_a * acc_b,
                              {{"acc_a", acc_a}, {"acc_b", acc_b}, {"n_samples", n}});
}

// ---------------------------------------------------------------------------
// Non-kappa comparison metrics
// ---------------------------------------------------------------------------

// 1 - mean Jensen-Shannon distance (sqrt of the base-2 divergence), so
// identical distributions score 1 and disjoint one-hots score 0.
inline double jsd_similarity(const AlignedPair& pair) {
  auto half_kl = [](const std::vector<double>& p, const std::vector<double>& q) {
    KahanSum acc;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) {
        acc.add(p[i] * std::log2(2.0 * p[i] / (p[i] + q[i])));
      }
    }
    return acc.value();
  };
  KahanSum distances;
  for (const AlignedSample& s : pair.samples) {
    const double jsd = 0.5 * (half_kl(s.probs_a, s.probs_b) + half_kl(s.probs_b, s.probs_a));
    distances.add(std::sqrt(std::max(0.0, jsd)));
  }
  return 1.0 - distances.value() / static_cast<double>(pair.size());
}

// Pearson correlation of the two binary correctness vectors; identical to the
// Matthews correlation of the 2x2 correctness table.
inline double error_correlation(const AlignedPair& pair) {
  const double n = static_cast<double>(pair.size());
  std::size_t ca = 0;
  std::size_t cb = 0;
  std::size_t both = 0;
  for (const AlignedSample& s : pair.samples) {
    const bool a_ok = is_correct(s.probs_a, s.gold_index);
    const bool b_ok = is_correct(s.probs_b, s.gold_index);
    ca += a_ok;
    cb += b_ok;
    both += a_ok && b_ok;
  }
  if (ca == 0 || cb == 0 || ca == pair.size() || cb == pair.size()) {
    fail(errc::constant_vector, "a correctness vector is constant; correlation undefined");
  }
  const double pa = static_cast<double>(ca) / n;
  const double pb = static_cast<double>(cb) / n;
  const double cov = static_cast<double>(both) / n - pa * pb;
  return cov / std::sqrt(pa * (1.0 - pa) * pb * (1.0 - pb));
}

// ---------------------------------------------------------------------------
// Name-based dispatch (CLI and sweep harness)
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& pairwise_metric_names() {
  static const std::vector<std::string> names = {
      "capa",  "capa-adjusted", "error-consistency", "agreement", "flips",      "cohen",
      "cohen-prob", "scott",    "scott-prob",        "jsd",       "error-corr",
  };
  return names;
}

inline MetricReport evaluate_metric(const std::string& name, const AlignedPair& pair) {
  auto scalar = [&](double value) {
    MetricReport report;
    report.metric_name = name;
    report.value = value;
    report.intermediates["n_samples"] = static_cast<double>(pair.size());
    return report;
  };
  if (name == "capa") return capa_pair(pair);
  if (name == "capa-adjusted") return capa_adjusted(pair);
  if (name == "error-consistency") return error_consistency(pair);
  if (name == "agreement") return scalar(percent_agreement(pair));
  if (name == "flips") return scalar(percent_flips(pair));
  if (name == "cohen") return cohen_kappa_discrete(pair);
  if (name == "cohen-prob") return cohen_kappa_prob(pair);
  if (name == "scott") return scott_pi_discrete(pair);
  if (name == "scott-prob") return scott_pi_prob(pair);
  if (name == "jsd") return scalar(jsd_similarity(pair));
  if (name == "error-corr") return scalar(error_correlation(pair));
  fail(errc::invalid_argument, "unknown pairwise metric '" + name + "'");
}

}  // namespace capa
