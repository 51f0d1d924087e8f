#include <capa/core.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "test_support.hpp"

using namespace capa;
using test_support::make_set;
using test_support::padded_qid;

TEST_CASE("validate passes well-formed records", "[core]") {
  const auto set = make_set("m", {{"q1", 0, {0.5, 0.5}}});
  const ValidationReport report = validate(set);
  CHECK(report.ok());
  CHECK(report.n_records == 1);
}

TEST_CASE("validate flags sum drift beyond tolerance", "[core]") {
  const auto set = make_set("m", {{"q1", 0, {0.7, 0.4}}});
  const ValidationReport report = validate(set);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].kind == ViolationKind::sum_drift);
}

TEST_CASE("validate flags single-option records", "[core]") {
  const auto set = make_set("m", {{"q1", 0, {1.0}}});
  const ValidationReport report = validate(set);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].kind == ViolationKind::too_few_options);
}

TEST_CASE("validate flags bad gold index, range, duplicates", "[core]") {
  auto set = make_set("m", {{"q1", 2, {0.5, 0.5}},
                            {"q2", 0, {1.2, -0.2}},
                            {"q3", 0, {0.5, 0.5}},
                            {"q3", 1, {0.5, 0.5}}});
  const ValidationReport report = validate(set);
  bool saw_gold = false;
  bool saw_range = false;
  bool saw_dup = false;
  for (const Violation& v : report.violations) {
    saw_gold |= v.kind == ViolationKind::bad_gold_index;
    saw_range |= v.kind == ViolationKind::prob_out_of_range;
    saw_dup |= v.kind == ViolationKind::duplicate_qid;
  }
  CHECK(saw_gold);
  CHECK(saw_range);
  CHECK(saw_dup);
}

TEST_CASE("normalize_probs renormalizes small drift only", "[core]") {
  std::vector<double> small_drift = {0.5004, 0.5001};
  REQUIRE(normalize_probs(small_drift));
  CHECK_THAT(small_drift[0] + small_drift[1], Catch::Matchers::WithinAbs(1.0, 1e-15));

  std::vector<double> large_drift = {0.7, 0.4};
  CHECK_FALSE(normalize_probs(large_drift));
  CHECK(large_drift[0] == 0.7);
}

TEST_CASE("align_pair keeps identical sets intact", "[core]") {
  std::vector<test_support::Row> rows;
  for (std::size_t i = 0; i < 100; ++i) {
    rows.push_back({padded_qid(i), static_cast<int>(i % 2), {0.6, 0.4}});
  }
  const auto a = make_set("a", rows);
  const auto b = make_set("b", rows);
  const AlignedPair pair = align_pair(a, b);
  CHECK(pair.size() == 100);
  CHECK(pair.drops.only_a == 0);
  CHECK(pair.drops.only_b == 0);
  CHECK(pair.drops.gold_mismatch == 0);
}

TEST_CASE("align_pair drops non-shared and gold-mismatched samples", "[core]") {
  // 100 qids per side, 50 shared, 2 of the shared disagree on gold.
  std::vector<test_support::Row> rows_a;
  std::vector<test_support::Row> rows_b;
  for (std::size_t i = 0; i < 50; ++i) {
    const int gold_b = i < 2 ? 1 : 0;
    rows_a.push_back({"shared" + padded_qid(i), 0, {0.6, 0.4}});
    rows_b.push_back({"shared" + padded_qid(i), gold_b, {0.6, 0.4}});
  }
  for (std::size_t i = 0; i < 50; ++i) {
    rows_a.push_back({"a_only" + padded_qid(i), 0, {0.6, 0.4}});
    rows_b.push_back({"b_only" + padded_qid(i), 0, {0.6, 0.4}});
  }
  const AlignedPair pair = align_pair(make_set("a", rows_a), make_set("b", rows_b));
  CHECK(pair.size() == 48);
  CHECK(pair.drops.only_a == 50);
  CHECK(pair.drops.only_b == 50);
  CHECK(pair.drops.gold_mismatch == 2);
  CHECK(pair.drops.dropped_from_a() == 52);
  CHECK(pair.drops.dropped_from_b() == 52);
}

TEST_CASE("align_pair rejects disjoint qid sets", "[core]") {
  const auto a = make_set("a", {{"x1", 0, {0.5, 0.5}}});
  const auto b = make_set("b", {{"y1", 0, {0.5, 0.5}}});
  REQUIRE_THROWS_MATCHES(align_pair(a, b), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == errc::empty_intersection;
                         }));
}

TEST_CASE("align_pair drops option-count mismatches and orders by qid", "[core]") {
  const auto a = make_set("a", {{"q2", 0, {0.5, 0.5}},
                                {"q1", 1, {0.2, 0.3, 0.5}},
                                {"q3", 0, {0.9, 0.1}}});
  const auto b = make_set("b", {{"q3", 0, {0.4, 0.6}},
                                {"q1", 1, {0.5, 0.5}},
                                {"q2", 0, {0.1, 0.9}}});
  const AlignedPair pair = align_pair(a, b);
  REQUIRE(pair.size() == 2);
  CHECK(pair.drops.option_count_mismatch == 1);
  CHECK(pair.samples[0].qid == "q2");
  CHECK(pair.samples[1].qid == "q3");
}

TEST_CASE("alignment is symmetric up to side swap", "[core][property]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<test_support::Row> rows_a;
    std::vector<test_support::Row> rows_b;
    for (std::size_t i = 0; i < 30; ++i) {
      const std::string qid = padded_qid(rng() % 40);
      const int gold = static_cast<int>(rng() & 1u);
      if (rng() & 1u) rows_a.push_back({qid, gold, {0.6, 0.4}});
      if (rng() & 1u) rows_b.push_back({qid, gold, {0.3, 0.7}});
    }
    auto dedup = [](std::vector<test_support::Row> rows) {
      std::sort(rows.begin(), rows.end(),
                [](const auto& l, const auto& r) { return l.qid < r.qid; });
      rows.erase(std::unique(rows.begin(), rows.end(),
                             [](const auto& l, const auto& r) { return l.qid == r.qid; }),
                 rows.end());
      return rows;
    };
    rows_a = dedup(rows_a);
    rows_b = dedup(rows_b);
    const auto a = make_set("a", rows_a);
    const auto b = make_set("b", rows_b);
    try {
      const AlignedPair ab = align_pair(a, b);
      const AlignedPair ba = align_pair(b, a);
      REQUIRE(ab.size() == ba.size());
      for (std::size_t i = 0; i < ab.size(); ++i) {
        CHECK(ab.samples[i].qid == ba.samples[i].qid);
        CHECK(ab.samples[i].probs_a == ba.samples[i].probs_b);
      }
    } catch (const Error& e) {
      CHECK(e.code() == errc::empty_intersection);
    }
  }
}

TEST_CASE("accuracy on the worked example is one half", "[core]") {
  const AlignedPair pair = test_support::worked_example_pair();
  CHECK(accuracy(pair, Side::a) == 0.5);
  CHECK(accuracy(pair, Side::b) == 0.5);
}

TEST_CASE("accuracy is 1 for one-hot-on-gold predictions", "[core]") {
  const auto set = make_set("m", {{"q1", 0, {1.0, 0.0}}, {"q2", 1, {0.0, 1.0}}});
  CHECK(accuracy(set) == 1.0);
}

TEST_CASE("argmax ties resolve to the lowest option index", "[core]") {
  const auto set = make_set("m", {{"q1", 1, {0.5, 0.5}}});
  CHECK(argmax_option(set.records[0].probs) == 0);
  CHECK(accuracy(set) == 0.0);
}

TEST_CASE("mean_correct_prob matches the worked example", "[core]") {
  const AlignedPair pair = test_support::worked_example_pair();
  CHECK_THAT(mean_correct_prob(pair, Side::a), Catch::Matchers::WithinAbs(0.55, 1e-15));
  CHECK_THAT(mean_correct_prob(pair, Side::b), Catch::Matchers::WithinAbs(0.55, 1e-15));
}

TEST_CASE("mean_correct_prob endpoints", "[core]") {
  const auto hot = make_set("m", {{"q1", 0, {1.0, 0.0}}, {"q2", 1, {0.0, 1.0}}});
  CHECK(mean_correct_prob(hot) == 1.0);

  const auto uniform = make_set("m", {{"q1", 2, {0.25, 0.25, 0.25, 0.25}},
                                      {"q2", 0, {0.25, 0.25, 0.25, 0.25}}});
  CHECK(mean_correct_prob(uniform) == 0.25);
}

TEST_CASE("mean_correct_prob stays in [0,1] and equals accuracy for one-hot", "[core][property]") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const AlignedPair prob_pair = test_support::fuzz_probabilistic_pair(rng);
    for (Side side : {Side::a, Side::b}) {
      const double p_bar = mean_correct_prob(prob_pair, side);
      CHECK(p_bar >= 0.0);
      CHECK(p_bar <= 1.0);
    }
    const AlignedPair hot_pair = test_support::fuzz_onehot_pair(rng);
    for (Side side : {Side::a, Side::b}) {
      CHECK(mean_correct_prob(hot_pair, side) == accuracy(hot_pair, side));
    }
  }
}

TEST_CASE("align_group intersects all models", "[core]") {
  const auto a = make_set("a", {{"q1", 0, {0.5, 0.5}}, {"q2", 1, {0.5, 0.5}}});
  const auto b = make_set("b", {{"q1", 0, {0.4, 0.6}}, {"q3", 1, {0.5, 0.5}}});
  const auto c = make_set("c", {{"q1", 0, {0.1, 0.9}}, {"q2", 1, {0.5, 0.5}}});
  const std::vector<PredictionSet> sets = {a, b, c};
  const AlignedGroup group = align_group(sets);
  REQUIRE(group.size() == 1);
  CHECK(group.samples[0].qid == "q1");
  CHECK(group.dropped == 2);
  CHECK(group.model_ids == std::vector<std::string>{"a", "b", "c"});

  const AlignedPair pair = extract_pair(group, 0, 2);
  CHECK(pair.model_a == "a");
  CHECK(pair.model_b == "c");
  CHECK(pair.samples[0].probs_b == std::vector<double>{0.1, 0.9});
}
