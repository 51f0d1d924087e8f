#include <capa/simulation.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace capa;
using namespace capa::sim;
using Catch::Matchers::WithinAbs;

// ---------------------------------------------------------------------------
// Counter generator
// ---------------------------------------------------------------------------

TEST_CASE("counter rng is reproducible and splittable", "[simulation][rng]") {
  CounterRng a(42);
  CounterRng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  CounterRng s1 = CounterRng(42).derive(1);
  CounterRng s2 = CounterRng(42).derive(2);
  CHECK(s1.next_u64() != s2.next_u64());

  CounterRng t0 = CounterRng::for_trial(7, 0);
  CounterRng base(7);
  CHECK(t0.next_u64() == base.next_u64());
}

TEST_CASE("unit draws live in [0,1) and bounded draws respect the bound",
          "[simulation][rng][property]") {
  CounterRng rng(9001);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.next_below(37) < 37);
  }
}

TEST_CASE("sample_without_replacement returns distinct indices of exact count",
          "[simulation][rng][property]") {
  CounterRng rng(5);
  for (std::size_t k : {std::size_t{0}, std::size_t{10}, std::size_t{99}, std::size_t{100}}) {
    auto picked = sample_without_replacement(100, k, rng);
    REQUIRE(picked.size() == k);
    std::sort(picked.begin(), picked.end());
    CHECK(std::adjacent_find(picked.begin(), picked.end()) == picked.end());
    for (std::size_t index : picked) CHECK(index < 100);
  }
}

// ---------------------------------------------------------------------------
// Independent pairs
// ---------------------------------------------------------------------------

TEST_CASE("independent pair accuracies are exact by construction", "[simulation]") {
  SimSpec spec;
  spec.n_samples = 1000;
  spec.accuracy_a = 0.9;
  spec.accuracy_b = 0.5;
  spec.seed = 11;
  const AlignedPair pair = gen_independent_pair(spec);
  CHECK(accuracy(pair, Side::a) == 0.9);
  CHECK(accuracy(pair, Side::b) == 0.5);
  CHECK(mean_correct_prob(pair, Side::a) == 0.9);
}

TEST_CASE("perfect independent models flag degenerate capa", "[simulation]") {
  SimSpec spec;
  spec.n_samples = 100;
  spec.accuracy_a = 1.0;
  spec.accuracy_b = 1.0;
  spec.seed = 3;
  const AlignedPair pair = gen_independent_pair(spec);
  const MetricReport report = capa_pair(pair);
  CHECK(report.degenerate);
}

TEST_CASE("independent models score near-zero capa and chance-level agreement",
          "[simulation][property]") {
  SimSpec spec;
  spec.n_samples = 10000;
  spec.accuracy_a = 0.9;
  spec.accuracy_b = 0.5;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    spec.seed = seed;
    const AlignedPair pair = gen_independent_pair(spec);
    CHECK(std::abs(capa_pair(pair).value) < 0.03);
    CHECK_THAT(percent_agreement(pair), WithinAbs(0.5, 0.02));
  }
  spec.accuracy_b = 0.9;
  for (std::uint64_t seed : {6u, 7u, 8u}) {
    spec.seed = seed;
    const AlignedPair pair = gen_independent_pair(spec);
    CHECK(std::abs(capa_pair(pair).value) < 0.03);
    CHECK_THAT(percent_agreement(pair), WithinAbs(0.82, 0.02));
  }
}

TEST_CASE("generated pairs pass core validation", "[simulation][property]") {
  SimSpec spec;
  spec.n_samples = 500;
  spec.seed = 77;
  for (Mode mode : {Mode::independent, Mode::agreement_sweep, Mode::disagreement_sweep}) {
    spec.mode = mode;
    AlignedPair pair;
    switch (mode) {
      case Mode::independent:        pair = gen_independent_pair(spec); break;
      case Mode::agreement_sweep:    pair = gen_calibrated_pair(spec, 0.37); break;
      case Mode::disagreement_sweep: pair = gen_disagreement_pair(spec, 0.83); break;
    }
    for (Side side : {Side::a, Side::b}) {
      PredictionSet as_set;
      as_set.model_id = side == Side::a ? pair.model_a : pair.model_b;
      for (const AlignedSample& s : pair.samples) {
        as_set.records.push_back({s.qid, "", s.gold_index, side_probs(s, side)});
      }
      CHECK(validate(as_set).ok());
    }
  }
}

// ---------------------------------------------------------------------------
// Calibrated pairs
// ---------------------------------------------------------------------------

TEST_CASE("uniform model b pins observed agreement at one half", "[simulation]") {
  SimSpec spec;
  spec.n_samples = 200;
  spec.seed = 13;
  spec.mode = Mode::agreement_sweep;
  const AlignedPair pair = gen_calibrated_pair(spec, 0.5);
  CHECK_THAT(observed_agreement_prob(pair), WithinAbs(0.5, 1e-12));

  // The disagreement construction coincides with the agreement one at 0.5.
  const AlignedPair opposed = gen_disagreement_pair(spec, 0.5);
  CHECK_THAT(observed_agreement_prob(opposed), WithinAbs(0.5, 1e-12));
}

TEST_CASE("matched high calibration sits near the sweep maximum", "[simulation]") {
  SimSpec spec;
  spec.n_samples = 10000;
  spec.seed = 17;
  spec.mode = Mode::agreement_sweep;
  const double top = capa_pair(gen_calibrated_pair(spec, 0.99)).value;
  CHECK(top > capa_pair(gen_calibrated_pair(spec, 0.9)).value);
  // Closed form at mass 0.99 with accuracy 0.9 and calibration 0.99:
  // (0.3528 * 0.99 - 0.1764) / (0.8136 - 0.6272 * 0.99).
  CHECK_THAT(top, WithinAbs(0.172872 / 0.192672, 1e-9));
}

TEST_CASE("capa increases strictly across the agreement sweep grid",
          "[simulation][property]") {
  SimSpec spec;
  spec.n_samples = 10000;
  spec.seed = 19;
  spec.mode = Mode::agreement_sweep;
  const std::vector<double> grid = linspace(0.01, 0.99, 100);
  double previous = -2.0;
  for (double mass : grid) {
    const double value = capa_pair(gen_calibrated_pair(spec, mass)).value;
    CHECK(value > previous);
    previous = value;
  }
}

TEST_CASE("fully opposed calibrated models push adjusted capa below plain capa",
          "[simulation]") {
  SimSpec spec;
  spec.n_samples = 10000;
  spec.seed = 23;
  spec.mode = Mode::disagreement_sweep;
  spec.accuracy_a = 0.8;
  const AlignedPair pair = gen_disagreement_pair(spec, 0.99);
  const MetricReport adjusted = capa_adjusted(pair);
  const MetricReport plain = capa_pair(pair);
  CHECK(adjusted.value < -0.9);
  CHECK(plain.value > -1.0);
  CHECK(plain.value > adjusted.value);
  // Closed form: c_obs = 0.0198, p-bars 0.794 / 0.206, c_exp = 0.327128.
  CHECK_THAT(adjusted.value, WithinAbs((0.0198 - 0.327128) / 0.327128, 1e-9));
  CHECK_THAT(plain.value, WithinAbs((0.0198 - 0.327128) / (1.0 - 0.327128), 1e-9));
}

TEST_CASE("plain capa stays bounded away from -1 at the 0.9-accuracy endpoint",
          "[simulation]") {
  SimSpec spec;
  spec.n_samples = 10000;
  spec.seed = 29;
  spec.mode = Mode::disagreement_sweep;
  const AlignedPair pair = gen_disagreement_pair(spec, 0.99);
  const double plain = capa_pair(pair).value;
  CHECK(plain > -0.5);
  CHECK_THAT(plain, WithinAbs(-0.172872 / 0.807328, 1e-9));
}

// ---------------------------------------------------------------------------
// Sweep runner
// ---------------------------------------------------------------------------

TEST_CASE("single-point sweep evaluates the spec's own parameter", "[simulation]") {
  SimSpec spec;
  spec.n_samples = 10000;
  spec.accuracy_a = 0.9;
  spec.accuracy_b = 0.7;
  spec.seed = 7;
  spec.sweep_points = 1;
  const std::vector<std::string> metrics = {"capa"};
  const SweepTable table = run_sweep(spec, metrics);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0].parameter == 0.7);
  REQUIRE(table.rows[0].cells.size() == 1);
  CHECK(table.rows[0].cells[0].ok());
  CHECK(std::abs(table.rows[0].cells[0].value) < 0.03);
}

TEST_CASE("independent sweep keeps capa flat while agreement rises", "[simulation]") {
  SimSpec spec;
  spec.n_samples = 10000;
  spec.seed = 31;
  spec.sweep_points = 5;
  const std::vector<std::string> metrics = {"capa", "agreement", "jsd", "cohen-prob"};
  const SweepTable table = run_sweep(spec, metrics);
  REQUIRE(table.rows.size() == 5);
  CHECK(table.parameter_name == "accuracy_b");

  double previous_agreement = -1.0;
  for (const SweepRow& row : table.rows) {
    CHECK(std::abs(row.cells[0].value) < 0.03);  // capa stays at chance
    CHECK(row.cells[1].value > previous_agreement);
    previous_agreement = row.cells[1].value;
  }
  CHECK(table.rows.front().parameter == 0.5);
  CHECK(table.rows.back().parameter == 0.9);
}

TEST_CASE("agreement sweep rows are ordered and capa strictly increases", "[simulation]") {
  SimSpec spec;
  spec.mode = Mode::agreement_sweep;
  spec.n_samples = 10000;
  spec.seed = 37;
  spec.sweep_points = 100;
  const std::vector<std::string> metrics = {"capa"};
  const SweepTable table = run_sweep(spec, metrics);
  REQUIRE(table.rows.size() == 100);
  double previous = -2.0;
  for (const SweepRow& row : table.rows) {
    REQUIRE(row.cells[0].ok());
    CHECK(row.cells[0].value > previous);
    previous = row.cells[0].value;
  }
}

TEST_CASE("metric errors become flagged cells instead of aborting", "[simulation]") {
  SimSpec spec;
  spec.n_samples = 50;
  spec.accuracy_a = 1.0;  // constant correctness: error-corr must flag
  spec.accuracy_b = 0.5;
  spec.seed = 41;
  spec.sweep_points = 1;
  const std::vector<std::string> metrics = {"error-corr", "capa"};
  const SweepTable table = run_sweep(spec, metrics);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0].cells[0].flag == "ConstantVector");
  CHECK(table.rows[0].cells[1].ok());
}

TEST_CASE("identical specs give identical sweep tables", "[simulation][property]") {
  SimSpec spec;
  spec.mode = Mode::agreement_sweep;
  spec.n_samples = 2000;
  spec.seed = 43;
  spec.sweep_points = 7;
  const std::vector<std::string> metrics = {"capa", "jsd"};
  const SweepTable first = run_sweep(spec, metrics);
  const SweepTable second = run_sweep(spec, metrics);
  REQUIRE(first.rows.size() == second.rows.size());
  for (std::size_t r = 0; r < first.rows.size(); ++r) {
    CHECK(first.rows[r].parameter == second.rows[r].parameter);
    for (std::size_t c = 0; c < first.rows[r].cells.size(); ++c) {
      CHECK(first.rows[r].cells[c].value == second.rows[r].cells[c].value);
      CHECK(first.rows[r].cells[c].flag == second.rows[r].cells[c].flag);
    }
  }

  // A different seed must actually matter where the draw is load-bearing:
  // in independent mode the correct-subset overlap is random.
  SimSpec independent = spec;
  independent.mode = Mode::independent;
  const SweepTable base = run_sweep(independent, metrics);
  independent.seed = 44;
  const SweepTable reseeded = run_sweep(independent, metrics);
  bool any_difference = false;
  for (std::size_t r = 0; r < base.rows.size(); ++r) {
    for (std::size_t c = 0; c < base.rows[r].cells.size(); ++c) {
      any_difference |= base.rows[r].cells[c].value != reseeded.rows[r].cells[c].value;
    }
  }
  CHECK(any_difference);
}

TEST_CASE("independent-mode mean capa over thirty seeds is centered on zero",
          "[simulation][property]") {
  SimSpec spec;
  spec.n_samples = 10000;
  spec.accuracy_a = 0.9;
  spec.accuracy_b = 0.7;
  KahanSum sum;
  for (std::uint64_t trial = 0; trial < 30; ++trial) {
    spec.seed = 1000 ^ trial;
    sum.add(capa_pair(gen_independent_pair(spec)).value);
  }
  CHECK(std::abs(sum.value() / 30.0) < 0.01);
}

TEST_CASE("independent-mode capa stays within 0.03 in at least 95 of 100 seeded trials",
          "[simulation][property]") {
  SimSpec spec;
  spec.n_samples = 10000;
  spec.accuracy_a = 0.9;
  spec.accuracy_b = 0.7;
  int within = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    spec.seed = 5000 ^ (trial * 2654435761u);
    if (std::abs(capa_pair(gen_independent_pair(spec)).value) < 0.03) ++within;
  }
  CHECK(within >= 95);
}
