#include "doctest.h"

#include <cmath>

#include "fairaudit/common.hpp"
#include "fairaudit/metrics.hpp"
#include "fairaudit/stats.hpp"
#include "oracles.hpp"

using namespace fairaudit;

namespace {

ConfusionCounts cc(std::int64_t tp, std::int64_t fp, std::int64_t fn, std::int64_t tn) {
  return {tp, fp, fn, tn};
}

// Group with `pos` of `n` predicted positive; labels are irrelevant for DIR.
ConfusionCounts selected(std::int64_t pos, std::int64_t n) { return cc(pos, 0, 0, n - pos); }

void expect_matches(const MetricValue& got, const std::optional<oracle::Q>& want) {
  REQUIRE(got.defined() == want.has_value());
  if (want) CHECK(*got.value == oracle::to_double(*want));
}

}  // namespace

TEST_CASE("rates") {
  const auto r = rates(cc(40, 0, 10, 50));
  CHECK(*r.fnr == doctest::Approx(0.2));
  CHECK(*r.fpr == 0.0);
  CHECK(*r.selection_rate == doctest::Approx(0.4));
  CHECK(*r.base_rate == doctest::Approx(0.5));
  const auto z = rates(cc(0, 0, 0, 0));
  CHECK_FALSE(z.fdr);
  CHECK_FALSE(z.for_);
  CHECK_FALSE(z.fnr);
  CHECK_FALSE(z.tnr);
  CHECK_FALSE(z.tpr);
  CHECK_FALSE(z.fpr);
  CHECK_FALSE(z.selection_rate);
  CHECK_FALSE(z.error_rate);
  CHECK(*rates(cc(0, 0, 1000, 2000)).error_rate == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("disparate impact and parity difference") {
  GroupOutcomes o{selected(8, 10), selected(10, 10)};
  CHECK(*disparate_impact_ratio(o, RateMode::kSelectionRate).value == doctest::Approx(0.8));
  o = {selected(3, 10), selected(3, 10)};
  CHECK(*disparate_impact_ratio(o, RateMode::kSelectionRate).value == 1.0);
  CHECK(*statistical_parity_difference(o).value == 0.0);
  o = {selected(0, 10), selected(4, 10)};
  CHECK(*disparate_impact_ratio(o, RateMode::kSelectionRate).value == 0.0);
  o = {selected(3, 10), selected(0, 10)};
  CHECK_FALSE(disparate_impact_ratio(o, RateMode::kSelectionRate).defined());
  o = {selected(3, 10), selected(6, 10)};
  CHECK(*statistical_parity_difference(o).value == doctest::Approx(-0.3));
  CHECK(*statistical_parity_difference(o.swapped()).value == doctest::Approx(0.3));
  o = {selected(3, 10), ConfusionCounts{}};
  CHECK_FALSE(disparate_impact_ratio(o, RateMode::kSelectionRate).defined());
}

TEST_CASE("hybrid and wysiwyg") {
  const GroupOutcomes same{cc(3, 2, 1, 4), cc(3, 2, 1, 4)};
  const auto h = hybrid_ratios(same);
  CHECK(*h.fpr_ratio.value == 1.0);
  CHECK(*h.fnr_ratio.value == 1.0);
  CHECK(*h.for_ratio.value == 1.0);
  CHECK(*h.err.value == 1.0);
  const auto w = wysiwyg_differences(same);
  CHECK(*w.eod.value == 0.0);
  CHECK(*w.aod.value == 0.0);

  CHECK_FALSE(hybrid_ratios({cc(3, 0, 1, 4), cc(3, 0, 0, 4)}).fnr_ratio.defined());

  // TPR 0.5 vs 0.8
  CHECK(*wysiwyg_differences({cc(5, 0, 5, 10), cc(8, 0, 2, 10)}).eod.value ==
        doctest::Approx(-0.3));
  // FPR 0.2 vs 0.1, TPR 0.6 vs 0.9
  const GroupOutcomes a{cc(6, 2, 4, 8), cc(9, 1, 1, 9)};
  CHECK(*wysiwyg_differences(a).aod.value == doctest::Approx(-0.1));
}

TEST_CASE("error-rate ratio hides total misclassification of the minority") {
  // Women: 2000 low, 1000 high, all high missed. Men: 3500 low, 4500 high,
  // 2640 high missed. No false positives.
  const GroupOutcomes o{cc(0, 0, 1000, 2000), cc(4500 - 2640, 0, 2640, 3500)};
  const auto r0 = rates(o.g0);
  const auto r1 = rates(o.g1);
  CHECK(std::abs(*r0.error_rate - 1.0 / 3.0) < 1e-9);
  CHECK(std::abs(*r1.error_rate - 0.33) < 1e-9);
  CHECK(std::abs(*hybrid_ratios(o).err.value - (1.0 / 3.0) / 0.33) < 1e-9);
  CHECK(*disparate_impact_ratio(o, RateMode::kSelectionRate).value == 0.0);
}

TEST_CASE("metrics match exact rational recomputation") {
  Rng rng(11);
  for (int trial = 0; trial < 20000; ++trial) {
    ConfusionCounts u, p;
    for (auto* c : {&u.tp, &u.fp, &u.fn, &u.tn, &p.tp, &p.fp, &p.fn, &p.tn}) {
      *c = static_cast<std::int64_t>(rng.below(7));
    }
    const GroupOutcomes o{u, p};
    const auto want = oracle::metrics({u.tp, u.fp, u.fn, u.tn}, {p.tp, p.fp, p.fn, p.tn});
    const auto got = all_metrics(o);
    expect_matches(got.dir_selection, want.dir_sel);
    expect_matches(got.dir_base, want.dir_base);
    expect_matches(got.spd, want.spd);
    expect_matches(got.hybrid.fpr_ratio, want.fpr_r);
    expect_matches(got.hybrid.fnr_ratio, want.fnr_r);
    expect_matches(got.hybrid.for_ratio, want.for_r);
    expect_matches(got.hybrid.err, want.err);
    expect_matches(got.wysiwyg.eod, want.eod);
    expect_matches(got.wysiwyg.aod, want.aod);
  }
}

TEST_CASE("base-rate DIR equals selection DIR of a perfect predictor") {
  const GroupOutcomes data{cc(0, 0, 3, 7), cc(0, 0, 6, 4)};
  const GroupOutcomes perfect{cc(3, 0, 0, 7), cc(6, 0, 0, 4)};
  CHECK(*disparate_impact_ratio(data, RateMode::kBaseRate).value ==
        *disparate_impact_ratio(perfect, RateMode::kSelectionRate).value);
}

TEST_CASE("verdicts") {
  auto v = [](Metric m, double x) { return verdict(MetricValue{m, x})->harmed; };
  CHECK(v(Metric::kDIR, 0.5) == Harmed::kUnprivileged);
  CHECK(v(Metric::kDIR, 1.4) == Harmed::kPrivileged);
  CHECK(v(Metric::kDIR, 0.8) == Harmed::kNeither);
  CHECK(v(Metric::kDIR, 1.25) == Harmed::kNeither);
  CHECK(v(Metric::kFPRRatio, 1.5) == Harmed::kPrivileged);
  CHECK(v(Metric::kFPRRatio, 0.5) == Harmed::kUnprivileged);
  CHECK(v(Metric::kFORRatio, 1.5) == Harmed::kUnprivileged);
  CHECK(v(Metric::kFNRRatio, 1.5) == Harmed::kUnprivileged);
  CHECK(v(Metric::kERR, 0.5) == Harmed::kPrivileged);
  CHECK(v(Metric::kSPD, -0.3) == Harmed::kUnprivileged);
  CHECK(v(Metric::kSPD, 0.3) == Harmed::kPrivileged);
  CHECK(v(Metric::kSPD, 0.0) == Harmed::kNeither);
  CHECK(v(Metric::kEOD, -0.1) == Harmed::kNeither);
  CHECK(v(Metric::kAOD, -0.2) == Harmed::kUnprivileged);
  CHECK(verdict(MetricValue{Metric::kAOD, 0.0})->analogical);
  CHECK_FALSE(verdict(MetricValue{Metric::kDIR, std::nullopt}));
  Bands wide{0.5, 2.0, -0.5, 0.5};
  CHECK(verdict(MetricValue{Metric::kDIR, 0.6}, wide)->harmed == Harmed::kNeither);
}

TEST_CASE("proportion tests") {
  const auto same = two_proportion_z_test(30, 100, 60, 200);
  CHECK(same.p_value == 1.0);
  // 28% of 500 vs 46% of 500
  const auto watch = compare_proportions(140, 500, 230, 500);
  CHECK(watch.test == ProportionTest::kPooledZ);
  CHECK(watch.p_value < 0.05);
  CHECK(compare_proportions(2, 10, 5, 10).test == ProportionTest::kFisherExact);
  CHECK(two_proportion_z_test(0, 10, 0, 10).p_value == 1.0);

  const auto a = two_proportion_z_test(10, 40, 25, 50);
  const auto b = two_proportion_z_test(25, 50, 10, 40);
  CHECK(a.p_value == doctest::Approx(b.p_value));
}

TEST_CASE("fisher exact matches hypergeometric enumeration") {
  for (int n0 = 1; n0 <= 12; ++n0) {
    for (int n1 = 1; n1 <= 12; n1 += 3) {
      for (int x0 = 0; x0 <= n0; ++x0) {
        for (int x1 = 0; x1 <= n1; x1 += 2) {
          CAPTURE(n0);
          CAPTURE(n1);
          CAPTURE(x0);
          CAPTURE(x1);
          CHECK(fisher_exact_p(x0, n0, x1, n1) ==
                doctest::Approx(oracle::fisher(x0, n0, x1, n1)).epsilon(1e-9));
        }
      }
    }
  }
  // Decision at realistic proportions agrees between the z-test and the
  // exact enumeration.
  const double exact = oracle::fisher(14, 50, 23, 50);
  const double z = two_proportion_z_test(14, 50, 23, 50).p_value;
  CHECK((exact < 0.05) == (z < 0.05));
}
