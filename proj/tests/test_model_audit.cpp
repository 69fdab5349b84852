#include "doctest.h"

#include <algorithm>

#include "fairaudit/common.hpp"
#include "fairaudit/model_audit.hpp"
#include "oracles.hpp"

using namespace fairaudit;

namespace {

struct Fixture {
  std::vector<BinarizedProfile> profiles;
  std::vector<LabeledWindow> windows;
  GroupPartition part;
};

// G0 users "a*", G1 users "b*", one window each.
Fixture groups(int pos0, int neg0, int pos1, int neg1) {
  Fixture f;
  auto add = [&](const std::string& id, bool minority, bool high) {
    BinarizedProfile p;
    p.user_id = id;
    p.groups.fill(GroupLabel::kMajority);
    if (minority) p.groups[static_cast<std::size_t>(Attribute::kGender)] = GroupLabel::kMinority;
    f.profiles.push_back(p);
    LabeledWindow w;
    w.user_id = id;
    w.label = high ? ActivityLabel::kHigh : ActivityLabel::kLow;
    f.windows.push_back(w);
  };
  int n = 0;
  for (int i = 0; i < pos0; ++i) add("a" + std::to_string(n++), true, true);
  for (int i = 0; i < neg0; ++i) add("a" + std::to_string(n++), true, false);
  for (int i = 0; i < pos1; ++i) add("b" + std::to_string(n++), false, true);
  for (int i = 0; i < neg1; ++i) add("b" + std::to_string(n++), false, false);
  f.part = partition(f.profiles, Attribute::kGender);
  return f;
}

std::array<std::int64_t, 4> cells(std::span<const LabeledWindow> ws, const GroupPartition& part) {
  std::array<std::int64_t, 4> c{};
  for (const auto& w : ws) {
    const auto g = part.group_of(w.user_id);
    if (!g) continue;
    c[(*g == Group::kG0 ? 0 : 2) + (w.positive() ? 0 : 1)]++;
  }
  return c;
}

RemovalCell to_cell(int oracle_cell) {
  switch (oracle_cell) {
    case 0:
      return RemovalCell::kPositivesG0;
    case 1:
      return RemovalCell::kNegativesG0;
    case 2:
      return RemovalCell::kPositivesG1;
    default:
      return RemovalCell::kNegativesG1;
  }
}

}  // namespace

TEST_CASE("tally") {
  auto f = groups(2, 3, 4, 1);
  std::vector<ActivityLabel> pred(f.windows.size(), ActivityLabel::kHigh);
  LabeledWindow stray;
  stray.user_id = "nobody";
  f.windows.push_back(stray);
  pred.push_back(ActivityLabel::kHigh);
  const auto o = tally(f.windows, pred, f.part);
  CHECK(o.g0 == ConfusionCounts{2, 3, 0, 0});
  CHECK(o.g1 == ConfusionCounts{4, 1, 0, 0});
}

TEST_CASE("aggregation: perfect and constant predictors") {
  const auto f = groups(3, 7, 6, 4);
  const auto perfect = audit_partition(perfect_classifier(), ModelVariant::kUnaware, f.windows, f.part);
  CHECK(*perfect.dir.value == *perfect.data_dir.value);
  CHECK(*perfect.dir.value == doctest::Approx(0.5));
  CHECK(perfect.propagation == Propagation::kPropagated);
  CHECK(perfect.verdict->harmed == Harmed::kUnprivileged);

  const auto high = audit_partition(constant_classifier(ActivityLabel::kHigh), ModelVariant::kUnaware,
                                    f.windows, f.part);
  CHECK(*high.dir.value == 1.0);
  CHECK(high.propagation == Propagation::kMitigated);

  const auto low = audit_partition(constant_classifier(ActivityLabel::kLow), ModelVariant::kUnaware,
                                   f.windows, f.part);
  CHECK_FALSE(low.dir.defined());
  CHECK_FALSE(low.propagation);

  const GroupPartition parts[] = {f.part, f.part};
  CHECK(audit_aggregation(perfect_classifier(), ModelVariant::kAware, f.windows, parts).size() == 2);
}

TEST_CASE("propagation classification") {
  auto dir = [](double v) { return MetricValue{Metric::kDIR, v}; };
  CHECK(classify_propagation(dir(0.5), dir(0.5)) == Propagation::kPropagated);
  CHECK(classify_propagation(dir(0.3), dir(0.5)) == Propagation::kAmplified);
  CHECK(classify_propagation(dir(0.9), dir(0.5)) == Propagation::kMitigated);
  CHECK(classify_propagation(dir(1.5), dir(0.5)) == Propagation::kPropagated);
  CHECK(classify_propagation(dir(0.54), dir(0.5)) == Propagation::kPropagated);
}

TEST_CASE("intersectional enumeration") {
  std::vector<BinarizedProfile> profiles;
  std::vector<LabeledWindow> windows;
  int n = 0;
  for (auto g : {GroupLabel::kMinority, GroupLabel::kMajority}) {
    for (auto d : {GroupLabel::kMinority, GroupLabel::kMajority}) {
      for (int k = 0; k < 4; ++k) {
        BinarizedProfile p;
        p.user_id = "u" + std::to_string(n++);
        p.groups.fill(GroupLabel::kMajority);
        p.groups[static_cast<std::size_t>(Attribute::kGender)] = g;
        p.groups[static_cast<std::size_t>(Attribute::kDiabetes)] = d;
        profiles.push_back(p);
        LabeledWindow w;
        w.user_id = p.user_id;
        // diabetic women never High
        const bool dw = g == GroupLabel::kMinority && d == GroupLabel::kMinority;
        w.label = !dw && k % 2 == 0 ? ActivityLabel::kHigh : ActivityLabel::kLow;
        windows.push_back(w);
      }
    }
  }
  const std::pair<Attribute, Attribute> pairs[] = {{Attribute::kDiabetes, Attribute::kGender}};
  const auto found = audit_intersectional(perfect_classifier(), ModelVariant::kUnaware, windows,
                                          profiles, pairs);
  REQUIRE(found.size() == 2);
  CHECK(found[0].strategy == PartitionStrategy::kMinorityMinorityVsRest);
  CHECK(found[0].finding.outcomes.g0.total() == 4);
  CHECK(*found[0].finding.dir.value == 0.0);
  CHECK(found[1].strategy == PartitionStrategy::kMajorityMajorityVsRest);
  CHECK(found[1].finding.outcomes.g1.total() == 4);
  CHECK(found[0].first_dir.defined());

  // No diabetic women in the test set: skipped.
  std::vector<LabeledWindow> without;
  for (std::size_t i = 4; i < windows.size(); ++i) without.push_back(windows[i]);
  const auto skipped = audit_intersectional(perfect_classifier(), ModelVariant::kUnaware, without,
                                            profiles, pairs);
  CHECK(skipped[0].skipped);
  CHECK_FALSE(skipped[1].skipped);
}

TEST_CASE("learning audit") {
  const auto f = groups(5, 5, 5, 5);
  const auto same = audit_learning(perfect_classifier(), perfect_classifier(), f.windows, f.part);
  CHECK(*same.delta == 0.0);

  // A branch that never selects the minority.
  BatchClassifier biased = [&](std::span<const LabeledWindow> ws) {
    std::vector<ActivityLabel> out;
    for (const auto& w : ws) {
      out.push_back(f.part.group_of(w.user_id) == Group::kG0 ? ActivityLabel::kLow : w.label);
    }
    return out;
  };
  const auto worse = audit_learning(perfect_classifier(), biased, f.windows, f.part);
  CHECK(*worse.dir_personalized.value == 0.0);
  CHECK(*worse.delta == doctest::Approx(1.0));
  CHECK(worse.verdict_personalized->harmed == Harmed::kUnprivileged);
}

TEST_CASE("parity benchmark: worked subsample") {
  // A: 10 positive / 10 negative; B: 5 positive / 15 negative.
  const auto f = groups(5, 15, 10, 10);
  const auto want = oracle::best_removal(5, 15, 10, 10);
  REQUIRE(want.exact);
  CHECK(want.k == 10);
  CHECK(to_cell(want.cell) == RemovalCell::kNegativesG0);

  const auto b = make_parity_benchmark(f.windows, f.part, 0.05, 1);
  CHECK(b.cell == RemovalCell::kNegativesG0);
  CHECK(b.removed == 10);
  CHECK(b.exact);
  CHECK(*b.t0_dir.value == 1.0);
  CHECK(*b.t1_dir.value == doctest::Approx(0.5));
  const auto t0 = b.t0(f.windows);
  CHECK(t0.size() == f.windows.size() - 10);
  CHECK(std::is_sorted(b.t0_indices.begin(), b.t0_indices.end()));
}

TEST_CASE("parity benchmark agrees with brute force") {
  Rng rng(77);
  int exact = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int p0 = 1 + static_cast<int>(rng.below(12)), n0 = 1 + static_cast<int>(rng.below(12));
    const int p1 = 1 + static_cast<int>(rng.below(12)), n1 = 1 + static_cast<int>(rng.below(12));
    const auto f = groups(p0, n0, p1, n1);
    const auto want = oracle::best_removal(p0, n0, p1, n1);
    CAPTURE(p0);
    CAPTURE(n0);
    CAPTURE(p1);
    CAPTURE(n1);
    if (want.distance > 0.05) {
      CHECK_THROWS_AS(make_parity_benchmark(f.windows, f.part, 0.05, trial), AuditError);
      continue;
    }
    const auto b = make_parity_benchmark(f.windows, f.part, 0.05, trial);
    const auto before = cells(f.windows, f.part);
    const auto after = cells(b.t0(f.windows), f.part);
    std::int64_t removed = 0;
    for (int c = 0; c < 4; ++c) removed += before[c] - after[c];
    CHECK(removed == b.removed);
    CHECK(std::abs(*b.t0_dir.value - 1.0) <= 0.05);
    if (want.exact) {
      ++exact;
      CHECK(b.exact);
      CHECK(b.removed == want.k);
      CHECK(*b.t0_dir.value == 1.0);
    } else {
      CHECK(std::abs(std::abs(*b.t0_dir.value - 1.0) - want.distance) < 1e-12);
    }
  }
  CHECK(exact > 0);
}

TEST_CASE("parity benchmark edge cases") {
  const auto fair = groups(5, 5, 3, 3);
  const auto b = make_parity_benchmark(fair.windows, fair.part, 0.05, 3);
  CHECK(b.removed == 0);
  CHECK(b.t0_indices.size() == fair.windows.size());

  const auto none = groups(0, 10, 5, 5);
  CHECK_THROWS_AS(make_parity_benchmark(none.windows, none.part, 0.05, 3), AuditError);

  const auto f = groups(3, 7, 6, 4);
  const auto x = make_parity_benchmark(f.windows, f.part, 0.05, 9);
  const auto y = make_parity_benchmark(f.windows, f.part, 0.05, 9);
  CHECK(x.t0_indices == y.t0_indices);
}

TEST_CASE("evaluation audit") {
  const auto f = groups(3, 7, 6, 4);
  const auto b = make_parity_benchmark(f.windows, f.part, 0.05, 2);
  const auto c = audit_evaluation(constant_classifier(ActivityLabel::kHigh), ModelVariant::kUnaware,
                                  f.windows, b, f.part);
  CHECK(*c.dir_t1.value == 1.0);
  CHECK(*c.dir_t0.value == 1.0);
  CHECK_FALSE(*c.hiding);
  const auto p = audit_evaluation(perfect_classifier(), ModelVariant::kUnaware, f.windows, b, f.part);
  CHECK(*p.dir_t1.value == doctest::Approx(0.5));
  CHECK(std::abs(*p.dir_t0.value - 1.0) <= 0.05);
  CHECK(*p.hiding);
}
