#include "doctest.h"

#include <sstream>

#include "fairaudit/common.hpp"
#include "fairaudit/dataset.hpp"
#include "fairaudit/io.hpp"

using namespace fairaudit;

namespace {

RawAttributeProfile baseline(std::string id = "u") {
  RawAttributeProfile p;
  p.user_id = std::move(id);
  p.gender = Gender::kMale;
  p.ethnicity = Ethnicity::kWhite;
  p.age = 40;
  p.height_cm = 200.0;
  p.weight_kg = 120.0;
  p.heart_condition = Condition::kNo;
  p.hypertension = Condition::kNo;
  p.joint_problem = Condition::kNo;
  p.diabetes = Condition::kNo;
  return p;
}

StepRecord rec(const std::string& user, HourStamp hour, std::int64_t steps,
               Source source = Source::kPhone) {
  return {user, hour, steps, source, ""};
}

// Three full days for one user; the third day sums to `next_total`.
std::vector<StepRecord> three_days(const std::string& user, HourStamp day0, std::int64_t next_total) {
  std::vector<StepRecord> out;
  for (int h = 0; h < 48; ++h) out.push_back(rec(user, day0 * 24 + h, 100 + h));
  out.push_back(rec(user, (day0 + 2) * 24 + 12, next_total));
  return out;
}

}  // namespace

TEST_CASE("binarize: every attribute boundary") {
  struct Case {
    const char* name;
    void (*edit)(RawAttributeProfile&);
    Attribute attribute;
    GroupLabel expected;
  };
  const Case cases[] = {
      {"male", [](RawAttributeProfile& p) { p.gender = Gender::kMale; }, Attribute::kGender, GroupLabel::kMajority},
      {"female", [](RawAttributeProfile& p) { p.gender = Gender::kFemale; }, Attribute::kGender, GroupLabel::kMinority},
      {"gender NA", [](RawAttributeProfile& p) { p.gender = Gender::kNA; }, Attribute::kGender, GroupLabel::kMissing},
      {"white", [](RawAttributeProfile& p) { p.ethnicity = Ethnicity::kWhite; }, Attribute::kEthnicity, GroupLabel::kMajority},
      {"asian", [](RawAttributeProfile& p) { p.ethnicity = Ethnicity::kAsian; }, Attribute::kEthnicity, GroupLabel::kMinority},
      {"age 64", [](RawAttributeProfile& p) { p.age = 64; }, Attribute::kAge, GroupLabel::kMajority},
      {"age 65", [](RawAttributeProfile& p) { p.age = 65; }, Attribute::kAge, GroupLabel::kMinority},
      {"age NA", [](RawAttributeProfile& p) { p.age.reset(); }, Attribute::kAge, GroupLabel::kMissing},
      {"bmi 18.4", [](RawAttributeProfile& p) { p.weight_kg = 73.6; }, Attribute::kBmi, GroupLabel::kMajority},
      {"bmi 18.5", [](RawAttributeProfile& p) { p.weight_kg = 74.0; }, Attribute::kBmi, GroupLabel::kMinority},
      {"bmi 24.9", [](RawAttributeProfile& p) { p.weight_kg = 99.6; }, Attribute::kBmi, GroupLabel::kMinority},
      {"bmi 25.0", [](RawAttributeProfile& p) { p.weight_kg = 100.0; }, Attribute::kBmi, GroupLabel::kMajority},
      {"bmi NA", [](RawAttributeProfile& p) { p.height_cm.reset(); }, Attribute::kBmi, GroupLabel::kMissing},
      {"diabetes yes", [](RawAttributeProfile& p) { p.diabetes = Condition::kYes; }, Attribute::kDiabetes, GroupLabel::kMinority},
      {"diabetes no", [](RawAttributeProfile& p) { p.diabetes = Condition::kNo; }, Attribute::kDiabetes, GroupLabel::kMajority},
      {"diabetes NA", [](RawAttributeProfile& p) { p.diabetes = Condition::kNA; }, Attribute::kDiabetes, GroupLabel::kMissing},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    auto p = baseline();
    c.edit(p);
    CHECK(binarize(p)[c.attribute] == c.expected);
  }

  auto p = baseline();
  p.age = 70;
  CHECK(binarize(p)[Attribute::kAge] == GroupLabel::kMinority);
  p.weight_kg = 88.0;  // 22.0
  CHECK(binarize(p)[Attribute::kBmi] == GroupLabel::kMinority);
  for (auto c : {Condition::kYes, Condition::kNo, Condition::kNA}) {
    p.heart_condition = p.hypertension = p.joint_problem = c;
    const auto b = binarize(p);
    const auto want = c == Condition::kYes  ? GroupLabel::kMinority
                      : c == Condition::kNo ? GroupLabel::kMajority
                                            : GroupLabel::kMissing;
    CHECK(b[Attribute::kHeartCondition] == want);
    CHECK(b[Attribute::kHypertension] == want);
    CHECK(b[Attribute::kJointProblem] == want);
  }
}

TEST_CASE("binarize rejects invalid raw values") {
  auto p = baseline();
  p.age = 131;
  CHECK_THROWS_AS(binarize(p), DataError);
  p = baseline();
  p.height_cm = 0.0;
  CHECK_THROWS_AS(binarize(p), DataError);
  p = baseline();
  p.weight_kg = -1.0;
  CHECK_THROWS_AS(binarize(p), DataError);
}

TEST_CASE("build_windows lays out 48 hours and the next-day total") {
  std::vector<StepRecord> records;
  const HourStamp d0 = 16861;  // 2016-03-01
  for (int h = 0; h < 47; ++h) records.push_back(rec("a", d0 * 24 + h, h));
  records.push_back(rec("a", d0 * 24 + 47, 300));
  records.push_back(rec("a", (d0 + 2) * 24 + 9, 5000));
  records.push_back(rec("a", (d0 + 2) * 24 + 18, 3500));
  const auto windows = build_windows(records, FixedThreshold{7500});
  REQUIRE(windows.size() == 1);
  const auto& w = windows[0];
  CHECK(w.history[0] == 0);
  CHECK(w.history[46] == 46);
  CHECK(w.history[47] == 300);
  CHECK(w.raw_next_day_total == 8500);
  CHECK(w.label == ActivityLabel::kHigh);
  CHECK(w.day_start == (d0 + 2) * 24);
}

TEST_CASE("build_windows: median split, zero fill, max across sources, order") {
  std::vector<StepRecord> records;
  const std::int64_t totals[] = {2000, 5000, 8000, 10000};
  for (int u = 0; u < 4; ++u) {
    auto r = three_days("u" + std::to_string(u), 100, totals[u]);
    records.insert(records.end(), r.begin(), r.end());
  }
  auto windows = build_windows(records, MedianSplit{});
  REQUIRE(windows.size() == 4);
  for (const auto& w : windows) {
    const bool high = w.raw_next_day_total >= 8000;
    CHECK(w.label == (high ? ActivityLabel::kHigh : ActivityLabel::kLow));
  }
  CHECK(median_threshold(windows) == doctest::Approx(6500));

  // All-zero history and next day.
  std::vector<StepRecord> zeros;
  for (int d = 0; d < 3; ++d) zeros.push_back(rec("z", (200 + d) * 24, 0));
  const auto zw = build_windows(zeros, FixedThreshold{1});
  REQUIRE(zw.size() == 1);
  CHECK(zw[0].label == ActivityLabel::kLow);
  for (auto v : zw[0].history) CHECK(v == 0);

  // Two days only.
  std::vector<StepRecord> short_user = {rec("s", 0, 5), rec("s", 24, 5)};
  CHECK(build_windows(short_user, FixedThreshold{1}).empty());

  // A gap day breaks the chain.
  std::vector<StepRecord> gap = {rec("g", 0, 5), rec("g", 24, 5), rec("g", 72, 5)};
  CHECK(build_windows(gap, FixedThreshold{1}).empty());

  // Overlapping sources take the max; record order does not matter.
  std::vector<StepRecord> multi = three_days("m", 10, 4000);
  multi.push_back(rec("m", 10 * 24 + 5, 900, Source::kWatch));
  multi.push_back(rec("m", 12 * 24 + 12, 6000, Source::kWatch));
  auto forward = build_windows(multi, FixedThreshold{5000});
  std::reverse(multi.begin(), multi.end());
  auto backward = build_windows(multi, FixedThreshold{5000});
  REQUIRE(forward.size() == 1);
  CHECK(forward == backward);
  CHECK(forward[0].history[5] == 900);
  CHECK(forward[0].raw_next_day_total == 6000);
}

TEST_CASE("partition strategies") {
  std::vector<BinarizedProfile> profiles;
  auto add = [&](const char* id, Gender g, Condition d) {
    auto p = baseline(id);
    p.gender = g;
    p.diabetes = d;
    profiles.push_back(binarize(p));
  };
  add("dw", Gender::kFemale, Condition::kYes);
  add("dm", Gender::kMale, Condition::kYes);
  add("nw", Gender::kFemale, Condition::kNo);
  add("nm", Gender::kMale, Condition::kNo);
  add("na", Gender::kNA, Condition::kNo);

  auto mm = partition(profiles, Attribute::kDiabetes, Attribute::kGender,
                      PartitionStrategy::kMinorityMinorityVsRest);
  CHECK(mm.g0_users == std::set<std::string, std::less<>>{"dw"});
  CHECK(mm.g1_users == std::set<std::string, std::less<>>{"dm", "nw", "nm"});

  auto jj = partition(profiles, Attribute::kDiabetes, Attribute::kGender,
                      PartitionStrategy::kMajorityMajorityVsRest);
  CHECK(jj.g1_users == std::set<std::string, std::less<>>{"nm"});
  CHECK(jj.g0_users.size() == 3);

  CHECK_THROWS_AS(partition(profiles, Attribute::kGender, Attribute::kGender,
                            PartitionStrategy::kMinorityMinorityVsRest),
                  ConfigError);

  std::vector<BinarizedProfile> men = {profiles[1], profiles[3]};
  auto single = partition(men, Attribute::kGender);
  CHECK(single.g0_users.empty());
  CHECK(single.degenerate());
  CHECK(single.group_of("dm") == Group::kG1);
  CHECK_FALSE(single.group_of("nobody").has_value());
}

TEST_CASE("split is user-disjoint and seeded") {
  std::vector<StepRecord> records;
  for (int u = 0; u < 10; ++u) {
    for (int d = 0; d < 5; ++d) records.push_back(rec("u" + std::to_string(u), (50 + d) * 24 + 3, 1000 * d));
  }
  const auto windows = build_windows(records, FixedThreshold{2500});
  REQUIRE(windows.size() == 30);
  const auto a = split(windows, 0.2, 7);
  const auto b = split(windows, 0.2, 7);
  CHECK(a.test_users.size() == 2);
  CHECK(a.test_users == b.test_users);
  CHECK(a.train.size() + a.test.size() == windows.size());
  for (const auto& w : a.train) {
    CHECK(std::find(a.test_users.begin(), a.test_users.end(), w.user_id) == a.test_users.end());
  }
  const auto c = split(windows, 0.2, 8);
  CHECK(c.test_users.size() == 2);
  CHECK(c.test.size() == a.test.size());

  std::vector<LabeledWindow> one(windows.begin(), windows.begin() + 3);
  CHECK_THROWS_AS(split(one, 0.2, 1), DataError);
  CHECK_THROWS_AS(split(windows, 1.0, 1), ConfigError);
}

TEST_CASE("timestamps") {
  CHECK(parse_timestamp("1970-01-02T03:00:00") == 27);
  CHECK(parse_timestamp("2016-03-01 05:59:59Z") == parse_timestamp("2016-03-01T05"));
  CHECK(parse_timestamp("2016-03-01T05:00:00+02:00") == parse_timestamp("2016-03-01T05:00"));
  CHECK(format_timestamp(parse_timestamp("2016-02-29T23:00:00")) == "2016-02-29T23:00:00");
  CHECK(day_of(-1) == -1);
  CHECK_THROWS_AS(parse_timestamp("2016-13-01T00"), DataError);
  CHECK_THROWS_AS(parse_timestamp("yesterday"), DataError);
}

TEST_CASE("csv round trip and validation") {
  std::vector<StepRecord> records = {
      {"u1", 100, 42, Source::kWatch, "Watch, \"Series 2\""},
      {"u1", 101, 0, Source::kPhone, ""},
      {"u2", 5, 7, Source::kThirdParty, "Fitbit"},
  };
  std::stringstream out;
  write_records(out, records);
  const auto back = read_records(out, "mem");
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].user_id == records[i].user_id);
    CHECK(back[i].hour == records[i].hour);
    CHECK(back[i].steps == records[i].steps);
    CHECK(back[i].source == records[i].source);
    CHECK(back[i].device_model == records[i].device_model);
  }

  std::vector<RawAttributeProfile> profiles = {baseline("a"), baseline("b")};
  profiles[1].age.reset();
  profiles[1].ethnicity = Ethnicity::kPacificIslander;
  std::stringstream pout;
  write_profiles(pout, profiles);
  const auto pback = read_profiles(pout, "mem");
  REQUIRE(pback.size() == 2);
  CHECK(binarize(pback[0]) == binarize(profiles[0]));
  CHECK(binarize(pback[1]) == binarize(profiles[1]));

  records.push_back(records[0]);
  CHECK_THROWS_AS(validate_records(records), DataError);

  std::stringstream bad("user_id,timestamp,steps,source,device_model\nu1,2016-01-01T00,-3,phone,\n");
  try {
    read_records(bad, "steps.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("steps.csv") != std::string::npos);
  }
  CHECK_THROWS_AS(read_records(std::filesystem::path("/nonexistent/records.csv")), DataError);
}

TEST_CASE("awareness extension") {
  auto p = baseline("a");
  p.gender = Gender::kFemale;
  auto q = baseline("b");
  q.gender = Gender::kNA;
  std::vector<BinarizedProfile> bp = {binarize(p), binarize(q)};
  const auto index = index_profiles(bp);
  auto records = three_days("a", 0, 100);
  auto rb = three_days("b", 0, 100);
  records.insert(records.end(), rb.begin(), rb.end());
  const auto windows = build_windows(records, FixedThreshold{50});
  const auto aware = with_awareness(windows, index);
  REQUIRE(aware.size() == 1);
  CHECK(aware[0].user_id == "a");
  REQUIRE(aware[0].aware_extension);
  CHECK((*aware[0].aware_extension)[0] == 1);
  CHECK((*aware[0].aware_extension)[2] == 0);
}

TEST_CASE("derived seeds and portable rng") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  Rng r(3);
  double sum = 0;
  for (int i = 0; i < 20000; ++i) sum += r.normal();
  CHECK(std::abs(sum / 20000) < 0.05);
}
