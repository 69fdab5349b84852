#include "doctest.h"

#include <cmath>
#include <sstream>

#include "fairaudit/common.hpp"
#include "fairaudit/data_audit.hpp"
#include "fairaudit/io.hpp"
#include "fairaudit/synth.hpp"

using namespace fairaudit;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n_users = 60;
  s.n_days = 5;
  s.seed = seed;
  s.g0.base_rate = 0.3;
  s.g1.base_rate = 0.6;
  return s;
}

std::string dump(const SynthCorpus& c) {
  std::stringstream out;
  write_records(out, c.records);
  write_profiles(out, c.profiles);
  out << to_json(c.truth).dump();
  return out.str();
}

double base_dir(const SynthCorpus& c, const SynthSpec& s) {
  std::vector<BinarizedProfile> bp;
  for (const auto& p : c.profiles) bp.push_back(binarize(p));
  const auto windows = build_windows(c.records, FixedThreshold{s.threshold});
  return *audit_uneven_sampling(windows, partition(bp, s.target)).base_rate_dir.value;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  CHECK(dump(generate(small_spec(7))) == dump(generate(small_spec(7))));
  CHECK(dump(generate(small_spec(7))) != dump(generate(small_spec(8))));
}

TEST_CASE("ground truth equals a recount of the written files") {
  const auto spec = small_spec(3);
  const auto corpus = generate(spec);
  std::stringstream rec, prof;
  write_records(rec, corpus.records);
  write_profiles(prof, corpus.profiles);
  const auto records = read_records(rec, "records");
  const auto profiles = read_profiles(prof, "profiles");
  auto recount = tally_ground_truth(records, profiles, spec.threshold);
  recount.seed = spec.seed;
  recount.warnings = corpus.truth.warnings;
  CHECK(to_json(recount) == to_json(corpus.truth));

  const auto& t = corpus.truth.attributes[static_cast<std::size_t>(spec.target)];
  std::vector<BinarizedProfile> bp;
  for (const auto& p : profiles) bp.push_back(binarize(p));
  const auto windows = build_windows(records, FixedThreshold{spec.threshold});
  const auto base = tally_base_rates(windows, partition(bp, spec.target));
  CHECK(base.g0.actual_positive() == t.positives_g0);
  CHECK(base.g1.actual_positive() == t.positives_g1);
  CHECK(base.g0.total() == t.windows_g0);
  CHECK(corpus.truth.windows == static_cast<std::int64_t>(windows.size()));
  validate_records(records);
}

TEST_CASE("exact minority count and missing attributes") {
  auto spec = small_spec(5);
  spec.target_minority_users = 17;
  spec.missing_probability[Attribute::kAge] = 1.0;
  const auto corpus = generate(spec);
  const auto& g = corpus.truth.attributes[static_cast<std::size_t>(Attribute::kGender)];
  CHECK(g.minority_users == 17);
  CHECK(g.majority_users == 43);
  for (const auto& p : corpus.profiles) CHECK_FALSE(p.age.has_value());
}

TEST_CASE("empty corpus") {
  auto spec = small_spec(1);
  spec.n_users = 0;
  const auto corpus = generate(spec);
  CHECK(corpus.records.empty());
  CHECK(corpus.profiles.empty());
  std::stringstream rec;
  write_records(rec, corpus.records);
  CHECK(read_records(rec, "r").empty());
}

TEST_CASE("spec validation and json") {
  auto spec = small_spec(1);
  spec.g0.base_rate = 1.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec(1);
  spec.persistence = -0.1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  spec = small_spec(9);
  spec.minority_probability[Attribute::kBmi] = 0.25;
  nlohmann::json j = spec;
  const auto back = j.get<SynthSpec>();
  CHECK(nlohmann::json(back) == j);
  j["unknown_key"] = 1;
  CHECK_THROWS_AS(j.get<SynthSpec>(), ConfigError);
}

TEST_CASE("measurement skew") {
  const auto corpus = generate(small_spec(2));
  const auto same = inject_measurement_skew(corpus.records, Source::kPhone, 1.0, 0.0, 1);
  REQUIRE(same.size() == corpus.records.size());
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same[i].steps == corpus.records[i].steps);

  const auto scaled = inject_measurement_skew(corpus.records, Source::kPhone, 0.8, 0.0, 1);
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    const auto& r = corpus.records[i];
    const auto want = r.source == Source::kPhone ? std::llround(0.8 * static_cast<double>(r.steps)) : r.steps;
    CHECK(scaled[i].steps == want);
  }
  CHECK_THROWS_AS(inject_measurement_skew(corpus.records, Source::kPhone, 0.0, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(inject_measurement_skew(corpus.records, Source::kPhone, 1.0, -1.0, 1), ConfigError);
}

TEST_CASE("skewing the minority's dominant source lowers base-rate DIR") {
  int lower = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthSpec s;
    s.n_users = 300;
    s.seed = seed;
    s.g0.source_ownership = {0.1, 1.0, 0.0};  // minority mostly on watches
    s.g1.source_ownership = {1.0, 0.1, 0.0};
    const auto clean = generate(s);
    SynthCorpus skewed = clean;
    skewed.records = inject_measurement_skew(clean.records, Source::kWatch, 0.8, 0.0, seed);
    lower += base_dir(skewed, s) < base_dir(clean, s);
  }
  CHECK(lower >= 8);
}

TEST_CASE("minority base rate moves the ingested DIR monotonically") {
  double previous = 0.0;
  for (double p0 : {0.2, 0.4, 0.6}) {
    SynthSpec s;
    s.n_users = 600;
    s.target_minority_users = 300;
    s.seed = 4;
    s.g0.base_rate = p0;
    s.g1.base_rate = 0.6;
    const double dir = base_dir(generate(s), s);
    CHECK(dir > previous);
    CHECK(dir == doctest::Approx(p0 / 0.6).epsilon(0.2));
    previous = dir;
  }
}
