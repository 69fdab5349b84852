#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairaudit/dataset.hpp"

namespace fairaudit {

// Behaviour of one side of the target attribute.
struct SynthGroup {
  double base_rate = 0.5;          // share of High next days
  double mean_daily_steps = 7500;  // log-normal mean before truncation
  double dispersion = 0.5;         // log-space standard deviation
  // Probability that a user owns each source (phone, watch, third_party).
  std::array<double, 3> source_ownership{0.9, 0.3, 0.2};
};

struct SourceSkew {
  double factor = 1.0;
  double noise = 0.0;
};

struct SynthSpec {
  int n_users = 200;
  int n_days = 5;
  std::uint64_t seed = 0;
  // Attribute whose minority/majority split receives the group parameters.
  Attribute target = Attribute::kGender;
  std::map<Attribute, double> minority_probability;  // absent -> 0.5
  std::map<Attribute, double> missing_probability;   // absent -> 0
  // Exact number of target-minority users instead of independent draws.
  std::optional<int> target_minority_users;
  SynthGroup g0;
  SynthGroup g1;
  // Lag-one autocorrelation of each user's daily High/Low sequence, in [0, 1].
  double persistence = 0.5;
  // Next-day totals at or above this are High; must be positive.
  double threshold = 7500;
  std::array<double, 24> hourly_profile{};
  std::array<SourceSkew, 3> skew{};
  std::string start_date = "2016-03-01";

  SynthSpec();
  // Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct AttributeTruth {
  Attribute attribute = Attribute::kGender;
  std::int64_t minority_users = 0;
  std::int64_t majority_users = 0;
  std::optional<double> dataset_ratio;
  std::int64_t windows_g0 = 0;
  std::int64_t windows_g1 = 0;
  std::int64_t positives_g0 = 0;
  std::int64_t positives_g1 = 0;
  std::optional<double> base_rate_g0;
  std::optional<double> base_rate_g1;
  std::optional<double> base_rate_dir;
  // Users with at least one record per source, per group.
  std::array<std::int64_t, 3> source_users_g0{};
  std::array<std::int64_t, 3> source_users_g1{};
};

struct GroundTruth {
  std::uint64_t seed = 0;
  double threshold = 0.0;
  std::int64_t users = 0;
  std::int64_t records = 0;
  std::int64_t windows = 0;
  std::vector<AttributeTruth> attributes;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const GroundTruth& truth);

struct SynthCorpus {
  std::vector<StepRecord> records;  // sorted by user, hour, source
  std::vector<RawAttributeProfile> profiles;
  GroundTruth truth;
};

SynthCorpus generate(const SynthSpec& spec);

// Tallies recomputed from records and profiles with the fixed threshold.
GroundTruth tally_ground_truth(std::span<const StepRecord> records,
                               std::span<const RawAttributeProfile> profiles,
                               double threshold);

// Scales every count from `source` by factor * max(0, 1 + noise * z), z
// standard normal, rounded half away from zero. Throws ConfigError for a
// non-positive factor or negative noise.
std::vector<StepRecord> inject_measurement_skew(std::span<const StepRecord> records,
                                                Source source, double factor,
                                                double noise, std::uint64_t seed);

}  // namespace fairaudit
