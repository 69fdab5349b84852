#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace fairaudit {

// ---------------------------------------------------------------------------
// Protected attributes
// ---------------------------------------------------------------------------

enum class Attribute : int {
  kGender = 0,
  kEthnicity,
  kAge,
  kBmi,
  kHeartCondition,
  kHypertension,
  kJointProblem,
  kDiabetes,
};

inline constexpr std::size_t kNumAttributes = 8;

inline constexpr std::array<Attribute, kNumAttributes> kAllAttributes = {
    Attribute::kGender,         Attribute::kEthnicity,
    Attribute::kAge,            Attribute::kBmi,
    Attribute::kHeartCondition, Attribute::kHypertension,
    Attribute::kJointProblem,   Attribute::kDiabetes,
};

std::string_view attribute_name(Attribute attribute);
// Throws ConfigError for unknown names.
Attribute parse_attribute(std::string_view name);
std::vector<Attribute> parse_attribute_list(std::string_view comma_separated);

enum class Gender { kMale, kFemale, kNA };
enum class Ethnicity {
  kWhite,
  kAsian,
  kBlack,
  kHispanic,
  kAmericanIndian,
  kPacificIslander,
  kOther,
  kNA,
};
enum class Condition { kYes, kNo, kNA };

struct RawAttributeProfile {
  std::string user_id;
  Gender gender = Gender::kNA;
  Ethnicity ethnicity = Ethnicity::kNA;
  std::optional<int> age;
  std::optional<double> height_cm;
  std::optional<double> weight_kg;
  Condition heart_condition = Condition::kNA;
  Condition hypertension = Condition::kNA;
  Condition joint_problem = Condition::kNA;
  Condition diabetes = Condition::kNA;
};

enum class GroupLabel { kMajority, kMinority, kMissing };

struct BinarizedProfile {
  std::string user_id;
  std::array<GroupLabel, kNumAttributes> groups{};

  GroupLabel operator[](Attribute a) const {
    return groups[static_cast<std::size_t>(a)];
  }
  bool complete() const;

  friend bool operator==(const BinarizedProfile&,
                         const BinarizedProfile&) = default;
};

// Body-mass index from height in centimetres and weight in kilograms.
double body_mass_index(double height_cm, double weight_kg);

// Majority/minority mapping of every protected attribute. Throws DataError on
// out-of-range age or non-positive height/weight.
BinarizedProfile binarize(const RawAttributeProfile& profile);

using ProfileIndex = std::map<std::string, BinarizedProfile, std::less<>>;
ProfileIndex index_profiles(std::span<const BinarizedProfile> profiles);

// ---------------------------------------------------------------------------
// Step records and windows
// ---------------------------------------------------------------------------

enum class Source { kPhone, kWatch, kThirdParty };
inline constexpr std::array<Source, 3> kAllSources = {
    Source::kPhone, Source::kWatch, Source::kThirdParty};

std::string_view source_name(Source source);
Source parse_source(std::string_view text);

// Hours since 1970-01-01T00:00 in the record's own wall-clock time.
using HourStamp = std::int64_t;

inline constexpr HourStamp day_of(HourStamp hour) {
  return hour >= 0 ? hour / 24 : -((-hour + 23) / 24);
}

// Accepts YYYY-MM-DD[T| ]HH[:MM[:SS]] with an optional Z or +hh:mm suffix.
// Minutes and seconds are floored to the hour; offsets are ignored so the
// local wall-clock day is kept. Throws DataError.
HourStamp parse_timestamp(std::string_view text);
std::string format_timestamp(HourStamp hour);

struct StepRecord {
  std::string user_id;
  HourStamp hour = 0;
  std::int64_t steps = 0;
  Source source = Source::kPhone;
  std::string device_model;
};

inline constexpr std::size_t kHistoryHours = 48;
inline constexpr std::size_t kAwareFeatures = kNumAttributes;

enum class ActivityLabel { kLow = 0, kHigh = 1 };

struct LabeledWindow {
  std::string user_id;
  // First hour of the labelled (next) day.
  HourStamp day_start = 0;
  std::array<std::int64_t, kHistoryHours> history{};
  std::optional<std::array<std::uint8_t, kAwareFeatures>> aware_extension;
  ActivityLabel label = ActivityLabel::kLow;
  std::int64_t raw_next_day_total = 0;

  bool positive() const { return label == ActivityLabel::kHigh; }
  friend bool operator==(const LabeledWindow&, const LabeledWindow&) = default;
};

struct MedianSplit {};
struct FixedThreshold {
  double steps = 0.0;
};
using LabelRule = std::variant<MedianSplit, FixedThreshold>;

// Median of next-day totals (mean of the two middle values for even counts).
double median_threshold(std::span<const LabeledWindow> windows);

// Threshold for a rule; MedianSplit needs a non-empty reference set.
double resolve_threshold(const LabelRule& rule,
                         std::span<const LabeledWindow> reference);

inline ActivityLabel label_for(std::int64_t total, double threshold) {
  return static_cast<double>(total) >= threshold ? ActivityLabel::kHigh
                                                 : ActivityLabel::kLow;
}

void relabel(std::span<LabeledWindow> windows, double threshold);

// One window per user and observed day D whose two preceding days are also
// observed. A day is observed when it has at least one record; unrecorded
// hours inside it are zero. Concurrent sources for the same hour collapse to
// their maximum. Records may arrive in any order.
std::vector<LabeledWindow> build_windows(std::span<const StepRecord> records,
                                         const LabelRule& rule);

// Appends the 8 minority indicators (minority = 1). Windows whose user is
// unknown or has any Missing attribute are dropped. Returns the kept windows.
std::vector<LabeledWindow> with_awareness(std::span<const LabeledWindow> windows,
                                          const ProfileIndex& profiles);

// ---------------------------------------------------------------------------
// Group partitions
// ---------------------------------------------------------------------------

enum class PartitionStrategy {
  kSingle,
  kMinorityMinorityVsRest,
  kMajorityMajorityVsRest,
};

std::string_view strategy_name(PartitionStrategy strategy);

enum class Group { kG0 = 0, kG1 = 1 };

struct GroupPartition {
  std::vector<Attribute> attributes;
  PartitionStrategy strategy = PartitionStrategy::kSingle;
  std::set<std::string, std::less<>> g0_users;  // minority / unprivileged
  std::set<std::string, std::less<>> g1_users;  // majority / privileged

  std::optional<Group> group_of(std::string_view user_id) const;
  bool degenerate() const { return g0_users.empty() || g1_users.empty(); }
  std::string label() const;
};

GroupPartition partition(std::span<const BinarizedProfile> profiles,
                         Attribute attribute);
// Throws ConfigError when both attributes are the same or the strategy is
// kSingle.
GroupPartition partition(std::span<const BinarizedProfile> profiles,
                         Attribute first, Attribute second,
                         PartitionStrategy strategy);

// ---------------------------------------------------------------------------
// Train/test split
// ---------------------------------------------------------------------------

struct DatasetSplit {
  std::vector<LabeledWindow> train;
  std::vector<LabeledWindow> test;
  std::vector<std::string> test_users;
};

// User-disjoint, seeded. round(fraction * users) test users, clamped to
// [1, users - 1]. Throws ConfigError for a fraction outside (0, 1) and
// DataError for fewer than two users.
DatasetSplit split(std::span<const LabeledWindow> windows, double test_fraction,
                   std::uint64_t seed);

}  // namespace fairaudit
