#include "fairaudit/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "fairaudit/common.hpp"

namespace fairaudit {

namespace {

constexpr std::array<std::string_view, kNumAttributes> kAttributeNames = {
    "gender",       "ethnicity",     "age",           "bmi",
    "heart_condition", "hypertension", "joint_problem", "diabetes",
};

GroupLabel condition_group(Condition c) {
  switch (c) {
    case Condition::kNo:
      return GroupLabel::kMajority;
    case Condition::kYes:
      return GroupLabel::kMinority;
    case Condition::kNA:
      break;
  }
  return GroupLabel::kMissing;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

int parse_fixed_int(std::string_view text, std::size_t pos, std::size_t len,
                    std::string_view whole) {
  int value = 0;
  if (pos + len > text.size()) {
    throw DataError("malformed timestamp '" + std::string(whole) + "'");
  }
  const auto* first = text.data() + pos;
  const auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc() || ptr != first + len) {
    throw DataError("malformed timestamp '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

std::string_view attribute_name(Attribute attribute) {
  return kAttributeNames[static_cast<std::size_t>(attribute)];
}

Attribute parse_attribute(std::string_view name) {
  name = trim(name);
  for (std::size_t i = 0; i < kNumAttributes; ++i) {
    if (kAttributeNames[i] == name) return kAllAttributes[i];
  }
  throw ConfigError("unknown protected attribute '" + std::string(name) + "'");
}

std::vector<Attribute> parse_attribute_list(std::string_view comma_separated) {
  std::vector<Attribute> out;
  while (!comma_separated.empty()) {
    const auto comma = comma_separated.find(',');
    const auto item = trim(comma_separated.substr(0, comma));
    if (!item.empty()) out.push_back(parse_attribute(item));
    if (comma == std::string_view::npos) break;
    comma_separated.remove_prefix(comma + 1);
  }
  return out;
}

bool BinarizedProfile::complete() const {
  return std::none_of(groups.begin(), groups.end(), [](GroupLabel g) {
    return g == GroupLabel::kMissing;
  });
}

double body_mass_index(double height_cm, double weight_kg) {
  const double metres = height_cm / 100.0;
  return weight_kg / (metres * metres);
}

BinarizedProfile binarize(const RawAttributeProfile& p) {
  if (p.age && (*p.age < 0 || *p.age > 130)) {
    throw DataError("user " + p.user_id + ": age " + std::to_string(*p.age) +
                    " outside [0, 130]");
  }
  if (p.height_cm && !(*p.height_cm > 0.0)) {
    throw DataError("user " + p.user_id + ": non-positive height");
  }
  if (p.weight_kg && !(*p.weight_kg > 0.0)) {
    throw DataError("user " + p.user_id + ": non-positive weight");
  }

  BinarizedProfile out;
  out.user_id = p.user_id;
  auto set = [&out](Attribute a, GroupLabel g) {
    out.groups[static_cast<std::size_t>(a)] = g;
  };

  switch (p.gender) {
    case Gender::kMale:
      set(Attribute::kGender, GroupLabel::kMajority);
      break;
    case Gender::kFemale:
      set(Attribute::kGender, GroupLabel::kMinority);
      break;
    case Gender::kNA:
      set(Attribute::kGender, GroupLabel::kMissing);
      break;
  }

  if (p.ethnicity == Ethnicity::kNA) {
    set(Attribute::kEthnicity, GroupLabel::kMissing);
  } else {
    set(Attribute::kEthnicity, p.ethnicity == Ethnicity::kWhite
                                   ? GroupLabel::kMajority
                                   : GroupLabel::kMinority);
  }

  if (!p.age) {
    set(Attribute::kAge, GroupLabel::kMissing);
  } else {
    set(Attribute::kAge,
        *p.age >= 65 ? GroupLabel::kMinority : GroupLabel::kMajority);
  }

  if (!p.height_cm || !p.weight_kg) {
    set(Attribute::kBmi, GroupLabel::kMissing);
  } else {
    // The healthy band is the minority segment.
    const double bmi = body_mass_index(*p.height_cm, *p.weight_kg);
    const bool healthy = bmi >= 18.5 && bmi < 25.0;
    set(Attribute::kBmi, healthy ? GroupLabel::kMinority : GroupLabel::kMajority);
  }

  set(Attribute::kHeartCondition, condition_group(p.heart_condition));
  set(Attribute::kHypertension, condition_group(p.hypertension));
  set(Attribute::kJointProblem, condition_group(p.joint_problem));
  set(Attribute::kDiabetes, condition_group(p.diabetes));
  return out;
}

ProfileIndex index_profiles(std::span<const BinarizedProfile> profiles) {
  ProfileIndex index;
  for (const auto& p : profiles) {
    if (!index.emplace(p.user_id, p).second) {
      throw DataError("duplicate profile for user " + p.user_id);
    }
  }
  return index;
}

std::string_view source_name(Source source) {
  switch (source) {
    case Source::kPhone:
      return "phone";
    case Source::kWatch:
      return "watch";
    case Source::kThirdParty:
      return "third_party";
  }
  return "unknown";
}

Source parse_source(std::string_view text) {
  std::string lowered;
  for (char c : trim(text)) {
    if (c == '-' || c == ' ') c = '_';
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (lowered == "phone") return Source::kPhone;
  if (lowered == "watch") return Source::kWatch;
  if (lowered == "third_party" || lowered == "thirdparty") return Source::kThirdParty;
  throw DataError("unknown source '" + std::string(text) + "'");
}

HourStamp parse_timestamp(std::string_view text) {
  const std::string_view whole = text;
  text = trim(text);
  // YYYY-MM-DD
  if (text.size() < 13 || text[4] != '-' || text[7] != '-' ||
      (text[10] != 'T' && text[10] != ' ')) {
    throw DataError("malformed timestamp '" + std::string(whole) + "'");
  }
  const int year = parse_fixed_int(text, 0, 4, whole);
  const int month = parse_fixed_int(text, 5, 2, whole);
  const int day = parse_fixed_int(text, 8, 2, whole);
  const int hour = parse_fixed_int(text, 11, 2, whole);
  std::size_t pos = 13;
  for (int part = 0; part < 2 && pos < text.size() && text[pos] == ':'; ++part) {
    const int v = parse_fixed_int(text, pos + 1, 2, whole);
    if (v > 59) throw DataError("malformed timestamp '" + std::string(whole) + "'");
    pos += 3;
  }
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  if (pos < text.size()) {
    const auto rest = text.substr(pos);
    const bool zulu = rest == "Z";
    const bool offset = (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') &&
                         rest[3] == ':');
    if (!zulu && !offset) {
      throw DataError("malformed timestamp '" + std::string(whole) + "'");
    }
  }
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year},
                           std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23) {
    throw DataError("invalid calendar time '" + std::string(whole) + "'");
  }
  const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
  return static_cast<HourStamp>(days_since_epoch) * 24 + hour;
}

std::string format_timestamp(HourStamp hour) {
  using namespace std::chrono;
  const auto day = day_of(hour);
  const year_month_day ymd{sys_days{days{day}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00:00",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()),
                static_cast<int>(hour - day * 24));
  return buf;
}

double median_threshold(std::span<const LabeledWindow> windows) {
  if (windows.empty()) {
    throw AuditError("median threshold needs at least one window");
  }
  std::vector<std::int64_t> totals;
  totals.reserve(windows.size());
  for (const auto& w : windows) totals.push_back(w.raw_next_day_total);
  std::sort(totals.begin(), totals.end());
  const std::size_t n = totals.size();
  if (n % 2 == 1) return static_cast<double>(totals[n / 2]);
  return 0.5 * (static_cast<double>(totals[n / 2 - 1]) +
                static_cast<double>(totals[n / 2]));
}

double resolve_threshold(const LabelRule& rule,
                         std::span<const LabeledWindow> reference) {
  if (const auto* fixed = std::get_if<FixedThreshold>(&rule)) {
    return fixed->steps;
  }
  return median_threshold(reference);
}

void relabel(std::span<LabeledWindow> windows, double threshold) {
  for (auto& w : windows) w.label = label_for(w.raw_next_day_total, threshold);
}

std::vector<LabeledWindow> build_windows(std::span<const StepRecord> records,
                                         const LabelRule& rule) {
  // user -> day -> 24 hourly maxima
  std::map<std::string, std::map<std::int64_t, std::array<std::int64_t, 24>>,
           std::less<>>
      days;
  for (const auto& r : records) {
    if (r.steps < 0) {
      throw DataError("user " + r.user_id + ": negative step count");
    }
    const auto day = day_of(r.hour);
    auto& hours = days[r.user_id].try_emplace(day).first->second;
    auto& slot = hours[static_cast<std::size_t>(r.hour - day * 24)];
    slot = std::max(slot, r.steps);
  }

  std::vector<LabeledWindow> windows;
  for (const auto& [user, by_day] : days) {
    for (const auto& [day, hours] : by_day) {
      const auto prev = by_day.find(day - 1);
      const auto prev2 = by_day.find(day - 2);
      if (prev == by_day.end() || prev2 == by_day.end()) continue;
      LabeledWindow w;
      w.user_id = user;
      w.day_start = day * 24;
      std::copy(prev2->second.begin(), prev2->second.end(), w.history.begin());
      std::copy(prev->second.begin(), prev->second.end(), w.history.begin() + 24);
      for (auto h : hours) w.raw_next_day_total += h;
      windows.push_back(std::move(w));
    }
  }
  if (!windows.empty()) relabel(windows, resolve_threshold(rule, windows));
  return windows;
}

std::vector<LabeledWindow> with_awareness(std::span<const LabeledWindow> windows,
                                          const ProfileIndex& profiles) {
  std::vector<LabeledWindow> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    const auto it = profiles.find(w.user_id);
    if (it == profiles.end() || !it->second.complete()) continue;
    std::array<std::uint8_t, kAwareFeatures> flags{};
    for (std::size_t i = 0; i < kNumAttributes; ++i) {
      flags[i] = it->second.groups[i] == GroupLabel::kMinority ? 1 : 0;
    }
    auto copy = w;
    copy.aware_extension = flags;
    out.push_back(std::move(copy));
  }
  return out;
}

std::string_view strategy_name(PartitionStrategy strategy) {
  switch (strategy) {
    case PartitionStrategy::kSingle:
      return "single";
    case PartitionStrategy::kMinorityMinorityVsRest:
      return "minority_minority_vs_rest";
    case PartitionStrategy::kMajorityMajorityVsRest:
      return "majority_majority_vs_rest";
  }
  return "unknown";
}

std::optional<Group> GroupPartition::group_of(std::string_view user_id) const {
  if (g0_users.contains(user_id)) return Group::kG0;
  if (g1_users.contains(user_id)) return Group::kG1;
  return std::nullopt;
}

std::string GroupPartition::label() const {
  std::string out;
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (i) out += "+";
    out += attribute_name(attributes[i]);
  }
  if (strategy != PartitionStrategy::kSingle) {
    out += ":";
    out += strategy_name(strategy);
  }
  return out;
}

GroupPartition partition(std::span<const BinarizedProfile> profiles,
                         Attribute attribute) {
  GroupPartition out;
  out.attributes = {attribute};
  for (const auto& p : profiles) {
    switch (p[attribute]) {
      case GroupLabel::kMinority:
        out.g0_users.insert(p.user_id);
        break;
      case GroupLabel::kMajority:
        out.g1_users.insert(p.user_id);
        break;
      case GroupLabel::kMissing:
        break;
    }
  }
  return out;
}

GroupPartition partition(std::span<const BinarizedProfile> profiles,
                         Attribute first, Attribute second,
                         PartitionStrategy strategy) {
  if (first == second) {
    throw ConfigError("intersectional pair needs two distinct attributes, got " +
                      std::string(attribute_name(first)) + " twice");
  }
  if (strategy == PartitionStrategy::kSingle) {
    throw ConfigError("pair partition requires an intersectional strategy");
  }
  GroupPartition out;
  out.attributes = {first, second};
  out.strategy = strategy;
  for (const auto& p : profiles) {
    const GroupLabel a = p[first];
    const GroupLabel b = p[second];
    if (a == GroupLabel::kMissing || b == GroupLabel::kMissing) continue;
    if (strategy == PartitionStrategy::kMinorityMinorityVsRest) {
      const bool both_minority = a == GroupLabel::kMinority && b == GroupLabel::kMinority;
      (both_minority ? out.g0_users : out.g1_users).insert(p.user_id);
    } else {
      const bool both_majority = a == GroupLabel::kMajority && b == GroupLabel::kMajority;
      (both_majority ? out.g1_users : out.g0_users).insert(p.user_id);
    }
  }
  return out;
}

DatasetSplit split(std::span<const LabeledWindow> windows, double test_fraction,
                   std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in (0, 1)");
  }
  std::set<std::string, std::less<>> user_set;
  for (const auto& w : windows) user_set.insert(w.user_id);
  if (user_set.size() < 2) {
    throw DataError("split needs at least two users with windows, found " +
                    std::to_string(user_set.size()));
  }
  std::vector<std::string> users(user_set.begin(), user_set.end());
  Rng rng(seed);
  rng.shuffle(users);

  const auto n = static_cast<double>(users.size());
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * n));
  n_test = std::clamp<std::size_t>(n_test, 1, users.size() - 1);

  DatasetSplit out;
  out.test_users.assign(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::sort(out.test_users.begin(), out.test_users.end());
  for (const auto& w : windows) {
    const bool in_test = std::binary_search(out.test_users.begin(),
                                            out.test_users.end(), w.user_id);
    (in_test ? out.test : out.train).push_back(w);
  }
  return out;
}

}  // namespace fairaudit
