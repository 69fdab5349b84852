#include "fairaudit/data_audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "fairaudit/common.hpp"
#include "fairaudit/io.hpp"

namespace fairaudit {

ReferencePopulation read_reference(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_reference(in, path.string());
}

ReferencePopulation read_reference(std::istream& in, const std::string& origin) {
  CsvReader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f) || f.size() != 2 || f[0] != "attribute" ||
      f[1] != "minority_per_majority_ratio") {
    throw DataError(origin + ":1: expected header '" + kReferenceHeader + "'");
  }
  ReferencePopulation out;
  while (reader.next(f)) {
    if (f.size() == 1 && f[0].empty()) continue;
    const auto where = origin + ":" + std::to_string(reader.line()) + ": ";
    if (f.size() != 2) throw DataError(where + "expected 2 fields");
    Attribute a;
    try {
      a = parse_attribute(f[0]);
    } catch (const ConfigError& e) {
      throw DataError(where + e.what());
    }
    double ratio = 0.0;
    try {
      std::size_t used = 0;
      ratio = std::stod(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(where + "invalid ratio '" + f[1] + "'");
    }
    if (!(ratio > 0.0) || !std::isfinite(ratio)) {
      throw DataError(where + "reference ratios must be positive");
    }
    if (!out.ratios.emplace(a, ratio).second) {
      throw DataError(where + "duplicate attribute " + f[0]);
    }
  }
  return out;
}

std::string_view flag_name(RepresentationFlag f) {
  switch (f) {
    case RepresentationFlag::kMisrepresented:
      return "Misrepresented";
    case RepresentationFlag::kUnderrepresented:
      return "Underrepresented";
    case RepresentationFlag::kUnevenlySampled:
      return "UnevenlySampled";
  }
  return "unknown";
}

bool RepresentationFinding::has(RepresentationFlag f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

void RepresentationFinding::add(RepresentationFlag f) {
  if (!has(f)) flags.push_back(f);
}

GroupSizes count_groups(std::span<const BinarizedProfile> profiles, Attribute a) {
  GroupSizes out;
  for (const auto& p : profiles) {
    if (p[a] == GroupLabel::kMinority) ++out.minority;
    if (p[a] == GroupLabel::kMajority) ++out.majority;
  }
  return out;
}

namespace {

RepresentationFinding counted(std::span<const BinarizedProfile> profiles, Attribute a) {
  RepresentationFinding f;
  f.attribute = a;
  const auto sizes = count_groups(profiles, a);
  f.minority_count = sizes.minority;
  f.majority_count = sizes.majority;
  if (sizes.majority > 0) {
    f.dataset_ratio = static_cast<double>(sizes.minority) / static_cast<double>(sizes.majority);
  }
  if (sizes.minority + sizes.majority > 0) {
    f.minority_fraction = static_cast<double>(sizes.minority) /
                          static_cast<double>(sizes.minority + sizes.majority);
  }
  return f;
}

}  // namespace

std::vector<RepresentationFinding> audit_misrepresentation(
    std::span<const BinarizedProfile> profiles, const ReferencePopulation& reference,
    std::span<const Attribute> attributes, double deviation_tol) {
  if (!(deviation_tol > 0.0)) throw ConfigError("deviation tolerance must be positive");
  std::vector<RepresentationFinding> out;
  for (const Attribute a : attributes) {
    const auto ref = reference.ratios.find(a);
    if (ref == reference.ratios.end()) {
      throw ConfigError("reference population has no ratio for " +
                        std::string(attribute_name(a)));
    }
    auto f = counted(profiles, a);
    f.reference_ratio = ref->second;
    if (!f.dataset_ratio) {
      f.degenerate = true;
      f.diagnostics.push_back("no majority users; dataset ratio undefined");
    } else if (std::abs(*f.dataset_ratio - ref->second) / ref->second > deviation_tol) {
      f.add(RepresentationFlag::kMisrepresented);
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<RepresentationFinding> audit_underrepresentation(
    std::span<const BinarizedProfile> profiles, std::span<const Attribute> attributes,
    double min_fraction) {
  std::vector<RepresentationFinding> out;
  for (const Attribute a : attributes) {
    auto f = counted(profiles, a);
    if (f.minority_count == 0) {
      f.add(RepresentationFlag::kUnderrepresented);
      f.degenerate = true;
      f.diagnostics.push_back("no minority users");
    } else if (*f.minority_fraction < min_fraction) {
      f.add(RepresentationFlag::kUnderrepresented);
    }
    out.push_back(std::move(f));
  }
  return out;
}

GroupOutcomes tally_base_rates(std::span<const LabeledWindow> windows,
                               const GroupPartition& partition) {
  GroupOutcomes o;
  for (const auto& w : windows) {
    const auto g = partition.group_of(w.user_id);
    if (!g) continue;
    auto& c = *g == Group::kG0 ? o.g0 : o.g1;
    (w.positive() ? c.fn : c.tn) += 1;
  }
  return o;
}

RepresentationFinding audit_uneven_sampling(std::span<const LabeledWindow> windows,
                                            const GroupPartition& partition,
                                            const Bands& bands) {
  RepresentationFinding f;
  if (!partition.attributes.empty()) f.attribute = partition.attributes.front();
  const auto outcomes = tally_base_rates(windows, partition);
  f.minority_count = outcomes.g0.total();
  f.majority_count = outcomes.g1.total();
  f.base_rate_dir = disparate_impact_ratio(outcomes, RateMode::kBaseRate);
  f.base_rate_verdict = verdict(f.base_rate_dir, bands);
  if (outcomes.g0.total() == 0 || outcomes.g1.total() == 0) {
    f.degenerate = true;
    f.diagnostics.push_back("a group has no labelled windows");
  } else if (!f.base_rate_dir.defined()) {
    f.degenerate = true;
    f.diagnostics.push_back("majority base rate is zero");
  }
  if (f.base_rate_verdict && f.base_rate_verdict->harmed != Harmed::kNeither) {
    f.add(RepresentationFlag::kUnevenlySampled);
  }
  return f;
}

std::vector<RepresentationFinding> merge_representation(
    std::span<const std::vector<RepresentationFinding>> groups) {
  std::map<Attribute, RepresentationFinding> merged;
  for (const auto& group : groups) {
    for (const auto& f : group) {
      auto [it, fresh] = merged.try_emplace(f.attribute, f);
      if (fresh) continue;
      auto& m = it->second;
      // Profile counts win over window counts when both exist.
      if (!m.dataset_ratio && f.dataset_ratio) {
        m.minority_count = f.minority_count;
        m.majority_count = f.majority_count;
        m.dataset_ratio = f.dataset_ratio;
        m.minority_fraction = f.minority_fraction;
      }
      if (f.reference_ratio) m.reference_ratio = f.reference_ratio;
      if (f.base_rate_dir.defined() || f.base_rate_verdict) {
        m.base_rate_dir = f.base_rate_dir;
        m.base_rate_verdict = f.base_rate_verdict;
      }
      for (auto flag : f.flags) m.add(flag);
      m.degenerate = m.degenerate || f.degenerate;
      m.diagnostics.insert(m.diagnostics.end(), f.diagnostics.begin(),
                           f.diagnostics.end());
    }
  }
  std::vector<RepresentationFinding> out;
  for (auto& [a, f] : merged) out.push_back(std::move(f));
  return out;
}

MeasurementAudit audit_measurement(std::span<const StepRecord> records,
                                   const GroupPartition& partition,
                                   const MeasurementOptions& options) {
  // user -> categories present
  std::map<std::string, std::set<std::string>, std::less<>> present;
  std::set<std::string> categories;
  for (const auto s : kAllSources) categories.insert("source:" + std::string(source_name(s)));
  for (const auto& r : records) {
    auto& cats = present[r.user_id];
    cats.insert("source:" + std::string(source_name(r.source)));
    if (options.device_models && !r.device_model.empty()) {
      const auto key = "device:" + r.device_model;
      cats.insert(key);
      categories.insert(key);
    }
  }

  MeasurementAudit out;
  const std::string label = partition.label();
  std::int64_t n0 = 0;
  std::int64_t n1 = 0;
  for (const auto& [user, cats] : present) {
    const auto g = partition.group_of(user);
    if (!g) continue;
    (*g == Group::kG0 ? n0 : n1) += 1;
  }
  if (n0 == 0 || n1 == 0) {
    out.diagnostics.push_back(label + ": skipped, a group has no users with records");
    return out;
  }
  for (const auto& category : categories) {
    MeasurementFinding f;
    if (!partition.attributes.empty()) f.attribute = partition.attributes.front();
    f.category = category;
    f.users_g0 = n0;
    f.users_g1 = n1;
    for (const auto& [user, cats] : present) {
      const auto g = partition.group_of(user);
      if (!g || !cats.contains(category)) continue;
      (*g == Group::kG0 ? f.with_category_g0 : f.with_category_g1) += 1;
    }
    f.proportion_g0 = static_cast<double>(f.with_category_g0) / static_cast<double>(n0);
    f.proportion_g1 = static_cast<double>(f.with_category_g1) / static_cast<double>(n1);
    const auto test = compare_proportions(f.with_category_g0, n0, f.with_category_g1, n1);
    f.p_value = test.p_value;
    f.test = test.test;
    f.significant = f.p_value < options.alpha;
    out.findings.push_back(std::move(f));
  }
  return out;
}

}  // namespace fairaudit
