#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairaudit/dataset.hpp"
#include "fairaudit/metrics.hpp"
#include "fairaudit/stats.hpp"

namespace fairaudit {

// Real-world minority-per-majority ratio for each attribute.
struct ReferencePopulation {
  std::map<Attribute, double> ratios;
};

// CSV `attribute,minority_per_majority_ratio`. Throws DataError.
ReferencePopulation read_reference(const std::filesystem::path& path);
ReferencePopulation read_reference(std::istream& in, const std::string& origin);

enum class RepresentationFlag { kMisrepresented, kUnderrepresented, kUnevenlySampled };
std::string_view flag_name(RepresentationFlag f);

struct RepresentationFinding {
  Attribute attribute = Attribute::kGender;
  std::int64_t minority_count = 0;
  std::int64_t majority_count = 0;
  std::optional<double> dataset_ratio;  // minority / majority
  std::optional<double> reference_ratio;
  std::optional<double> minority_fraction;
  MetricValue base_rate_dir{Metric::kDIR, std::nullopt};
  std::optional<Verdict> base_rate_verdict;
  std::vector<RepresentationFlag> flags;
  bool degenerate = false;
  std::vector<std::string> diagnostics;

  bool has(RepresentationFlag f) const;
  void add(RepresentationFlag f);
};

struct GroupSizes {
  std::int64_t minority = 0;
  std::int64_t majority = 0;
};
GroupSizes count_groups(std::span<const BinarizedProfile> profiles, Attribute a);

// Flags an attribute when |dataset - reference| / reference > deviation_tol.
// Throws ConfigError when the reference lacks an audited attribute.
std::vector<RepresentationFinding> audit_misrepresentation(
    std::span<const BinarizedProfile> profiles, const ReferencePopulation& reference,
    std::span<const Attribute> attributes, double deviation_tol = 0.5);

// Flags an attribute whose minority share of known users is below
// min_fraction.
std::vector<RepresentationFinding> audit_underrepresentation(
    std::span<const BinarizedProfile> profiles, std::span<const Attribute> attributes,
    double min_fraction = 0.2);

// Tallies ground-truth labels per group (predictions are left negative).
GroupOutcomes tally_base_rates(std::span<const LabeledWindow> windows,
                               const GroupPartition& partition);

// Base-rate DIR; UnevenlySampled whenever the verdict is not Neither.
RepresentationFinding audit_uneven_sampling(std::span<const LabeledWindow> windows,
                                            const GroupPartition& partition,
                                            const Bands& bands = {});

// Folds findings for the same attribute into one entry, in attribute order.
std::vector<RepresentationFinding> merge_representation(
    std::span<const std::vector<RepresentationFinding>> groups);

struct MeasurementFinding {
  Attribute attribute = Attribute::kGender;
  std::string category;  // "source:watch", "device:iPhone 6", ...
  std::int64_t users_g0 = 0;
  std::int64_t users_g1 = 0;
  std::int64_t with_category_g0 = 0;
  std::int64_t with_category_g1 = 0;
  double proportion_g0 = 0.0;
  double proportion_g1 = 0.0;
  double p_value = 1.0;
  ProportionTest test = ProportionTest::kPooledZ;
  bool significant = false;
};

struct MeasurementOptions {
  double alpha = 0.05;
  // Also compare presence of every distinct device_model value.
  bool device_models = false;
};

struct MeasurementAudit {
  std::vector<MeasurementFinding> findings;
  std::vector<std::string> diagnostics;
};

// Share of users in each group with at least one record from each source,
// with a two-sided two-proportion test. Only users who have records count.
MeasurementAudit audit_measurement(std::span<const StepRecord> records,
                                   const GroupPartition& partition,
                                   const MeasurementOptions& options = {});

}  // namespace fairaudit
