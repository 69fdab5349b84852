#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace fairaudit {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t actual_positive() const { return tp + fn; }
  std::int64_t actual_negative() const { return fp + tn; }
  std::int64_t predicted_positive() const { return tp + fp; }
  std::int64_t predicted_negative() const { return fn + tn; }
  std::int64_t total() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// A rate or metric that is undefined when its denominator vanishes.
using MaybeRate = std::optional<double>;

struct Rates {
  MaybeRate fdr, for_, fnr, tnr, tpr, fpr, selection_rate, base_rate, error_rate;
};

Rates rates(const ConfusionCounts& c);

// g0 is the unprivileged (minority) group, g1 the privileged (majority).
struct GroupOutcomes {
  ConfusionCounts g0;
  ConfusionCounts g1;

  GroupOutcomes swapped() const { return {g1, g0}; }
};

enum class Metric { kDIR, kSPD, kFPRRatio, kFNRRatio, kFORRatio, kERR, kEOD, kAOD };
enum class MetricKind { kRatio, kDifference };

std::string_view metric_name(Metric m);
MetricKind metric_kind(Metric m);

struct MetricValue {
  Metric metric = Metric::kDIR;
  std::optional<double> value;

  MetricKind kind() const { return metric_kind(metric); }
  bool defined() const { return value.has_value(); }
};

enum class RateMode { kBaseRate, kSelectionRate };

// Pr(positive | G0) / Pr(positive | G1). Undefined when either group is empty
// or the privileged rate is zero.
MetricValue disparate_impact_ratio(const GroupOutcomes& o, RateMode mode);
MetricValue statistical_parity_difference(
    const GroupOutcomes& o, RateMode mode = RateMode::kSelectionRate);

struct HybridRatios {
  MetricValue fpr_ratio{Metric::kFPRRatio, std::nullopt};
  MetricValue fnr_ratio{Metric::kFNRRatio, std::nullopt};
  MetricValue for_ratio{Metric::kFORRatio, std::nullopt};
  MetricValue err{Metric::kERR, std::nullopt};
};
HybridRatios hybrid_ratios(const GroupOutcomes& o);

struct WysiwygDifferences {
  MetricValue eod{Metric::kEOD, std::nullopt};
  MetricValue aod{Metric::kAOD, std::nullopt};
};
WysiwygDifferences wysiwyg_differences(const GroupOutcomes& o);

// Every metric in one place, for reports.
struct MetricSuite {
  MetricValue dir_selection{Metric::kDIR, std::nullopt};
  MetricValue dir_base{Metric::kDIR, std::nullopt};
  MetricValue spd{Metric::kSPD, std::nullopt};
  HybridRatios hybrid;
  WysiwygDifferences wysiwyg;
};
MetricSuite all_metrics(const GroupOutcomes& o);

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

enum class Harmed { kUnprivileged, kPrivileged, kNeither };
std::string_view harmed_name(Harmed h);

struct Bands {
  double ratio_low = 0.8;
  double ratio_high = 1.25;
  double diff_low = -0.1;
  double diff_high = 0.1;
};

struct Verdict {
  Harmed harmed = Harmed::kNeither;
  double low = 0.0;
  double high = 0.0;
  // The AOD row of the interpretation table is unspecified; its verdict uses
  // the difference-band rule by analogy.
  bool analogical = false;
};

// Band edges count as accepted. Undefined metrics have no verdict.
std::optional<Verdict> verdict(const MetricValue& m, const Bands& bands = {});

}  // namespace fairaudit
