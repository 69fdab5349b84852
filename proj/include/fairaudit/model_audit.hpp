#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairaudit/dataset.hpp"
#include "fairaudit/metrics.hpp"
#include "fairaudit/model.hpp"

namespace fairaudit {

// Hard labels for a batch of windows, in order.
using BatchClassifier =
    std::function<std::vector<ActivityLabel>(std::span<const LabeledWindow>)>;

BatchClassifier classifier_for(const SequenceModel& model);
BatchClassifier classifier_for(const PersonalizedModel& model);
BatchClassifier constant_classifier(ActivityLabel label);
// Echoes the ground-truth label.
BatchClassifier perfect_classifier();

// Per-group confusion counts; windows outside the partition are ignored.
GroupOutcomes tally(std::span<const LabeledWindow> windows,
                    std::span<const ActivityLabel> predictions,
                    const GroupPartition& partition);

enum class ModelVariant { kDataBaseRate, kAware, kUnaware, kPersonalized };
std::string_view variant_name(ModelVariant v);

enum class Propagation { kPropagated, kAmplified, kMitigated };
std::string_view propagation_name(Propagation p);

// |model - 1| against |data - 1|, with `threshold` slack either way.
std::optional<Propagation> classify_propagation(const MetricValue& model_dir,
                                                const MetricValue& data_dir,
                                                double threshold = 0.05);

struct ModelBiasFinding {
  std::string label;  // partition label, e.g. "gender" or "diabetes+gender:..."
  std::vector<Attribute> attributes;
  PartitionStrategy strategy = PartitionStrategy::kSingle;
  ModelVariant variant = ModelVariant::kUnaware;
  GroupOutcomes outcomes;
  MetricSuite metrics;
  MetricValue dir{Metric::kDIR, std::nullopt};       // selection rate
  MetricValue data_dir{Metric::kDIR, std::nullopt};  // base rate, same windows
  std::optional<Verdict> verdict;
  std::optional<Propagation> propagation;
  bool degenerate = false;
  std::vector<std::string> diagnostics;
};

ModelBiasFinding audit_partition(const BatchClassifier& classifier, ModelVariant variant,
                                 std::span<const LabeledWindow> test,
                                 const GroupPartition& partition, const Bands& bands = {},
                                 double amplification_threshold = 0.05);

std::vector<ModelBiasFinding> audit_aggregation(const BatchClassifier& classifier,
                                                ModelVariant variant,
                                                std::span<const LabeledWindow> test,
                                                std::span<const GroupPartition> partitions,
                                                const Bands& bands = {},
                                                double amplification_threshold = 0.05);

struct IntersectionalFinding {
  Attribute first = Attribute::kGender;
  Attribute second = Attribute::kGender;
  PartitionStrategy strategy = PartitionStrategy::kMinorityMinorityVsRest;
  ModelBiasFinding finding;
  MetricValue first_dir{Metric::kDIR, std::nullopt};
  MetricValue second_dir{Metric::kDIR, std::nullopt};
  bool skipped = false;
};

// Every pair under both combination strategies. An intersection with no G0
// windows in `test` is marked skipped with a diagnostic.
std::vector<IntersectionalFinding> audit_intersectional(
    const BatchClassifier& classifier, ModelVariant variant,
    std::span<const LabeledWindow> test, std::span<const BinarizedProfile> profiles,
    std::span<const std::pair<Attribute, Attribute>> pairs, const Bands& bands = {});

struct LearningFinding {
  std::string label;
  MetricValue dir_shared{Metric::kDIR, std::nullopt};
  MetricValue dir_personalized{Metric::kDIR, std::nullopt};
  // |DIR_personalized - 1| - |DIR_shared - 1|; positive means amplified.
  std::optional<double> delta;
  std::optional<Verdict> verdict_shared;
  std::optional<Verdict> verdict_personalized;
};

LearningFinding audit_learning(const BatchClassifier& shared,
                               const BatchClassifier& personalized,
                               std::span<const LabeledWindow> test,
                               const GroupPartition& partition, const Bands& bands = {});

enum class RemovalCell { kNone, kPositivesG0, kNegativesG0, kPositivesG1, kNegativesG1 };
std::string_view removal_cell_name(RemovalCell c);

struct BenchmarkPair {
  std::string label;
  std::vector<std::size_t> t0_indices;  // ascending positions in T1
  RemovalCell cell = RemovalCell::kNone;
  std::int64_t removed = 0;
  bool exact = false;
  MetricValue t1_dir{Metric::kDIR, std::nullopt};
  MetricValue t0_dir{Metric::kDIR, std::nullopt};
  std::uint64_t seed = 0;

  std::vector<LabeledWindow> t0(std::span<const LabeledWindow> t1) const;
};

// Base-rate parity by removing windows from a single (group, label) cell,
// chosen at random within the cell. Throws AuditError when a group lacks
// positives or negatives, or when parity within `tolerance` is unreachable.
BenchmarkPair make_parity_benchmark(std::span<const LabeledWindow> t1,
                                    const GroupPartition& partition,
                                    double tolerance, std::uint64_t seed);

struct EvaluationFinding {
  std::string label;
  ModelVariant variant = ModelVariant::kUnaware;
  MetricValue dir_t1{Metric::kDIR, std::nullopt};
  MetricValue dir_t0{Metric::kDIR, std::nullopt};
  // |DIR_T0 - 1| < |DIR_T1 - 1|
  std::optional<bool> hiding;
};

EvaluationFinding audit_evaluation(const BatchClassifier& classifier, ModelVariant variant,
                                   std::span<const LabeledWindow> t1,
                                   const BenchmarkPair& benchmark,
                                   const GroupPartition& partition);

}  // namespace fairaudit
