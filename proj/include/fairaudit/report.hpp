#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fairaudit/data_audit.hpp"
#include "fairaudit/dataset.hpp"
#include "fairaudit/model.hpp"
#include "fairaudit/model_audit.hpp"

namespace fairaudit {

using AttributePair = std::pair<Attribute, Attribute>;

struct AuditConfig {
  LabelRule label_rule = MedianSplit{};
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  ModelConfig model;
  Bands bands;
  double deviation_tolerance = 0.5;
  double min_fraction = 0.2;
  double alpha = 0.05;
  double parity_tolerance = 0.05;
  double amplification_threshold = 0.05;
  bool device_models = false;
  std::vector<Attribute> attributes{kAllAttributes.begin(), kAllAttributes.end()};
  std::vector<AttributePair> pairs = default_pairs();

  // diabetes crossed with every other attribute
  static std::vector<AttributePair> default_pairs();
  void validate() const;
};

void to_json(nlohmann::json& j, const AuditConfig& c);
void from_json(const nlohmann::json& j, AuditConfig& c);
AuditConfig load_config(const std::filesystem::path& path);

// "a:b,c:d"; throws ConfigError.
std::vector<AttributePair> parse_pairs(std::string_view text);

struct LoadedData {
  std::vector<StepRecord> records;
  std::vector<RawAttributeProfile> raw_profiles;
  std::vector<BinarizedProfile> profiles;
  ProfileIndex index;
};

// Throws DataError naming the offending file.
LoadedData load_data(const std::filesystem::path& records, const std::filesystem::path& profiles);
LoadedData prepare_data(std::vector<StepRecord> records,
                        std::vector<RawAttributeProfile> raw_profiles);

struct PreparedWindows {
  std::vector<LabeledWindow> windows;
  double threshold = 0.0;
  DatasetSplit split;
  // Test windows of users with complete profiles; every model is scored here.
  std::vector<LabeledWindow> model_test;
  std::vector<LabeledWindow> aware_train;
  std::vector<LabeledWindow> aware_test;  // model_test with attribute features
};

// Windows, labels (median from the training split when configured) and the
// user-disjoint split.
PreparedWindows prepare_windows(const LoadedData& data, const AuditConfig& config);

std::vector<GroupPartition> single_partitions(const LoadedData& data,
                                              std::span<const Attribute> attributes);

// Runs `task(i)` for i in [0, n) on at most `threads` threads.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& task);
// FAIRAUDIT_THREADS, else hardware concurrency, at least 1.
unsigned thread_cap();

using Progress = std::function<void(const std::string&)>;

struct TrainedModels {
  TrainingResult unaware;
  std::optional<TrainingResult> aware;
  std::vector<std::string> aware_warnings;
  std::vector<PersonalizationResult> personalized;  // one per audited attribute
};

TrainedModels train_models(const LoadedData& data, const PreparedWindows& prepared,
                           const AuditConfig& config, unsigned threads,
                           const Progress& progress = {});

struct DataAuditResult {
  std::vector<RepresentationFinding> representation;
  std::vector<MeasurementAudit> measurement;  // one per attribute
};

DataAuditResult run_data_audit(const LoadedData& data, const PreparedWindows& prepared,
                               const ReferencePopulation* reference,
                               const AuditConfig& config);

struct BenchmarkOutcome {
  std::string label;
  Attribute attribute = Attribute::kGender;
  std::optional<BenchmarkPair> pair;
  std::string error;
  std::vector<EvaluationFinding> evaluations;
  std::size_t t1_size = 0;
};

struct ModelAuditResult {
  std::vector<ModelBiasFinding> aggregation;
  std::vector<IntersectionalFinding> intersectional;
  std::vector<LearningFinding> learning;
  std::vector<BenchmarkOutcome> benchmarks;
};

ModelAuditResult run_model_audit(const LoadedData& data, const PreparedWindows& prepared,
                                 const TrainedModels& models, const AuditConfig& config,
                                 unsigned threads);

std::vector<BenchmarkOutcome> build_benchmarks(const LoadedData& data,
                                               const PreparedWindows& prepared,
                                               const AuditConfig& config);

struct ReportInputs {
  const AuditConfig* config = nullptr;
  const LoadedData* data = nullptr;
  const PreparedWindows* prepared = nullptr;
  const DataAuditResult* data_audit = nullptr;
  const TrainedModels* models = nullptr;
  const ModelAuditResult* model_audit = nullptr;
  std::string command;
  std::string generated_at;  // the only field allowed to vary between runs
};

nlohmann::json build_report(const ReportInputs& in);

// True when any finding in the report is marked degenerate.
bool report_degenerate(const nlohmann::json& report);

// fig3_ratios.csv ... fig8_benchmark.csv for whichever sections are present.
void write_figure_csvs(const std::filesystem::path& dir, const DataAuditResult* data_audit,
                       const ModelAuditResult* model_audit);

std::vector<std::string> deployment_checklist();

nlohmann::json metric_json(const MetricValue& m);

}  // namespace fairaudit
