#include "fairaudit/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fairaudit/common.hpp"
#include "fairaudit/io.hpp"

namespace fairaudit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

std::vector<AttributePair> AuditConfig::default_pairs() {
  std::vector<AttributePair> out;
  for (const auto a : kAllAttributes) {
    if (a != Attribute::kDiabetes) out.emplace_back(Attribute::kDiabetes, a);
  }
  return out;
}

void AuditConfig::validate() const {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must be in (0, 1)");
  }
  if (const auto* fixed = std::get_if<FixedThreshold>(&label_rule); fixed && !(fixed->steps >= 0.0)) {
    throw ConfigError("label_rule.steps must be >= 0");
  }
  if (!(bands.ratio_low > 0.0 && bands.ratio_low <= bands.ratio_high)) {
    throw ConfigError("ratio band must satisfy 0 < low <= high");
  }
  if (!(bands.diff_low <= bands.diff_high)) throw ConfigError("difference band must satisfy low <= high");
  if (!(deviation_tolerance > 0.0)) throw ConfigError("deviation_tolerance must be positive");
  if (!(min_fraction >= 0.0 && min_fraction <= 1.0)) throw ConfigError("min_fraction must be in [0, 1]");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (!(parity_tolerance >= 0.0)) throw ConfigError("parity_tolerance must be >= 0");
  if (!(amplification_threshold >= 0.0)) throw ConfigError("amplification_threshold must be >= 0");
  for (const auto& [a, b] : pairs) {
    if (a == b) throw ConfigError("pair repeats attribute " + std::string(attribute_name(a)));
  }
  model.validate();
}

void to_json(json& j, const AuditConfig& c) {
  json rule;
  if (const auto* fixed = std::get_if<FixedThreshold>(&c.label_rule)) {
    rule = {{"type", "fixed"}, {"steps", fixed->steps}};
  } else {
    rule = {{"type", "median"}};
  }
  json attrs = json::array();
  for (auto a : c.attributes) attrs.push_back(attribute_name(a));
  json pairs = json::array();
  for (const auto& [a, b] : c.pairs) pairs.push_back({attribute_name(a), attribute_name(b)});
  j = json{{"label_rule", rule},
           {"test_fraction", c.test_fraction},
           {"seed", c.seed},
           {"model", c.model},
           {"bands",
            {{"ratio", {c.bands.ratio_low, c.bands.ratio_high}},
             {"difference", {c.bands.diff_low, c.bands.diff_high}}}},
           {"deviation_tolerance", c.deviation_tolerance},
           {"min_fraction", c.min_fraction},
           {"alpha", c.alpha},
           {"parity_tolerance", c.parity_tolerance},
           {"amplification_threshold", c.amplification_threshold},
           {"device_models", c.device_models},
           {"attributes", attrs},
           {"pairs", pairs}};
}

void from_json(const json& j, AuditConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "label_rule", "test_fraction",   "seed",   "model",   "bands",
      "deviation_tolerance", "min_fraction", "alpha", "parity_tolerance",
      "amplification_threshold", "device_models", "attributes", "pairs"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config option '" + key + "'");
  }
  try {
    if (j.contains("label_rule")) {
      const auto& r = j.at("label_rule");
      const auto type = r.at("type").get<std::string>();
      if (type == "median") {
        c.label_rule = MedianSplit{};
      } else if (type == "fixed") {
        c.label_rule = FixedThreshold{r.at("steps").get<double>()};
      } else {
        throw ConfigError("label_rule.type must be 'median' or 'fixed'");
      }
    }
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.seed = j.value("seed", c.seed);
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("bands")) {
      const auto& b = j.at("bands");
      if (b.contains("ratio")) {
        c.bands.ratio_low = b.at("ratio").at(0).get<double>();
        c.bands.ratio_high = b.at("ratio").at(1).get<double>();
      }
      if (b.contains("difference")) {
        c.bands.diff_low = b.at("difference").at(0).get<double>();
        c.bands.diff_high = b.at("difference").at(1).get<double>();
      }
    }
    c.deviation_tolerance = j.value("deviation_tolerance", c.deviation_tolerance);
    c.min_fraction = j.value("min_fraction", c.min_fraction);
    c.alpha = j.value("alpha", c.alpha);
    c.parity_tolerance = j.value("parity_tolerance", c.parity_tolerance);
    c.amplification_threshold = j.value("amplification_threshold", c.amplification_threshold);
    c.device_models = j.value("device_models", c.device_models);
    if (j.contains("attributes")) {
      c.attributes.clear();
      for (const auto& a : j.at("attributes")) c.attributes.push_back(parse_attribute(a.get<std::string>()));
    }
    if (j.contains("pairs")) {
      c.pairs.clear();
      for (const auto& p : j.at("pairs")) {
        if (!p.is_array() || p.size() != 2) throw ConfigError("each pair must list two attributes");
        c.pairs.emplace_back(parse_attribute(p[0].get<std::string>()),
                             parse_attribute(p[1].get<std::string>()));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
}

AuditConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j.get<AuditConfig>();
}

std::vector<AttributePair> parse_pairs(std::string_view text) {
  std::vector<AttributePair> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    if (!item.empty()) {
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) {
        throw ConfigError("pair '" + std::string(item) + "' must look like a:b");
      }
      const auto a = parse_attribute(item.substr(0, colon));
      const auto b = parse_attribute(item.substr(colon + 1));
      if (a == b) throw ConfigError("pair repeats attribute " + std::string(attribute_name(a)));
      out.emplace_back(a, b);
    }
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

LoadedData prepare_data(std::vector<StepRecord> records,
                        std::vector<RawAttributeProfile> raw_profiles) {
  validate_records(records);
  LoadedData d;
  d.records = std::move(records);
  d.raw_profiles = std::move(raw_profiles);
  for (const auto& p : d.raw_profiles) {
    try {
      d.profiles.push_back(binarize(p));
    } catch (const DataError& e) {
      throw DataError("profile " + p.user_id + ": " + e.what());
    }
  }
  d.index = index_profiles(d.profiles);
  if (d.index.size() != d.profiles.size()) throw DataError("profiles contain duplicate user_id");
  return d;
}

LoadedData load_data(const std::filesystem::path& records, const std::filesystem::path& profiles) {
  auto r = read_records(records);
  auto p = read_profiles(profiles);
  try {
    return prepare_data(std::move(r), std::move(p));
  } catch (const DataError& e) {
    throw DataError(records.string() + " / " + profiles.string() + ": " + e.what());
  }
}

PreparedWindows prepare_windows(const LoadedData& data, const AuditConfig& config) {
  PreparedWindows out;
  const bool median = std::holds_alternative<MedianSplit>(config.label_rule);
  out.windows = build_windows(data.records, median ? LabelRule{FixedThreshold{0.0}} : config.label_rule);
  if (out.windows.empty()) throw DataError("no user has three consecutive observed days");
  out.split = split(out.windows, config.test_fraction, config.seed);
  out.threshold = resolve_threshold(config.label_rule, out.split.train);
  relabel(out.windows, out.threshold);
  relabel(out.split.train, out.threshold);
  relabel(out.split.test, out.threshold);

  for (const auto& w : out.split.test) {
    const auto it = data.index.find(w.user_id);
    if (it != data.index.end() && it->second.complete()) out.model_test.push_back(w);
  }
  out.aware_train = with_awareness(out.split.train, data.index);
  out.aware_test = with_awareness(out.model_test, data.index);
  return out;
}

std::vector<GroupPartition> single_partitions(const LoadedData& data,
                                              std::span<const Attribute> attributes) {
  std::vector<GroupPartition> out;
  for (const auto a : attributes) out.push_back(partition(data.profiles, a));
  return out;
}

unsigned thread_cap() {
  if (const char* env = std::getenv("FAIRAUDIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    throw ConfigError("FAIRAUDIT_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& task) {
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(std::max(1u, threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

TrainedModels train_models(const LoadedData& data, const PreparedWindows& prepared,
                           const AuditConfig& config, unsigned threads,
                           const Progress& progress) {
  TrainedModels out;
  auto say = [&](const std::string& line) {
    if (progress) progress(line);
  };
  ModelConfig unaware_cfg = config.model;
  unaware_cfg.seed = derive_seed(config.seed, 100);
  ModelConfig aware_cfg = config.model;
  aware_cfg.seed = derive_seed(config.seed, 101);

  parallel_for(2, threads, [&](std::size_t i) {
    if (i == 0) {
      say("training unaware model");
      out.unaware = train_shared(prepared.split.train, unaware_cfg, false);
    } else if (prepared.aware_train.empty()) {
      out.aware_warnings.push_back("no training users with complete profiles; aware model skipped");
    } else {
      say("training aware model");
      out.aware = train_shared(prepared.aware_train, aware_cfg, true);
    }
  });

  const auto partitions = single_partitions(data, config.attributes);
  out.personalized.resize(partitions.size());
  parallel_for(partitions.size(), threads, [&](std::size_t i) {
    say("personalizing for " + partitions[i].label());
    ModelConfig cfg = config.model;
    cfg.seed = derive_seed(config.seed, 200 + static_cast<std::uint64_t>(partitions[i].attributes[0]));
    out.personalized[i] = personalize(out.unaware.model, partitions[i], prepared.split.train, cfg);
  });
  return out;
}

DataAuditResult run_data_audit(const LoadedData& data, const PreparedWindows& prepared,
                               const ReferencePopulation* reference,
                               const AuditConfig& config) {
  DataAuditResult out;
  std::vector<std::vector<RepresentationFinding>> parts;
  if (reference) {
    parts.push_back(audit_misrepresentation(data.profiles, *reference, config.attributes,
                                            config.deviation_tolerance));
  }
  parts.push_back(audit_underrepresentation(data.profiles, config.attributes, config.min_fraction));
  std::vector<RepresentationFinding> uneven;
  const auto partitions = single_partitions(data, config.attributes);
  for (const auto& p : partitions) {
    uneven.push_back(audit_uneven_sampling(prepared.windows, p, config.bands));
  }
  parts.push_back(std::move(uneven));
  out.representation = merge_representation(parts);

  MeasurementOptions options;
  options.alpha = config.alpha;
  options.device_models = config.device_models;
  for (const auto& p : partitions) out.measurement.push_back(audit_measurement(data.records, p, options));
  return out;
}

std::vector<BenchmarkOutcome> build_benchmarks(const LoadedData& data,
                                               const PreparedWindows& prepared,
                                               const AuditConfig& config) {
  std::vector<BenchmarkOutcome> out;
  for (const auto& p : single_partitions(data, config.attributes)) {
    BenchmarkOutcome b;
    b.label = p.label();
    b.attribute = p.attributes[0];
    b.t1_size = prepared.model_test.size();
    try {
      b.pair = make_parity_benchmark(prepared.model_test, p, config.parity_tolerance,
                                     derive_seed(config.seed, 300 + static_cast<std::uint64_t>(b.attribute)));
    } catch (const AuditError& e) {
      b.error = e.what();
    }
    out.push_back(std::move(b));
  }
  return out;
}

ModelAuditResult run_model_audit(const LoadedData& data, const PreparedWindows& prepared,
                                 const TrainedModels& models, const AuditConfig& config,
                                 unsigned threads) {
  ModelAuditResult out;
  const auto partitions = single_partitions(data, config.attributes);
  const auto& test = prepared.model_test;

  // The aware model reads the feature-extended copy of the same test windows.
  std::vector<ActivityLabel> aware_predictions;
  if (models.aware) aware_predictions = classifier_for(models.aware->model)(prepared.aware_test);
  const BatchClassifier aware = [&](std::span<const LabeledWindow> windows) {
    if (windows.data() != test.data() || windows.size() != test.size()) {
      throw AuditError("aware predictions are cached for the model test set only");
    }
    return aware_predictions;
  };
  const auto unaware_predictions = classifier_for(models.unaware.model)(test);
  const BatchClassifier unaware = [&](std::span<const LabeledWindow> windows) {
    if (windows.data() == test.data() && windows.size() == test.size()) return unaware_predictions;
    return classifier_for(models.unaware.model)(windows);
  };

  out.aggregation = audit_aggregation(perfect_classifier(), ModelVariant::kDataBaseRate, test,
                                      partitions, config.bands, config.amplification_threshold);
  if (models.aware) {
    auto a = audit_aggregation(aware, ModelVariant::kAware, test, partitions, config.bands,
                               config.amplification_threshold);
    out.aggregation.insert(out.aggregation.end(), a.begin(), a.end());
  }
  {
    auto u = audit_aggregation(unaware, ModelVariant::kUnaware, test, partitions, config.bands,
                               config.amplification_threshold);
    out.aggregation.insert(out.aggregation.end(), u.begin(), u.end());
  }
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    out.aggregation.push_back(audit_partition(classifier_for(models.personalized[i].model),
                                              ModelVariant::kPersonalized, test, partitions[i],
                                              config.bands, config.amplification_threshold));
  }

  out.intersectional = audit_intersectional(unaware, ModelVariant::kUnaware, test, data.profiles,
                                            config.pairs, config.bands);

  out.learning.resize(partitions.size());
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    out.learning[i] = audit_learning(unaware, classifier_for(models.personalized[i].model), test,
                                     partitions[i], config.bands);
  }

  out.benchmarks = build_benchmarks(data, prepared, config);
  parallel_for(out.benchmarks.size(), threads, [&](std::size_t i) {
    auto& b = out.benchmarks[i];
    if (!b.pair) return;
    b.evaluations.push_back(audit_evaluation(perfect_classifier(), ModelVariant::kDataBaseRate,
                                             test, *b.pair, partitions[i]));
    if (models.aware) {
      b.evaluations.push_back(
          audit_evaluation(aware, ModelVariant::kAware, test, *b.pair, partitions[i]));
    }
    b.evaluations.push_back(
        audit_evaluation(unaware, ModelVariant::kUnaware, test, *b.pair, partitions[i]));
    b.evaluations.push_back(audit_evaluation(classifier_for(models.personalized[i].model),
                                             ModelVariant::kPersonalized, test, *b.pair,
                                             partitions[i]));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace {

json number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json verdict_json(const std::optional<Verdict>& v) {
  if (!v) return nullptr;
  return {{"harmed", harmed_name(v->harmed)},
          {"band", {v->low, v->high}},
          {"analogical", v->analogical}};
}

json counts_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

json suite_json(const MetricSuite& s, const Bands& bands) {
  json out = json::array();
  for (const auto* m : {&s.dir_selection, &s.spd, &s.hybrid.fpr_ratio, &s.hybrid.fnr_ratio,
                        &s.hybrid.for_ratio, &s.hybrid.err, &s.wysiwyg.eod, &s.wysiwyg.aod}) {
    auto j = metric_json(*m);
    j["verdict"] = verdict_json(verdict(*m, bands));
    out.push_back(j);
  }
  return out;
}

json finding_json(const ModelBiasFinding& f, const Bands& bands) {
  json attrs = json::array();
  for (auto a : f.attributes) attrs.push_back(attribute_name(a));
  return {{"label", f.label},
          {"attributes", attrs},
          {"strategy", strategy_name(f.strategy)},
          {"variant", variant_name(f.variant)},
          {"counts", {{"g0", counts_json(f.outcomes.g0)}, {"g1", counts_json(f.outcomes.g1)}}},
          {"dir", metric_json(f.dir)},
          {"data_dir", metric_json(f.data_dir)},
          {"verdict", verdict_json(f.verdict)},
          {"propagation", f.propagation ? json(propagation_name(*f.propagation)) : json(nullptr)},
          {"metrics", suite_json(f.metrics, bands)},
          {"degenerate", f.degenerate},
          {"diagnostics", f.diagnostics}};
}

json training_json(const TrainingResult& r) {
  return {{"initial_loss", r.initial_loss},
          {"final_loss", r.final_loss},
          {"epochs_run", r.epoch_losses.size()},
          {"warnings", r.warnings}};
}

}  // namespace

json metric_json(const MetricValue& m) {
  return {{"metric", metric_name(m.metric)},
          {"kind", m.kind() == MetricKind::kRatio ? "ratio" : "difference"},
          {"value", number(m.value)},
          {"defined", m.defined()}};
}

std::vector<std::string> deployment_checklist() {
  return {
      "Re-run the data audits whenever the user base or device mix changes.",
      "Compare live selection rates per group against the audited test-set DIR.",
      "Check that personalized branches are not serving groups absent from training.",
      "Report results on the random test set as well as any parity benchmark.",
      "Review measurement findings before attributing group gaps to behaviour.",
  };
}

json build_report(const ReportInputs& in) {
  const auto& config = *in.config;
  json report;
  report["tool"] = "fairaudit";
  report["tool_version"] = kToolVersion;
  report["command"] = in.command;
  report["generated_at"] = in.generated_at;
  report["seed"] = config.seed;
  report["config"] = config;

  json diagnostics = json::array();
  bool degenerate = false;

  if (in.data) {
    const auto& d = *in.data;
    json sizes = json::object();
    for (const auto a : config.attributes) {
      std::int64_t minority = 0, majority = 0, missing = 0;
      for (const auto& p : d.profiles) {
        const auto g = p[a];
        (g == GroupLabel::kMinority ? minority : g == GroupLabel::kMajority ? majority : missing) += 1;
      }
      sizes[std::string(attribute_name(a))] = {
          {"minority", minority}, {"majority", majority}, {"missing", missing}};
    }
    json fp = {{"records", d.records.size()},
               {"profiles", d.profiles.size()},
               {"group_sizes", sizes}};
    if (in.prepared) {
      const auto& p = *in.prepared;
      fp["windows"] = p.windows.size();
      fp["label_threshold"] = p.threshold;
      fp["train_windows"] = p.split.train.size();
      fp["test_windows"] = p.split.test.size();
      fp["test_users"] = p.split.test_users.size();
      fp["model_test_windows"] = p.model_test.size();
    }
    report["dataset"] = fp;
  }

  if (in.data_audit) {
    json rep = json::array();
    for (const auto& f : in.data_audit->representation) {
      json flags = json::array();
      for (auto fl : f.flags) flags.push_back(flag_name(fl));
      rep.push_back({{"attribute", attribute_name(f.attribute)},
                     {"minority_count", f.minority_count},
                     {"majority_count", f.majority_count},
                     {"dataset_ratio", number(f.dataset_ratio)},
                     {"reference_ratio", number(f.reference_ratio)},
                     {"minority_fraction", number(f.minority_fraction)},
                     {"base_rate_dir", metric_json(f.base_rate_dir)},
                     {"base_rate_verdict", verdict_json(f.base_rate_verdict)},
                     {"flags", flags},
                     {"degenerate", f.degenerate},
                     {"diagnostics", f.diagnostics}});
      degenerate = degenerate || f.degenerate;
    }
    report["representation"] = rep;

    json meas = json::array();
    for (std::size_t i = 0; i < in.data_audit->measurement.size(); ++i) {
      const auto& m = in.data_audit->measurement[i];
      json findings = json::array();
      for (const auto& f : m.findings) {
        findings.push_back({{"category", f.category},
                            {"users_g0", f.users_g0},
                            {"users_g1", f.users_g1},
                            {"with_category_g0", f.with_category_g0},
                            {"with_category_g1", f.with_category_g1},
                            {"proportion_g0", f.proportion_g0},
                            {"proportion_g1", f.proportion_g1},
                            {"p_value", f.p_value},
                            {"test", f.test == ProportionTest::kPooledZ ? "pooled_z" : "fisher_exact"},
                            {"significant", f.significant}});
      }
      meas.push_back({{"attribute", attribute_name(config.attributes[i])},
                      {"findings", findings},
                      {"degenerate", m.findings.empty()},
                      {"diagnostics", m.diagnostics}});
      degenerate = degenerate || m.findings.empty();
    }
    report["measurement"] = meas;
  }

  if (in.models) {
    const auto& m = *in.models;
    json models = {{"unaware", training_json(m.unaware)}};
    models["aware"] = m.aware ? training_json(*m.aware) : json(nullptr);
    models["aware_warnings"] = m.aware_warnings;
    json pers = json::array();
    for (std::size_t i = 0; i < m.personalized.size(); ++i) {
      const auto& p = m.personalized[i];
      pers.push_back({{"attribute", attribute_name(config.attributes[i])},
                      {"loss_before_g0", p.loss_before_g0},
                      {"loss_after_g0", p.loss_after_g0},
                      {"loss_before_g1", p.loss_before_g1},
                      {"loss_after_g1", p.loss_after_g1},
                      {"g0_kept_shared", p.model.g0_kept_shared},
                      {"g1_kept_shared", p.model.g1_kept_shared},
                      {"warnings", p.warnings}});
    }
    models["personalized"] = pers;
    report["models"] = models;
  }

  if (in.model_audit) {
    const auto& ma = *in.model_audit;
    json agg = json::array();
    for (const auto& f : ma.aggregation) {
      agg.push_back(finding_json(f, config.bands));
      degenerate = degenerate || f.degenerate;
    }
    json inter = json::array();
    for (const auto& f : ma.intersectional) {
      inter.push_back({{"first", attribute_name(f.first)},
                       {"second", attribute_name(f.second)},
                       {"strategy", strategy_name(f.strategy)},
                       {"first_dir", metric_json(f.first_dir)},
                       {"second_dir", metric_json(f.second_dir)},
                       {"skipped", f.skipped},
                       {"finding", finding_json(f.finding, config.bands)}});
    }
    json learning = json::array();
    for (const auto& f : ma.learning) {
      learning.push_back({{"attribute", f.label},
                          {"dir_shared", metric_json(f.dir_shared)},
                          {"dir_personalized", metric_json(f.dir_personalized)},
                          {"verdict_shared", verdict_json(f.verdict_shared)},
                          {"verdict_personalized", verdict_json(f.verdict_personalized)},
                          {"delta", number(f.delta)},
                          {"amplified", f.delta ? json(*f.delta > 0.0) : json(nullptr)}});
    }
    report["model_bias"] = {{"aggregation", agg}, {"intersectional", inter}, {"learning", learning}};

    json benches = json::array();
    for (const auto& b : ma.benchmarks) {
      json entry = {{"attribute", b.label}, {"t1_size", b.t1_size}};
      if (b.pair) {
        entry["t0_size"] = b.pair->t0_indices.size();
        entry["removed"] = b.pair->removed;
        entry["removed_from"] = removal_cell_name(b.pair->cell);
        entry["exact"] = b.pair->exact;
        entry["t1_base_rate_dir"] = metric_json(b.pair->t1_dir);
        entry["t0_base_rate_dir"] = metric_json(b.pair->t0_dir);
        entry["error"] = nullptr;
      } else {
        entry["t0_size"] = nullptr;
        entry["error"] = b.error;
        degenerate = true;
        diagnostics.push_back(b.label + ": " + b.error);
      }
      json evals = json::array();
      for (const auto& e : b.evaluations) {
        evals.push_back({{"variant", variant_name(e.variant)},
                         {"dir_t1", metric_json(e.dir_t1)},
                         {"dir_t0", metric_json(e.dir_t0)},
                         {"hiding", e.hiding ? json(*e.hiding) : json(nullptr)}});
      }
      entry["evaluations"] = evals;
      benches.push_back(entry);
    }
    report["benchmarks"] = benches;
  }

  report["deployment_checklist"] = deployment_checklist();
  report["diagnostics"] = diagnostics;
  report["degenerate"] = degenerate;
  return report;
}

bool report_degenerate(const json& report) { return report.value("degenerate", false); }

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream s;
  s.precision(17);
  s << *v;
  return s.str();
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_figure_csvs(const std::filesystem::path& dir, const DataAuditResult* data_audit,
                       const ModelAuditResult* model_audit) {
  if (data_audit) {
    auto fig3 = open_csv(dir / "fig3_ratios.csv");
    fig3 << "attribute,dataset_ratio,reference_ratio\n";
    auto fig4 = open_csv(dir / "fig4_base_dir.csv");
    fig4 << "attribute,base_rate_dir,harmed\n";
    for (const auto& f : data_audit->representation) {
      fig3 << attribute_name(f.attribute) << ',' << cell(f.dataset_ratio) << ','
           << cell(f.reference_ratio) << '\n';
      fig4 << attribute_name(f.attribute) << ',' << cell(f.base_rate_dir.value) << ','
           << (f.base_rate_verdict ? harmed_name(f.base_rate_verdict->harmed) : "NA") << '\n';
    }
  }
  if (model_audit) {
    auto fig6 = open_csv(dir / "fig6_model_dir.csv");
    fig6 << "attribute,variant,dir\n";
    for (const auto& f : model_audit->aggregation) {
      fig6 << f.label << ',' << variant_name(f.variant) << ',' << cell(f.dir.value) << '\n';
    }
    auto fig7 = open_csv(dir / "fig7_intersectional.csv");
    fig7 << "pair,strategy,variant,dir,first_dir,second_dir\n";
    for (const auto& f : model_audit->intersectional) {
      fig7 << attribute_name(f.first) << '+' << attribute_name(f.second) << ','
           << strategy_name(f.strategy) << ',' << variant_name(f.finding.variant) << ','
           << cell(f.finding.dir.value) << ',' << cell(f.first_dir.value) << ','
           << cell(f.second_dir.value) << '\n';
    }
    auto fig8 = open_csv(dir / "fig8_benchmark.csv");
    fig8 << "attribute,variant,dir_t1,dir_t0,hiding\n";
    for (const auto& b : model_audit->benchmarks) {
      for (const auto& e : b.evaluations) {
        fig8 << b.label << ',' << variant_name(e.variant) << ',' << cell(e.dir_t1.value) << ','
             << cell(e.dir_t0.value) << ','
             << (e.hiding ? (*e.hiding ? "true" : "false") : "NA") << '\n';
      }
    }
  }
}

}  // namespace fairaudit
