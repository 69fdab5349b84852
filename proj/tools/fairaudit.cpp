// fairaudit command-line front end.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fairaudit/common.hpp"
#include "fairaudit/data_audit.hpp"
#include "fairaudit/io.hpp"
#include "fairaudit/model.hpp"
#include "fairaudit/report.hpp"
#include "fairaudit/synth.hpp"

namespace fs = std::filesystem;
using namespace fairaudit;
using nlohmann::json;

namespace {

struct Options {
  std::string records;
  std::string profiles;
  std::string reference;
  std::string config;
  std::string models;
  std::optional<std::uint64_t> seed;
  std::string out = "fairaudit_out";
  std::string attributes;
  std::string pairs;
  bool strict = false;
};

std::mutex log_mutex;

void log_line(const std::string& line) {
  std::lock_guard lock(log_mutex);
  std::cerr << "fairaudit: " << line << std::endl;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

AuditConfig effective_config(const Options& o) {
  AuditConfig c = o.config.empty() ? AuditConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.attributes.empty()) c.attributes = parse_attribute_list(o.attributes);
  if (!o.pairs.empty()) c.pairs = parse_pairs(o.pairs);
  if (c.attributes.empty()) throw ConfigError("no attributes to audit");
  c.validate();
  return c;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required option ") + flag);
}

fs::path out_dir(const Options& o) {
  fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string());
  return dir;
}

int finish(const json& report, const fs::path& dir, bool strict) {
  save_json(report, dir / "report.json");
  log_line("wrote " + (dir / "report.json").string());
  if (strict && report_degenerate(report)) {
    log_line("degenerate audit (see diagnostics); failing under --strict");
    return 3;
  }
  return 0;
}

std::string model_file(Attribute a) {
  return "personalized_" + std::string(attribute_name(a)) + ".json";
}

int cmd_audit_data(const Options& o) {
  require(o.records, "--records");
  require(o.profiles, "--profiles");
  const auto config = effective_config(o);
  const auto data = load_data(o.records, o.profiles);
  std::optional<ReferencePopulation> reference;
  if (!o.reference.empty()) reference = read_reference(fs::path(o.reference));
  const auto prepared = prepare_windows(data, config);
  const auto audit = run_data_audit(data, prepared, reference ? &*reference : nullptr, config);
  const auto dir = out_dir(o);
  write_figure_csvs(dir, &audit, nullptr);
  ReportInputs in{&config, &data, &prepared, &audit, nullptr, nullptr, "audit-data", utc_now()};
  return finish(build_report(in), dir, o.strict);
}

int cmd_train(const Options& o) {
  require(o.records, "--records");
  require(o.profiles, "--profiles");
  const auto config = effective_config(o);
  const auto data = load_data(o.records, o.profiles);
  const auto prepared = prepare_windows(data, config);
  const auto models = train_models(data, prepared, config, thread_cap(), log_line);
  const auto dir = out_dir(o);
  save_json(to_json(models.unaware.model), dir / "model_unaware.json");
  if (models.aware) save_json(to_json(models.aware->model), dir / "model_aware.json");
  for (std::size_t i = 0; i < models.personalized.size(); ++i) {
    save_json(to_json(models.personalized[i].model), dir / model_file(config.attributes[i]));
  }
  ReportInputs in{&config, &data, &prepared, nullptr, &models, nullptr, "train", utc_now()};
  return finish(build_report(in), dir, o.strict);
}

int cmd_audit_model(const Options& o) {
  require(o.records, "--records");
  require(o.profiles, "--profiles");
  require(o.models, "--models");
  const auto config = effective_config(o);
  const auto data = load_data(o.records, o.profiles);
  const auto prepared = prepare_windows(data, config);
  const fs::path mdir(o.models);
  TrainedModels models;
  models.unaware.model = sequence_model_from_json(load_json(mdir / "model_unaware.json"));
  if (fs::exists(mdir / "model_aware.json")) {
    TrainingResult aware;
    aware.model = sequence_model_from_json(load_json(mdir / "model_aware.json"));
    models.aware = aware;
  }
  for (const auto a : config.attributes) {
    PersonalizationResult p;
    p.model = personalized_model_from_json(load_json(mdir / model_file(a)));
    models.personalized.push_back(std::move(p));
  }
  const auto audit = run_model_audit(data, prepared, models, config, thread_cap());
  const auto dir = out_dir(o);
  write_figure_csvs(dir, nullptr, &audit);
  ReportInputs in{&config, &data, &prepared, nullptr, nullptr, &audit, "audit-model", utc_now()};
  return finish(build_report(in), dir, o.strict);
}

int cmd_make_benchmark(const Options& o) {
  require(o.records, "--records");
  require(o.profiles, "--profiles");
  const auto config = effective_config(o);
  const auto data = load_data(o.records, o.profiles);
  const auto prepared = prepare_windows(data, config);
  const auto benchmarks = build_benchmarks(data, prepared, config);
  const auto dir = out_dir(o);
  json summary = json::array();
  bool degenerate = false;
  for (const auto& b : benchmarks) {
    json entry = {{"attribute", b.label}, {"t1_size", b.t1_size}};
    if (!b.pair) {
      entry["error"] = b.error;
      degenerate = true;
      log_line(b.label + ": " + b.error);
    } else {
      entry["t0_size"] = b.pair->t0_indices.size();
      entry["removed"] = b.pair->removed;
      entry["removed_from"] = removal_cell_name(b.pair->cell);
      entry["t1_base_rate_dir"] = metric_json(b.pair->t1_dir);
      entry["t0_base_rate_dir"] = metric_json(b.pair->t0_dir);
      std::ofstream csv(dir / ("benchmark_" + b.label + ".csv"));
      csv << "user_id,day_start,label,in_t0\n";
      std::size_t next = 0;
      for (std::size_t i = 0; i < prepared.model_test.size(); ++i) {
        const bool kept = next < b.pair->t0_indices.size() && b.pair->t0_indices[next] == i;
        if (kept) ++next;
        const auto& w = prepared.model_test[i];
        csv << csv_escape(w.user_id) << ',' << format_timestamp(w.day_start) << ','
            << (w.positive() ? "high" : "low") << ',' << (kept ? 1 : 0) << '\n';
      }
    }
    summary.push_back(entry);
  }
  json out = {{"tool", "fairaudit"},         {"tool_version", kToolVersion},
              {"seed", config.seed},         {"label_threshold", prepared.threshold},
              {"benchmarks", summary},       {"degenerate", degenerate}};
  save_json(out, dir / "benchmarks.json");
  log_line("wrote " + (dir / "benchmarks.json").string());
  return o.strict && degenerate ? 3 : 0;
}

int cmd_synth(const Options& o) {
  SynthSpec spec;
  if (!o.config.empty()) {
    const auto j = load_json(o.config);
    from_json(j, spec);
  }
  if (o.seed) spec.seed = *o.seed;
  spec.validate();
  const auto corpus = generate(spec);
  const auto dir = out_dir(o);
  {
    std::ofstream r(dir / "records.csv");
    write_records(r, corpus.records);
    std::ofstream p(dir / "profiles.csv");
    write_profiles(p, corpus.profiles);
    if (!r || !p) throw ConfigError("cannot write synthetic corpus to " + dir.string());
  }
  save_json(to_json(corpus.truth), dir / "ground_truth.json");
  json spec_json = spec;
  save_json(spec_json, dir / "synth_spec.json");
  // An audit config whose fixed threshold matches the generator's labels.
  AuditConfig audit;
  audit.label_rule = FixedThreshold{spec.threshold};
  audit.seed = spec.seed;
  save_json(json(audit), dir / "config.json");
  for (const auto& w : corpus.truth.warnings) log_line("warning: " + w);
  log_line("wrote " + std::to_string(corpus.records.size()) + " records for " +
           std::to_string(corpus.profiles.size()) + " users to " + dir.string());
  return 0;
}

int cmd_full_audit(const Options& o) {
  require(o.records, "--records");
  require(o.profiles, "--profiles");
  const auto config = effective_config(o);
  const unsigned threads = thread_cap();
  log_line("loading data");
  const auto data = load_data(o.records, o.profiles);
  std::optional<ReferencePopulation> reference;
  if (!o.reference.empty()) reference = read_reference(fs::path(o.reference));
  const auto prepared = prepare_windows(data, config);
  log_line("data audits");
  const auto data_audit = run_data_audit(data, prepared, reference ? &*reference : nullptr, config);
  const auto models = train_models(data, prepared, config, threads, log_line);
  log_line("model audits");
  const auto model_audit = run_model_audit(data, prepared, models, config, threads);
  const auto dir = out_dir(o);
  write_figure_csvs(dir, &data_audit, &model_audit);
  ReportInputs in{&config, &data, &prepared, &data_audit, &models, &model_audit, "full-audit",
                  utc_now()};
  return finish(build_report(in), dir, o.strict);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bias audits for step-count datasets and activity models"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool data, bool reference) {
    if (data) {
      sub->add_option("--records", o.records, "Step records CSV");
      sub->add_option("--profiles", o.profiles, "Attribute profiles CSV");
      sub->add_option("--attributes", o.attributes, "Comma-separated attributes to audit");
      sub->add_option("--pairs", o.pairs, "Attribute pairs, e.g. diabetes:gender,age:bmi");
    }
    if (reference) sub->add_option("--reference", o.reference, "Reference population CSV");
    sub->add_option("--config", o.config, "JSON config");
    sub->add_option("--seed", o.seed, "Seed (overrides the config)");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_flag("--strict", o.strict, "Exit 3 when an audit is degenerate");
  };

  auto* audit_data = app.add_subcommand("audit-data", "Representation and measurement audits");
  common(audit_data, true, true);
  auto* train = app.add_subcommand("train", "Train shared and personalized models");
  common(train, true, false);
  auto* audit_model = app.add_subcommand("audit-model", "Audit trained checkpoints");
  common(audit_model, true, false);
  audit_model->add_option("--models", o.models, "Directory written by `train`");
  auto* bench = app.add_subcommand("make-benchmark", "Build parity test subsets");
  common(bench, true, false);
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  common(synth, false, false);
  auto* full = app.add_subcommand("full-audit", "Every audit, one report");
  common(full, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*audit_data) return cmd_audit_data(o);
    if (*train) return cmd_train(o);
    if (*audit_model) return cmd_audit_model(o);
    if (*bench) return cmd_make_benchmark(o);
    if (*synth) return cmd_synth(o);
    if (*full) return cmd_full_audit(o);
  } catch (const DataError& e) {
    std::cerr << "fairaudit: data error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "fairaudit: config error: " << e.what() << '\n';
    return 1;
  } catch (const TrainingError& e) {
    std::cerr << "fairaudit: training failed: " << e.what() << '\n';
    return 1;
  } catch (const AuditError& e) {
    std::cerr << "fairaudit: audit error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
