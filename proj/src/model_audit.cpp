#include "fairaudit/model_audit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fairaudit/common.hpp"

namespace fairaudit {

BatchClassifier classifier_for(const SequenceModel& model) {
  return [&model](std::span<const LabeledWindow> windows) {
    std::vector<ActivityLabel> out;
    for (double p : predict_proba(model, windows)) out.push_back(hard_label(p));
    return out;
  };
}

BatchClassifier classifier_for(const PersonalizedModel& model) {
  return [&model](std::span<const LabeledWindow> windows) {
    std::vector<ActivityLabel> out;
    for (double p : predict_proba(model, windows)) out.push_back(hard_label(p));
    return out;
  };
}

BatchClassifier constant_classifier(ActivityLabel label) {
  return [label](std::span<const LabeledWindow> windows) {
    return std::vector<ActivityLabel>(windows.size(), label);
  };
}

BatchClassifier perfect_classifier() {
  return [](std::span<const LabeledWindow> windows) {
    std::vector<ActivityLabel> out;
    for (const auto& w : windows) out.push_back(w.label);
    return out;
  };
}

GroupOutcomes tally(std::span<const LabeledWindow> windows,
                    std::span<const ActivityLabel> predictions,
                    const GroupPartition& partition) {
  if (windows.size() != predictions.size()) {
    throw AuditError("prediction count does not match window count");
  }
  GroupOutcomes o;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto g = partition.group_of(windows[i].user_id);
    if (!g) continue;
    auto& c = *g == Group::kG0 ? o.g0 : o.g1;
    const bool predicted = predictions[i] == ActivityLabel::kHigh;
    const bool actual = windows[i].positive();
    if (predicted && actual) ++c.tp;
    if (predicted && !actual) ++c.fp;
    if (!predicted && actual) ++c.fn;
    if (!predicted && !actual) ++c.tn;
  }
  return o;
}

std::string_view variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kDataBaseRate:
      return "data";
    case ModelVariant::kAware:
      return "aware";
    case ModelVariant::kUnaware:
      return "unaware";
    case ModelVariant::kPersonalized:
      return "personalized";
  }
  return "unknown";
}

std::string_view propagation_name(Propagation p) {
  switch (p) {
    case Propagation::kPropagated:
      return "Propagated";
    case Propagation::kAmplified:
      return "Amplified";
    case Propagation::kMitigated:
      return "Mitigated";
  }
  return "unknown";
}

std::optional<Propagation> classify_propagation(const MetricValue& model_dir,
                                                const MetricValue& data_dir,
                                                double threshold) {
  if (!model_dir.defined() || !data_dir.defined()) return std::nullopt;
  const double gap = std::abs(*model_dir.value - 1.0) - std::abs(*data_dir.value - 1.0);
  if (gap > threshold) return Propagation::kAmplified;
  if (gap < -threshold) return Propagation::kMitigated;
  return Propagation::kPropagated;
}

ModelBiasFinding audit_partition(const BatchClassifier& classifier, ModelVariant variant,
                                 std::span<const LabeledWindow> test,
                                 const GroupPartition& partition, const Bands& bands,
                                 double amplification_threshold) {
  ModelBiasFinding f;
  f.label = partition.label();
  f.attributes = partition.attributes;
  f.strategy = partition.strategy;
  f.variant = variant;
  const auto predictions = classifier(test);
  f.outcomes = tally(test, predictions, partition);
  f.metrics = all_metrics(f.outcomes);
  f.dir = f.metrics.dir_selection;
  f.data_dir = f.metrics.dir_base;
  f.verdict = verdict(f.dir, bands);
  f.propagation = classify_propagation(f.dir, f.data_dir, amplification_threshold);
  if (f.outcomes.g0.total() == 0 || f.outcomes.g1.total() == 0) {
    f.degenerate = true;
    f.diagnostics.push_back(f.label + ": a group has no test windows");
  } else if (!f.dir.defined()) {
    f.diagnostics.push_back(f.label + ": no positive predictions for G1; DIR undefined");
  }
  return f;
}

std::vector<ModelBiasFinding> audit_aggregation(const BatchClassifier& classifier,
                                                ModelVariant variant,
                                                std::span<const LabeledWindow> test,
                                                std::span<const GroupPartition> partitions,
                                                const Bands& bands,
                                                double amplification_threshold) {
  std::vector<ModelBiasFinding> out;
  // classify once, reuse for every partition
  const auto predictions = classifier(test);
  const BatchClassifier cached = [&predictions](std::span<const LabeledWindow>) {
    return predictions;
  };
  for (const auto& p : partitions) {
    out.push_back(audit_partition(cached, variant, test, p, bands, amplification_threshold));
  }
  return out;
}

std::vector<IntersectionalFinding> audit_intersectional(
    const BatchClassifier& classifier, ModelVariant variant,
    std::span<const LabeledWindow> test, std::span<const BinarizedProfile> profiles,
    std::span<const std::pair<Attribute, Attribute>> pairs, const Bands& bands) {
  std::vector<IntersectionalFinding> out;
  const auto predictions = classifier(test);
  auto selection_dir = [&](const GroupPartition& p) {
    return disparate_impact_ratio(tally(test, predictions, p), RateMode::kSelectionRate);
  };
  const BatchClassifier cached = [&predictions](std::span<const LabeledWindow>) {
    return predictions;
  };
  for (const auto& [a, b] : pairs) {
    const auto first_dir = selection_dir(partition(profiles, a));
    const auto second_dir = selection_dir(partition(profiles, b));
    for (const auto strategy :
         {PartitionStrategy::kMinorityMinorityVsRest, PartitionStrategy::kMajorityMajorityVsRest}) {
      IntersectionalFinding f;
      f.first = a;
      f.second = b;
      f.strategy = strategy;
      f.first_dir = first_dir;
      f.second_dir = second_dir;
      const auto part = partition(profiles, a, b, strategy);
      f.finding = audit_partition(cached, variant, test, part, bands);
      if (f.finding.outcomes.g0.total() == 0) {
        f.skipped = true;
        f.finding.diagnostics.push_back(part.label() + ": empty G0 on the test set, skipped");
      }
      out.push_back(std::move(f));
    }
  }
  return out;
}

LearningFinding audit_learning(const BatchClassifier& shared,
                               const BatchClassifier& personalized,
                               std::span<const LabeledWindow> test,
                               const GroupPartition& partition, const Bands& bands) {
  LearningFinding f;
  f.label = partition.label();
  f.dir_shared =
      disparate_impact_ratio(tally(test, shared(test), partition), RateMode::kSelectionRate);
  f.dir_personalized = disparate_impact_ratio(tally(test, personalized(test), partition),
                                              RateMode::kSelectionRate);
  f.verdict_shared = verdict(f.dir_shared, bands);
  f.verdict_personalized = verdict(f.dir_personalized, bands);
  if (f.dir_shared.defined() && f.dir_personalized.defined()) {
    f.delta = std::abs(*f.dir_personalized.value - 1.0) - std::abs(*f.dir_shared.value - 1.0);
  }
  return f;
}

std::string_view removal_cell_name(RemovalCell c) {
  switch (c) {
    case RemovalCell::kNone:
      return "none";
    case RemovalCell::kPositivesG0:
      return "g0_positive";
    case RemovalCell::kNegativesG0:
      return "g0_negative";
    case RemovalCell::kPositivesG1:
      return "g1_positive";
    case RemovalCell::kNegativesG1:
      return "g1_negative";
  }
  return "unknown";
}

std::vector<LabeledWindow> BenchmarkPair::t0(std::span<const LabeledWindow> t1) const {
  std::vector<LabeledWindow> out;
  out.reserve(t0_indices.size());
  for (auto i : t0_indices) out.push_back(t1[i]);
  return out;
}

namespace {

MetricValue base_dir_after(const GroupOutcomes& o, RemovalCell cell, std::int64_t k) {
  GroupOutcomes r = o;
  switch (cell) {
    case RemovalCell::kPositivesG0:
      r.g0.fn -= k;
      break;
    case RemovalCell::kNegativesG0:
      r.g0.tn -= k;
      break;
    case RemovalCell::kPositivesG1:
      r.g1.fn -= k;
      break;
    case RemovalCell::kNegativesG1:
      r.g1.tn -= k;
      break;
    case RemovalCell::kNone:
      break;
  }
  return disparate_impact_ratio(r, RateMode::kBaseRate);
}

struct Candidate {
  RemovalCell cell = RemovalCell::kNone;
  std::int64_t k = 0;
  bool exact = false;
  double distance = 0.0;
};

}  // namespace

BenchmarkPair make_parity_benchmark(std::span<const LabeledWindow> t1,
                                    const GroupPartition& partition, double tolerance,
                                    std::uint64_t seed) {
  if (!(tolerance >= 0.0)) throw ConfigError("parity tolerance must be >= 0");
  BenchmarkPair out;
  out.label = partition.label();
  out.seed = seed;

  // Base-rate tallies: positives sit in fn, negatives in tn.
  GroupOutcomes o;
  for (const auto& w : t1) {
    const auto g = partition.group_of(w.user_id);
    if (!g) continue;
    auto& c = *g == Group::kG0 ? o.g0 : o.g1;
    (w.positive() ? c.fn : c.tn) += 1;
  }
  for (const auto* c : {&o.g0, &o.g1}) {
    if (c->fn == 0 || c->tn == 0) {
      throw AuditError(out.label +
                       ": parity benchmark needs positives and negatives in both groups");
    }
  }
  out.t1_dir = disparate_impact_ratio(o, RateMode::kBaseRate);

  // Group a has the higher base rate, b the lower. D = P_a T_b - P_b T_a >= 0.
  const bool g0_higher = o.g0.fn * o.g1.total() >= o.g1.fn * o.g0.total();
  const auto& a = g0_higher ? o.g0 : o.g1;
  const auto& b = g0_higher ? o.g1 : o.g0;
  const std::int64_t d = a.fn * b.total() - b.fn * a.total();

  Candidate best;
  if (d != 0) {
    // Leaving T1 untouched competes too when it is already near parity.
    std::vector<Candidate> candidates = {
        {RemovalCell::kNone, 0, false, std::abs(*out.t1_dir.value - 1.0)}};
    auto consider = [&](RemovalCell cell, std::int64_t denominator, std::int64_t limit) {
      const std::int64_t lo = d / denominator;
      const bool exact = d % denominator == 0;
      for (const std::int64_t k : {lo, lo + 1}) {
        if (k <= 0 || k > limit) continue;
        if (k == lo + 1 && exact) continue;
        const auto dir = base_dir_after(o, cell, k);
        if (!dir.defined()) continue;
        candidates.push_back({cell, k, exact && k == lo, std::abs(*dir.value - 1.0)});
      }
    };
    // drop positives from a: k = D / N_b; drop negatives from b: k = D / P_a
    consider(g0_higher ? RemovalCell::kPositivesG0 : RemovalCell::kPositivesG1, b.tn, a.fn - 1);
    consider(g0_higher ? RemovalCell::kNegativesG1 : RemovalCell::kNegativesG0, a.fn, b.tn - 1);
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      if (x.exact != y.exact) return x.exact;
      if (!x.exact && x.distance != y.distance) return x.distance < y.distance;
      return x.k < y.k;
    });
    best = candidates.front();
    if (best.distance > tolerance) {
      std::ostringstream msg;
      msg << out.label << ": parity unreachable within tolerance " << tolerance
          << "; best achievable base-rate DIR "
          << *base_dir_after(o, best.cell, best.k).value;
      throw AuditError(msg.str());
    }
  } else {
    best.exact = true;
  }

  out.cell = best.cell;
  out.removed = best.k;
  out.exact = best.exact;
  std::vector<std::size_t> cell_members;
  if (best.cell != RemovalCell::kNone) {
    const Group group = best.cell == RemovalCell::kPositivesG0 || best.cell == RemovalCell::kNegativesG0
                            ? Group::kG0
                            : Group::kG1;
    const bool positive =
        best.cell == RemovalCell::kPositivesG0 || best.cell == RemovalCell::kPositivesG1;
    for (std::size_t i = 0; i < t1.size(); ++i) {
      if (partition.group_of(t1[i].user_id) == group && t1[i].positive() == positive) {
        cell_members.push_back(i);
      }
    }
  }
  Rng rng(seed);
  rng.shuffle(cell_members);
  std::vector<bool> removed(t1.size(), false);
  for (std::int64_t k = 0; k < best.k; ++k) removed[cell_members[static_cast<std::size_t>(k)]] = true;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    if (!removed[i]) out.t0_indices.push_back(i);
  }
  out.t0_dir = base_dir_after(o, best.cell, best.k);
  return out;
}

EvaluationFinding audit_evaluation(const BatchClassifier& classifier, ModelVariant variant,
                                   std::span<const LabeledWindow> t1,
                                   const BenchmarkPair& benchmark,
                                   const GroupPartition& partition) {
  EvaluationFinding f;
  f.label = partition.label();
  f.variant = variant;
  const auto predictions = classifier(t1);
  f.dir_t1 = disparate_impact_ratio(tally(t1, predictions, partition), RateMode::kSelectionRate);
  std::vector<ActivityLabel> p0;
  p0.reserve(benchmark.t0_indices.size());
  for (auto i : benchmark.t0_indices) p0.push_back(predictions[i]);
  const auto t0 = benchmark.t0(t1);
  f.dir_t0 = disparate_impact_ratio(tally(t0, p0, partition), RateMode::kSelectionRate);
  if (f.dir_t1.defined() && f.dir_t0.defined()) {
    f.hiding = std::abs(*f.dir_t0.value - 1.0) < std::abs(*f.dir_t1.value - 1.0);
  }
  return f;
}

}  // namespace fairaudit
