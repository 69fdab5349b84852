#include "fairaudit/metrics.hpp"

namespace fairaudit {

namespace {

// Rates are n/d over integer counts. Ratios and differences are formed by
// cross-multiplying into one final division, so each metric is the correctly
// rounded value of the exact rational (for products below 2^53) and is
// unchanged when every count is scaled by the same factor.

MaybeRate rate(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

// (nu/du) / (np/dp)
std::optional<double> rate_ratio(std::int64_t nu, std::int64_t du,
                                 std::int64_t np, std::int64_t dp) {
  if (du == 0 || dp == 0 || np == 0) return std::nullopt;
  return (static_cast<double>(nu) * static_cast<double>(dp)) /
         (static_cast<double>(du) * static_cast<double>(np));
}

// nu/du - np/dp
std::optional<double> rate_difference(std::int64_t nu, std::int64_t du,
                                      std::int64_t np, std::int64_t dp) {
  if (du == 0 || dp == 0) return std::nullopt;
  const double num = static_cast<double>(nu) * static_cast<double>(dp) -
                     static_cast<double>(np) * static_cast<double>(du);
  return num / (static_cast<double>(du) * static_cast<double>(dp));
}

std::int64_t positives(const ConfusionCounts& c, RateMode mode) {
  return mode == RateMode::kBaseRate ? c.actual_positive() : c.predicted_positive();
}

}  // namespace

Rates rates(const ConfusionCounts& c) {
  Rates r;
  r.fdr = rate(c.fp, c.fp + c.tp);
  r.for_ = rate(c.fn, c.fn + c.tn);
  r.fnr = rate(c.fn, c.tp + c.fn);
  r.tnr = rate(c.tn, c.fp + c.tn);
  r.tpr = rate(c.tp, c.tp + c.fn);
  r.fpr = rate(c.fp, c.fp + c.tn);
  r.selection_rate = rate(c.predicted_positive(), c.total());
  r.base_rate = rate(c.actual_positive(), c.total());
  r.error_rate = rate(c.fp + c.fn, c.total());
  return r;
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::kDIR:
      return "DIR";
    case Metric::kSPD:
      return "SPD";
    case Metric::kFPRRatio:
      return "FPR_Ratio";
    case Metric::kFNRRatio:
      return "FNR_Ratio";
    case Metric::kFORRatio:
      return "FOR_Ratio";
    case Metric::kERR:
      return "ERR";
    case Metric::kEOD:
      return "EOD";
    case Metric::kAOD:
      return "AOD";
  }
  return "unknown";
}

MetricKind metric_kind(Metric m) {
  switch (m) {
    case Metric::kSPD:
    case Metric::kEOD:
    case Metric::kAOD:
      return MetricKind::kDifference;
    default:
      return MetricKind::kRatio;
  }
}

MetricValue disparate_impact_ratio(const GroupOutcomes& o, RateMode mode) {
  return {Metric::kDIR, rate_ratio(positives(o.g0, mode), o.g0.total(),
                                   positives(o.g1, mode), o.g1.total())};
}

MetricValue statistical_parity_difference(const GroupOutcomes& o, RateMode mode) {
  return {Metric::kSPD, rate_difference(positives(o.g0, mode), o.g0.total(),
                                        positives(o.g1, mode), o.g1.total())};
}

HybridRatios hybrid_ratios(const GroupOutcomes& o) {
  const auto& u = o.g0;
  const auto& p = o.g1;
  HybridRatios out;
  out.fpr_ratio.value = rate_ratio(u.fp, u.fp + u.tn, p.fp, p.fp + p.tn);
  out.fnr_ratio.value = rate_ratio(u.fn, u.tp + u.fn, p.fn, p.tp + p.fn);
  out.for_ratio.value = rate_ratio(u.fn, u.fn + u.tn, p.fn, p.fn + p.tn);
  out.err.value = rate_ratio(u.fp + u.fn, u.total(), p.fp + p.fn, p.total());
  return out;
}

WysiwygDifferences wysiwyg_differences(const GroupOutcomes& o) {
  const auto& u = o.g0;
  const auto& p = o.g1;
  WysiwygDifferences out;
  out.eod.value = rate_difference(u.tp, u.actual_positive(), p.tp, p.actual_positive());

  const std::int64_t nu = u.actual_negative();
  const std::int64_t np = p.actual_negative();
  const std::int64_t pu = u.actual_positive();
  const std::int64_t pp = p.actual_positive();
  if (nu && np && pu && pp) {
    // ((fpu/nu - fpp/np) + (tpu/pu - tpp/pp)) / 2 over the common
    // denominator nu*np*pu*pp.
    const double fpr_num = static_cast<double>(u.fp) * np - static_cast<double>(p.fp) * nu;
    const double tpr_num = static_cast<double>(u.tp) * pp - static_cast<double>(p.tp) * pu;
    const double num = fpr_num * (static_cast<double>(pu) * pp) +
                       tpr_num * (static_cast<double>(nu) * np);
    const double den = 2.0 * static_cast<double>(nu) * np * static_cast<double>(pu) * pp;
    out.aod.value = num / den;
  }
  return out;
}

MetricSuite all_metrics(const GroupOutcomes& o) {
  MetricSuite s;
  s.dir_selection = disparate_impact_ratio(o, RateMode::kSelectionRate);
  s.dir_base = disparate_impact_ratio(o, RateMode::kBaseRate);
  s.spd = statistical_parity_difference(o);
  s.hybrid = hybrid_ratios(o);
  s.wysiwyg = wysiwyg_differences(o);
  return s;
}

std::string_view harmed_name(Harmed h) {
  switch (h) {
    case Harmed::kUnprivileged:
      return "Unprivileged";
    case Harmed::kPrivileged:
      return "Privileged";
    case Harmed::kNeither:
      return "Neither";
  }
  return "unknown";
}

std::optional<Verdict> verdict(const MetricValue& m, const Bands& bands) {
  if (!m.defined()) return std::nullopt;
  const double v = *m.value;
  Verdict out;
  if (m.kind() == MetricKind::kRatio) {
    out.low = bands.ratio_low;
    out.high = bands.ratio_high;
  } else {
    out.low = bands.diff_low;
    out.high = bands.diff_high;
  }
  out.analogical = m.metric == Metric::kAOD;
  if (v >= out.low && v <= out.high) return out;

  // Below the band: which group loses. DIR and FPR ratio fall when the
  // unprivileged group gets fewer positives; the error-centred ratios fall
  // when the privileged group errs more.
  Harmed below = Harmed::kUnprivileged;
  switch (m.metric) {
    case Metric::kFORRatio:
    case Metric::kFNRRatio:
    case Metric::kERR:
      below = Harmed::kPrivileged;
      break;
    default:
      break;
  }
  const Harmed above =
      below == Harmed::kUnprivileged ? Harmed::kPrivileged : Harmed::kUnprivileged;
  out.harmed = v < out.low ? below : above;
  return out;
}

}  // namespace fairaudit
