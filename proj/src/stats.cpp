#include "fairaudit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fairaudit/common.hpp"

namespace fairaudit {

namespace {

double log_choose(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

void check_counts(std::int64_t x0, std::int64_t n0, std::int64_t x1, std::int64_t n1) {
  if (n0 <= 0 || n1 <= 0 || x0 < 0 || x1 < 0 || x0 > n0 || x1 > n1) {
    throw AuditError("proportion test needs 0 <= x <= n and n > 0 in both groups");
  }
}

}  // namespace

ProportionTestResult two_proportion_z_test(std::int64_t x0, std::int64_t n0,
                                           std::int64_t x1, std::int64_t n1) {
  check_counts(x0, n0, x1, n1);
  ProportionTestResult out;
  const double p0 = static_cast<double>(x0) / static_cast<double>(n0);
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double pooled =
      static_cast<double>(x0 + x1) / static_cast<double>(n0 + n1);
  const double variance = pooled * (1.0 - pooled) *
                          (1.0 / static_cast<double>(n0) + 1.0 / static_cast<double>(n1));
  if (!(variance > 0.0) || x0 * n1 == x1 * n0) return out;
  out.z = (p0 - p1) / std::sqrt(variance);
  out.p_value = std::erfc(std::abs(out.z) / std::numbers::sqrt2);
  return out;
}

double fisher_exact_p(std::int64_t x0, std::int64_t n0, std::int64_t x1,
                      std::int64_t n1) {
  check_counts(x0, n0, x1, n1);
  const std::int64_t successes = x0 + x1;
  const std::int64_t total = n0 + n1;
  const std::int64_t lo = std::max<std::int64_t>(0, successes - n1);
  const std::int64_t hi = std::min(successes, n0);
  const double log_denominator = log_choose(total, successes);
  auto log_prob = [&](std::int64_t k) {
    return log_choose(n0, k) + log_choose(n1, successes - k) - log_denominator;
  };
  const double observed = log_prob(x0);
  // Relative slack so that tables tied with the observed one in exact
  // arithmetic are not lost to rounding.
  const double cutoff = observed + 1e-7;
  double p = 0.0;
  for (std::int64_t k = lo; k <= hi; ++k) {
    const double lp = log_prob(k);
    if (lp <= cutoff) p += std::exp(lp);
  }
  return std::min(1.0, p);
}

ProportionTestResult compare_proportions(std::int64_t x0, std::int64_t n0,
                                         std::int64_t x1, std::int64_t n1) {
  check_counts(x0, n0, x1, n1);
  const std::int64_t smallest = std::min({x0, n0 - x0, x1, n1 - x1});
  if (smallest < 5) {
    ProportionTestResult out;
    out.test = ProportionTest::kFisherExact;
    out.p_value = fisher_exact_p(x0, n0, x1, n1);
    return out;
  }
  return two_proportion_z_test(x0, n0, x1, n1);
}

}  // namespace fairaudit
