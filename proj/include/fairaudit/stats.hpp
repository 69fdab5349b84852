#pragma once

#include <cstdint>

namespace fairaudit {

enum class ProportionTest { kPooledZ, kFisherExact };

struct ProportionTestResult {
  double p_value = 1.0;
  double z = 0.0;  // zero for the exact test
  ProportionTest test = ProportionTest::kPooledZ;
};

// Two-sided pooled two-proportion z-test on x0/n0 versus x1/n1. Identical
// proportions (or a degenerate pooled variance) give p = 1.
ProportionTestResult two_proportion_z_test(std::int64_t x0, std::int64_t n0,
                                           std::int64_t x1, std::int64_t n1);

// Two-sided Fisher exact test on the 2x2 table [[x0, n0-x0], [x1, n1-x1]]:
// the total probability of all tables with the observed margins that are no
// more likely than the observed one.
double fisher_exact_p(std::int64_t x0, std::int64_t n0, std::int64_t x1,
                      std::int64_t n1);

// z-test, falling back to Fisher's exact test when any cell is below 5.
ProportionTestResult compare_proportions(std::int64_t x0, std::int64_t n0,
                                         std::int64_t x1, std::int64_t n1);

}  // namespace fairaudit
