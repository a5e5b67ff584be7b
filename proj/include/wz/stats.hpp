#pragma once

// Goodness-of-fit helper for the sampling-law checks.

#include <boost/math/distributions/chi_squared.hpp>

#include "wz/core.hpp"

namespace wz {

struct ChiSquareReport {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  int categories_used = 0;
};

// Pearson chi-square of observed counts against expected probabilities.
// Categories with expected count below min_expected are pooled into one
// bucket so the asymptotic approximation stays valid.
inline ChiSquareReport chi_square_gof(std::span<const double> probs,
                                      std::span<const long long> counts,
                                      double min_expected = 5.0) {
  if (probs.size() != counts.size() || probs.empty())
    throw std::invalid_argument("chi-square: mismatched category lists");
  long long total = 0;
  for (long long c : counts) total += c;
  double stat = 0.0;
  int used = 0;
  double pooled_expected = 0.0;
  long long pooled_observed = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double expected = probs[i] * static_cast<double>(total);
    if (expected < min_expected) {
      pooled_expected += expected;
      pooled_observed += counts[i];
      continue;
    }
    const double d = static_cast<double>(counts[i]) - expected;
    stat += d * d / expected;
    ++used;
  }
  if (pooled_expected > 0.0) {
    const double d = static_cast<double>(pooled_observed) - pooled_expected;
    stat += d * d / pooled_expected;
    ++used;
  }
  ChiSquareReport report;
  report.statistic = stat;
  report.categories_used = used;
  report.dof = used - 1;
  if (report.dof < 1) {
    report.p_value = 1.0;
    return report;
  }
  boost::math::chi_squared dist(report.dof);
  report.p_value = boost::math::cdf(boost::math::complement(dist, stat));
  return report;
}

}  // namespace wz
