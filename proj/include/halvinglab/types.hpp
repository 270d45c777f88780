#pragma once

namespace halvinglab {

/// Floor applied to predictive variances before they reach the ranking.
inline constexpr double kMinVariance = 1e-12;

/// Predictive mean and variance of perf(i) for one candidate.
struct CandidateSummary {
  int candidate_id = 0;
  double mu = 0.0;
  double sigma2 = kMinVariance;

  bool operator==(const CandidateSummary&) const = default;
};

}  // namespace halvinglab
