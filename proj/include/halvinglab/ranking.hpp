#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "halvinglab/curve_model.hpp"
#include "halvinglab/gp_core.hpp"
#include "halvinglab/types.hpp"

namespace halvinglab {

/// Candidate ids best first, with the score each was sorted by.
struct Ranking {
  std::vector<int> ids;
  std::vector<double> scores;

  bool operator==(const Ranking&) const = default;
};

/// Sorts ascending by score, ties by candidate id.
Ranking rank_ascending(std::span<const int> ids, std::span<const double> scores);

/// E wins(i) = 1/(n-1) sum_{j != i} Phi((mu_i - mu_j) / sqrt(s2_i + s2_j)),
/// in input order. A high value means candidate i tends to have the larger
/// perf, so rankers sort ascending on it.
std::vector<double> expected_wins(std::span<const CandidateSummary> summaries);

double normal_cdf(double z);

/// Predicts perf for each active id with `model` (rows of the model inputs
/// are positions in `set`) and orders by expected wins.
Ranking rank_by_gp(const gp::GpModel& model, const CurveSet& set, std::span<const int> active_ids,
                   const PerfSpec& perf_spec, int n_samples, std::uint64_t seed);

/// Mean of the last min(ceil(window_fraction * T), observed_until) values
/// up to observed_until.
Ranking rank_by_current(const CurveSet& set, std::span<const int> active_ids, int observed_until,
                        double window_fraction = 0.2);

/// Orders by the true perf(i).
Ranking rank_by_oracle(const CurveSet& set, std::span<const int> active_ids, const PerfSpec& perf_spec);

/// ceil(fraction * steps), ignoring floating-point excess below 1e-9
/// relative so that e.g. 0.2 * 35 gives 7.
int ceil_fraction(double fraction, int steps);

}  // namespace halvinglab
