#include "halvinglab/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "halvinglab/errors.hpp"

namespace halvinglab {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

int ceil_fraction(double fraction, int steps) {
  const double x = fraction * steps;
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<int>(nearest);
  return static_cast<int>(std::ceil(x));
}

Ranking rank_ascending(std::span<const int> ids, std::span<const double> scores) {
  if (ids.size() != scores.size()) throw ConfigError("rank: ids and scores differ in length");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return ids[a] < ids[b];
  });
  Ranking r;
  r.ids.reserve(ids.size());
  r.scores.reserve(ids.size());
  for (std::size_t k : order) {
    r.ids.push_back(ids[k]);
    r.scores.push_back(scores[k]);
  }
  return r;
}

std::vector<double> expected_wins(std::span<const CandidateSummary> summaries) {
  const std::size_t n = summaries.size();
  if (n < 2) throw ConfigError("expected_wins needs at least two candidates");
  // Accumulate in candidate-id order so permuting the input cannot change
  // the sums. Phi(z) and Phi(-z) share z, so each pair contributes exactly one.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return summaries[a].candidate_id < summaries[b].candidate_id;
  });
  std::vector<double> wins(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    const auto& si = summaries[order[a]];
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto& sj = summaries[order[b]];
      const double p = normal_cdf((si.mu - sj.mu) / std::sqrt(si.sigma2 + sj.sigma2));
      wins[order[a]] += p;
      wins[order[b]] += 1.0 - p;
    }
  }
  for (double& w : wins) w /= static_cast<double>(n - 1);
  return wins;
}

Ranking rank_by_gp(const gp::GpModel& model, const CurveSet& set, std::span<const int> active_ids,
                   const PerfSpec& perf_spec, int n_samples, std::uint64_t seed) {
  std::vector<int> rows;
  rows.reserve(active_ids.size());
  for (int id : active_ids) rows.push_back(static_cast<int>(set.index_of(id)));
  const int window = perf_spec.window_steps(set.steps());
  auto summaries = gp::predict_perf(model, rows, window, n_samples, seed);
  for (std::size_t k = 0; k < summaries.size(); ++k) summaries[k].candidate_id = active_ids[k];
  const auto wins = expected_wins(summaries);
  return rank_ascending(active_ids, wins);
}

Ranking rank_by_current(const CurveSet& set, std::span<const int> active_ids, int observed_until,
                        double window_fraction) {
  if (observed_until < 1 || observed_until > set.steps()) {
    throw ConfigError("rank_by_current: observed_until must lie in 1..T");
  }
  if (!(window_fraction > 0.0 && window_fraction <= 1.0)) {
    throw ConfigError("rank_by_current: window_fraction must lie in (0, 1]");
  }
  const int window = std::min(std::max(1, ceil_fraction(window_fraction, set.steps())), observed_until);
  std::vector<double> scores;
  scores.reserve(active_ids.size());
  for (int id : active_ids) {
    const auto& v = set[set.index_of(id)].values;
    double sum = 0.0;
    for (int t = observed_until - window; t < observed_until; ++t) sum += v[static_cast<std::size_t>(t)];
    scores.push_back(sum / window);
  }
  return rank_ascending(active_ids, scores);
}

Ranking rank_by_oracle(const CurveSet& set, std::span<const int> active_ids, const PerfSpec& perf_spec) {
  if (active_ids.empty()) throw ConfigError("rank_by_oracle: no candidates");
  std::vector<double> scores;
  scores.reserve(active_ids.size());
  for (int id : active_ids) scores.push_back(perf(set[set.index_of(id)], perf_spec));
  return rank_ascending(active_ids, scores);
}

}  // namespace halvinglab
