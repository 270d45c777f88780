#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "halvinglab/curve_model.hpp"
#include "halvinglab/sh_engine.hpp"

namespace halvinglab {

struct SweepSpec {
  int pool_size = 256;
  std::vector<int> final_candidates{1, 2, 4, 8, 16, 32, 64};
  /// C values; only the gp ranker uses them.
  std::vector<int> training_curves{8, 16, 32, 64};
  std::vector<RankerKind> rankers{RankerKind::current, RankerKind::gp};
  int trials = 100;
  std::uint64_t root_seed = 0;
  PerfSpec perf;
  /// Relative-regret denominator; defaults to the universe mean perf.
  std::optional<double> reference_perf;
  int eta = 2;
  double grace_fraction = 0.1;
  gp::FitConfig fit;
  int n_samples = 64;
  double current_window_fraction = 0.2;

  void validate(std::size_t universe_size) const;
};

struct TrialResult {
  RankerKind ranker = RankerKind::current;
  int final_candidates = 0;
  int training_curves = 0;  // 0 unless gp
  int trial = 0;
  std::uint64_t seed = 0;
  int picked_id = 0;
  double picked_perf = 0.0;
  double best_perf = 0.0;
  double absolute_regret = 0.0;
  double relative_regret = 0.0;
  std::int64_t compute_units = 0;
  double relative_compute = 0.0;

  bool operator==(const TrialResult&) const = default;
};

struct AggregateRow {
  RankerKind ranker = RankerKind::current;
  int final_candidates = 0;
  int training_curves = 0;
  int trials = 0;
  double mean_relative_regret = 0.0;
  double stderr_relative_regret = 0.0;
  double mean_relative_compute = 0.0;

  bool operator==(const AggregateRow&) const = default;
};

struct Aggregate {
  std::vector<AggregateRow> rows;
  /// One message per group left out for having fewer than two trials.
  std::vector<std::string> warnings;
};

/// (picked - best) / |reference|; throws ConfigError for a zero reference.
double relative_regret(double picked_perf, double best_perf, double reference_perf);

/// Mean perf over the universe; the default relative-regret reference.
double mean_perf(const CurveSet& universe, const PerfSpec& spec);

struct SweepOptions {
  int jobs = 1;
  /// Keep the ShTrace of every trial (same order as the results).
  bool keep_traces = false;
};

struct SweepOutcome {
  std::vector<TrialResult> results;
  std::vector<ShTrace> traces;
  double reference_perf = 0.0;
};

/// All (ranker, F, C, trial) cells, sorted by those keys. Trial k draws the
/// same pool for every ranker and F; gp rows additionally draw C training
/// curves from that pool and compete on the rest.
SweepOutcome run_sweep(const CurveSet& universe, const SweepSpec& spec, const SweepOptions& options = {});

/// Groups by (ranker, F, C); standard error = sample std / sqrt(trials).
Aggregate aggregate(const std::vector<TrialResult>& results);

void write_results_csv(const std::vector<TrialResult>& results, std::ostream& out);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, std::ostream& out);
std::vector<TrialResult> read_results_csv(std::istream& in);
std::vector<AggregateRow> read_aggregate_csv(std::istream& in);

}  // namespace halvinglab
