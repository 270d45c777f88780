#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "halvinglab/curve_model.hpp"
#include "halvinglab/gp_core.hpp"
#include "halvinglab/ranking.hpp"

namespace halvinglab {

enum class RankerKind { current, gp, oracle };

std::string to_string(RankerKind kind);
RankerKind parse_ranker(const std::string& name);

struct ShConfig {
  /// Competing candidates and final candidates.
  int n_candidates = 0;
  int final_candidates = 1;
  int eta = 2;
  double grace_fraction = 0.1;
  RankerKind ranker = RankerKind::current;
  /// Fully observed curves the gp ranker trains on; they do not compete.
  std::vector<int> gp_training_curve_ids;
  gp::FitConfig fit;
  int n_samples = 64;
  /// Trailing window of the current-value ranker.
  double current_window_fraction = 0.2;

  void validate() const;
};

/// One revealed cell; t is 1-based.
struct Reveal {
  int candidate_id = 0;
  int t = 0;
  /// 0 for the grace period, S + 1 for the completion of survivors.
  int rung = 0;

  bool operator==(const Reveal&) const = default;
};

struct GpRungFit {
  gp::GpHyperparams hyperparams;
  double log_marginal_likelihood = 0.0;
  int observations = 0;
};

struct RungRecord {
  int rung = 0;
  int budget_steps = 0;
  std::vector<int> active_ids;
  Ranking ranking;
  std::vector<int> promoted_ids;
  std::optional<GpRungFit> gp_fit;
};

struct ShTrace {
  ShConfig config;
  int steps = 0;
  int grace_steps = 0;
  int rung_total = 0;
  std::vector<RungRecord> rungs;
  /// Every revealed cell, in reveal order, each exactly once.
  std::vector<Reveal> observed_cells;
  std::vector<int> final_ids;
  int picked_id = 0;
  double picked_perf = 0.0;
  /// |observed_cells| plus C * T for the gp ranker.
  std::int64_t compute_units = 0;
};

/// ceil(log_eta(n / f)) by repeated multiplication.
int rung_count(int n, int f, int eta);

/// ceil(grace_fraction * T).
int grace_steps(int steps, double grace_fraction);

/// max(grace steps, round(R * T), 1) with R = (eta^s - 1) / (eta^S - 1);
/// rung S always gets T.
int rung_budget(int s, int rung_total, int eta, int steps, double grace_fraction);

/// max(ceil(n / eta^s), f).
int promotion_count(int n, int f, int eta, int s);

/// Runs Successive Halving on `set`. Competing candidates are all curves
/// not listed as gp training curves; their number must equal n_candidates.
ShTrace run(const CurveSet& set, const ShConfig& config, const PerfSpec& perf_spec, std::uint64_t seed);

struct ComputeUnits {
  std::int64_t absolute = 0;
  double relative = 0.0;
};

/// relative = absolute / (pool_size * T), pool_size counting training curves.
ComputeUnits compute_units(const ShTrace& trace, int pool_size, int steps);

}  // namespace halvinglab
