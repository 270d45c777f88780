#include "halvinglab/sh_engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "halvinglab/errors.hpp"
#include "halvinglab/rng.hpp"

namespace halvinglab {

std::string to_string(RankerKind kind) {
  switch (kind) {
    case RankerKind::current: return "current";
    case RankerKind::gp: return "gp";
    case RankerKind::oracle: return "oracle";
  }
  return "unknown";
}

RankerKind parse_ranker(const std::string& name) {
  if (name == "current") return RankerKind::current;
  if (name == "gp") return RankerKind::gp;
  if (name == "oracle") return RankerKind::oracle;
  throw ConfigError("unknown ranker '" + name + "' (expected current, gp or oracle)");
}

void ShConfig::validate() const {
  if (final_candidates < 1 || final_candidates >= n_candidates) {
    throw ConfigError("need 1 <= F < N, got F=" + std::to_string(final_candidates) +
                      " N=" + std::to_string(n_candidates));
  }
  if (eta < 2) throw ConfigError("eta must be an integer >= 2");
  if (!(grace_fraction >= 0.0 && grace_fraction < 1.0)) throw ConfigError("grace must lie in [0, 1)");
  if (ranker == RankerKind::gp) {
    if (gp_training_curve_ids.empty()) throw ConfigError("the gp ranker needs at least one training curve");
    if (n_samples < 2) throw ConfigError("n_samples must be >= 2");
  } else if (!gp_training_curve_ids.empty()) {
    throw ConfigError("training curves are only used by the gp ranker");
  }
  std::set<int> unique(gp_training_curve_ids.begin(), gp_training_curve_ids.end());
  if (unique.size() != gp_training_curve_ids.size()) throw ConfigError("duplicate training curve ids");
  if (!(current_window_fraction > 0.0 && current_window_fraction <= 1.0)) {
    throw ConfigError("current_window_fraction must lie in (0, 1]");
  }
}

int rung_count(int n, int f, int eta) {
  if (f < 1 || n <= f || eta < 2) throw ConfigError("rung_count needs 1 <= F < N and eta >= 2");
  // Smallest S with f * eta^S >= n.
  int s = 0;
  long long reach = f;
  while (reach < n) {
    reach *= eta;
    ++s;
  }
  return s;
}

int grace_steps(int steps, double grace_fraction) { return ceil_fraction(grace_fraction, steps); }

int rung_budget(int s, int rung_total, int eta, int steps, double grace_fraction) {
  if (s < 1 || s > rung_total) throw ConfigError("rung index out of range");
  if (s == rung_total) return steps;
  long long num = 1, den = 1;
  for (int k = 0; k < s; ++k) num *= eta;
  for (int k = 0; k < rung_total; ++k) den *= eta;
  const double r = static_cast<double>(num - 1) / static_cast<double>(den - 1);
  const int budget = static_cast<int>(std::llround(r * steps));
  return std::clamp(std::max(grace_steps(steps, grace_fraction), budget), 1, steps);
}

int promotion_count(int n, int f, int eta, int s) {
  long long div = 1;
  for (int k = 0; k < s && div < n; ++k) div *= eta;
  const auto keep = static_cast<int>((n + div - 1) / div);
  return std::max(keep, f);
}

namespace {

class Observer {
 public:
  Observer(ShTrace& trace) : trace_(trace) {}

  void reveal(int id, int until, int rung) {
    int& seen = seen_[id];
    for (int t = seen + 1; t <= until; ++t) trace_.observed_cells.push_back({id, t, rung});
    seen = std::max(seen, until);
  }

 private:
  ShTrace& trace_;
  std::map<int, int> seen_;
};

}  // namespace

ShTrace run(const CurveSet& set, const ShConfig& config, const PerfSpec& perf_spec, std::uint64_t seed) {
  config.validate();
  const int steps = set.steps();
  std::set<int> training(config.gp_training_curve_ids.begin(), config.gp_training_curve_ids.end());
  for (int id : training) set.index_of(id);

  std::vector<int> active;
  for (const auto& c : set.curves()) {
    if (!training.contains(c.id)) active.push_back(c.id);
  }
  std::sort(active.begin(), active.end());
  if (static_cast<int>(active.size()) != config.n_candidates) {
    throw ConfigError("pool has " + std::to_string(active.size()) + " competing candidates, N=" +
                      std::to_string(config.n_candidates));
  }

  ShTrace trace;
  trace.config = config;
  trace.steps = steps;
  trace.grace_steps = grace_steps(steps, config.grace_fraction);
  trace.rung_total = rung_count(config.n_candidates, config.final_candidates, config.eta);
  Observer observer(trace);
  for (int id : active) observer.reveal(id, trace.grace_steps, 0);

  for (int s = 1; s <= trace.rung_total; ++s) {
    RungRecord rec;
    rec.rung = s;
    rec.budget_steps = rung_budget(s, trace.rung_total, config.eta, steps, config.grace_fraction);
    rec.active_ids = active;
    for (int id : active) observer.reveal(id, rec.budget_steps, s);

    switch (config.ranker) {
      case RankerKind::current:
        rec.ranking = rank_by_current(set, active, rec.budget_steps, config.current_window_fraction);
        break;
      case RankerKind::oracle:
        rec.ranking = rank_by_oracle(set, active, perf_spec);
        break;
      case RankerKind::gp: {
        std::vector<gp::CurvePrefix> prefixes;
        for (int id : config.gp_training_curve_ids) prefixes.push_back({set.index_of(id), steps});
        for (int id : active) prefixes.push_back({set.index_of(id), rec.budget_steps});
        auto data = gp::make_training_data(set, prefixes);
        const gp::GpModel model = gp::fit(std::move(data.observations), std::move(data.standardization), config.fit);
        rec.gp_fit = GpRungFit{model.hyperparams(), gp::log_marginal_likelihood(model),
                               static_cast<int>(model.observations().size())};
        rec.ranking = rank_by_gp(model, set, active, perf_spec, config.n_samples,
                                 rng::derive_seed(seed, "sh_rung", {static_cast<std::uint64_t>(s)}));
        break;
      }
    }

    const int keep = std::min(promotion_count(config.n_candidates, config.final_candidates, config.eta, s),
                              static_cast<int>(active.size()));
    rec.promoted_ids.assign(rec.ranking.ids.begin(), rec.ranking.ids.begin() + keep);
    active = rec.promoted_ids;
    std::sort(active.begin(), active.end());
    trace.rungs.push_back(std::move(rec));
  }

  // Survivors are trained to completion so their perf can be evaluated.
  for (int id : active) observer.reveal(id, steps, trace.rung_total + 1);
  trace.final_ids = active;
  const Ranking final_order = rank_by_oracle(set, active, perf_spec);
  trace.picked_id = final_order.ids.front();
  trace.picked_perf = final_order.scores.front();

  trace.compute_units = static_cast<std::int64_t>(trace.observed_cells.size());
  if (config.ranker == RankerKind::gp) {
    trace.compute_units += static_cast<std::int64_t>(training.size()) * steps;
  }
  return trace;
}

ComputeUnits compute_units(const ShTrace& trace, int pool_size, int steps) {
  if (pool_size < 1 || steps < 1) throw ConfigError("compute_units needs a positive pool and T");
  return {trace.compute_units,
          static_cast<double>(trace.compute_units) / (static_cast<double>(pool_size) * steps)};
}

}  // namespace halvinglab
