#include "halvinglab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "halvinglab/errors.hpp"
#include "halvinglab/rng.hpp"

namespace halvinglab {

void SweepSpec::validate(std::size_t universe_size) const {
  if (pool_size < 2) throw ConfigError("pool_size must be >= 2");
  if (static_cast<std::size_t>(pool_size) > universe_size) {
    throw ConfigError("pool_size " + std::to_string(pool_size) + " exceeds the universe of " +
                      std::to_string(universe_size) + " curves");
  }
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (rankers.empty()) throw ConfigError("rankers must not be empty");
  if (final_candidates.empty()) throw ConfigError("final_candidates must not be empty");
  const bool has_gp = std::find(rankers.begin(), rankers.end(), RankerKind::gp) != rankers.end();
  if (has_gp && training_curves.empty()) throw ConfigError("training_curves must not be empty for gp");
  for (int f : final_candidates) {
    if (f < 1 || f >= pool_size) throw ConfigError("final_candidates entries must lie in 1..pool_size-1");
    if (has_gp) {
      for (int c : training_curves) {
        if (c < 1 || f >= pool_size - c) {
          throw ConfigError("gp with C=" + std::to_string(c) + " leaves " + std::to_string(pool_size - c) +
                            " competitors, not enough for F=" + std::to_string(f));
        }
      }
    }
  }
  if (reference_perf && !(std::isfinite(*reference_perf) && *reference_perf != 0.0)) {
    throw ConfigError("reference_perf must be finite and non-zero");
  }
  if (eta < 2) throw ConfigError("eta must be >= 2");
  if (!(grace_fraction >= 0.0 && grace_fraction < 1.0)) throw ConfigError("grace must lie in [0, 1)");
  if (n_samples < 2) throw ConfigError("n_samples must be >= 2");
  perf.window_steps(1);
}

double relative_regret(double picked_perf, double best_perf, double reference_perf) {
  if (reference_perf == 0.0 || !std::isfinite(reference_perf)) {
    throw ConfigError("relative regret needs a finite non-zero reference");
  }
  return (picked_perf - best_perf) / std::abs(reference_perf);
}

double mean_perf(const CurveSet& universe, const PerfSpec& spec) {
  if (universe.empty()) throw ConfigError("mean_perf of an empty set");
  double sum = 0.0;
  for (const auto& c : universe.curves()) sum += perf(c, spec);
  return sum / static_cast<double>(universe.size());
}

namespace {

struct Task {
  RankerKind ranker;
  int f;
  int c;
  int trial;
};

std::string context(const Task& t) {
  return "(ranker=" + to_string(t.ranker) + ", F=" + std::to_string(t.f) + ", C=" + std::to_string(t.c) +
         ", trial=" + std::to_string(t.trial) + ") ";
}

std::pair<TrialResult, ShTrace> run_task(const CurveSet& universe, const SweepSpec& spec, const Task& task,
                                         double reference) {
  const auto trial = static_cast<std::uint64_t>(task.trial);
  rng::Stream pool_stream(rng::derive_seed(spec.root_seed, "pool", {trial}));
  auto picks = rng::sample_without_replacement(pool_stream, static_cast<int>(universe.size()), spec.pool_size);
  std::sort(picks.begin(), picks.end());
  std::vector<std::size_t> indices(picks.begin(), picks.end());
  const CurveSet pool = universe.subset(indices);

  ShConfig cfg;
  cfg.final_candidates = task.f;
  cfg.eta = spec.eta;
  cfg.grace_fraction = spec.grace_fraction;
  cfg.ranker = task.ranker;
  cfg.fit = spec.fit;
  cfg.n_samples = spec.n_samples;
  cfg.current_window_fraction = spec.current_window_fraction;
  if (task.ranker == RankerKind::gp) {
    rng::Stream train_stream(
        rng::derive_seed(spec.root_seed, "training", {trial, static_cast<std::uint64_t>(task.c)}));
    for (int k : rng::sample_without_replacement(train_stream, spec.pool_size, task.c)) {
      cfg.gp_training_curve_ids.push_back(pool[static_cast<std::size_t>(k)].id);
    }
    std::sort(cfg.gp_training_curve_ids.begin(), cfg.gp_training_curve_ids.end());
  }
  cfg.n_candidates = spec.pool_size - static_cast<int>(cfg.gp_training_curve_ids.size());

  TrialResult r;
  r.ranker = task.ranker;
  r.final_candidates = task.f;
  r.training_curves = task.c;
  r.trial = task.trial;
  r.seed = rng::derive_seed(spec.root_seed, "sh",
                            {static_cast<std::uint64_t>(task.ranker), static_cast<std::uint64_t>(task.f),
                             static_cast<std::uint64_t>(task.c), trial});
  ShTrace trace = run(pool, cfg, spec.perf, r.seed);

  double best = std::numeric_limits<double>::infinity();
  for (const auto& curve : pool.curves()) {
    if (std::binary_search(cfg.gp_training_curve_ids.begin(), cfg.gp_training_curve_ids.end(), curve.id)) continue;
    best = std::min(best, perf(curve, spec.perf));
  }
  r.picked_id = trace.picked_id;
  r.picked_perf = trace.picked_perf;
  r.best_perf = best;
  r.absolute_regret = trace.picked_perf - best;
  r.relative_regret = relative_regret(trace.picked_perf, best, reference);
  const ComputeUnits cu = compute_units(trace, spec.pool_size, pool.steps());
  r.compute_units = cu.absolute;
  r.relative_compute = cu.relative;
  return {r, std::move(trace)};
}

}  // namespace

SweepOutcome run_sweep(const CurveSet& universe, const SweepSpec& spec, const SweepOptions& options) {
  spec.validate(universe.size());
  if (options.jobs < 1) throw ConfigError("jobs must be >= 1");

  std::vector<RankerKind> rankers = spec.rankers;
  std::sort(rankers.begin(), rankers.end());
  rankers.erase(std::unique(rankers.begin(), rankers.end()), rankers.end());
  std::vector<int> fs = spec.final_candidates;
  std::sort(fs.begin(), fs.end());
  fs.erase(std::unique(fs.begin(), fs.end()), fs.end());
  std::vector<int> cs = spec.training_curves;
  std::sort(cs.begin(), cs.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());

  std::vector<Task> tasks;
  for (RankerKind rk : rankers) {
    for (int f : fs) {
      const std::vector<int> cells = rk == RankerKind::gp ? cs : std::vector<int>{0};
      for (int c : cells) {
        for (int t = 0; t < spec.trials; ++t) tasks.push_back({rk, f, c, t});
      }
    }
  }

  SweepOutcome out;
  out.reference_perf = spec.reference_perf ? *spec.reference_perf : mean_perf(universe, spec.perf);
  if (out.reference_perf == 0.0) throw ConfigError("universe mean perf is zero; set reference_perf");
  out.results.resize(tasks.size());
  if (options.keep_traces) out.traces.resize(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      try {
        auto [result, trace] = run_task(universe, spec, tasks[k], out.reference_perf);
        out.results[k] = result;
        if (options.keep_traces) out.traces[k] = std::move(trace);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int threads = std::min<int>(options.jobs, static_cast<int>(tasks.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (!errors[k]) continue;
    const std::string where = context(tasks[k]);
    try {
      std::rethrow_exception(errors[k]);
    } catch (const NumericalError& e) {
      throw NumericalError(where + e.what(), e.jitter_ladder());
    } catch (const IoError& e) {
      throw IoError(where + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return out;
}

Aggregate aggregate(const std::vector<TrialResult>& results) {
  std::map<std::tuple<RankerKind, int, int>, std::vector<const TrialResult*>> groups;
  for (const auto& r : results) groups[{r.ranker, r.final_candidates, r.training_curves}].push_back(&r);

  Aggregate out;
  for (auto& [key, members] : groups) {
    const auto& [rk, f, c] = key;
    if (members.size() < 2) {
      out.warnings.push_back("group ranker=" + to_string(rk) + " F=" + std::to_string(f) + " C=" +
                             std::to_string(c) + " has " + std::to_string(members.size()) +
                             " trial(s); no standard error, omitted");
      continue;
    }
    // Sum in trial order so the result does not depend on input order.
    std::sort(members.begin(), members.end(),
              [](const TrialResult* a, const TrialResult* b) { return a->trial < b->trial; });
    const double n = static_cast<double>(members.size());
    double sum = 0.0, compute = 0.0;
    for (const auto* m : members) {
      sum += m->relative_regret;
      compute += m->relative_compute;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto* m : members) ss += (m->relative_regret - mean) * (m->relative_regret - mean);
    out.rows.push_back({rk, f, c, static_cast<int>(members.size()), mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n),
                        compute / n});
  }
  return out;
}

namespace {

constexpr const char* kResultsHeader =
    "ranker,F,C,trial,seed,picked_id,picked_perf,best_perf,absolute_regret,relative_regret,compute_units,"
    "relative_compute";
constexpr const char* kAggregateHeader =
    "ranker,F,C,trials,mean_relative_regret,stderr_relative_regret,mean_relative_compute";

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
T parse_field(const std::string& s, std::size_t line) {
  std::istringstream in(s);
  T value{};
  in >> value;
  if (in.fail() || !in.eof()) throw ParseError("cannot parse '" + s + "'", line);
  return value;
}

std::string strip(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

template <class Row, class F>
std::vector<Row> read_rows(std::istream& in, const char* header, std::size_t columns, F&& parse_row) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty input: expected header '" + std::string(header) + "'");
  if (strip(line) != header) throw ParseError("expected header '" + std::string(header) + "'", 1);
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " fields, got " + std::to_string(f.size()), lineno);
    }
    try {
      rows.push_back(parse_row(f, lineno));
    } catch (const ParseError&) {
      throw;
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return rows;
}

}  // namespace

void write_results_csv(const std::vector<TrialResult>& results, std::ostream& out) {
  out << kResultsHeader << '\n';
  for (const auto& r : results) {
    out << to_string(r.ranker) << ',' << r.final_candidates << ',' << r.training_curves << ',' << r.trial << ','
        << r.seed << ',' << r.picked_id << ',' << format_double(r.picked_perf) << ','
        << format_double(r.best_perf) << ',' << format_double(r.absolute_regret) << ','
        << format_double(r.relative_regret) << ',' << r.compute_units << ',' << format_double(r.relative_compute)
        << '\n';
  }
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, std::ostream& out) {
  out << kAggregateHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.ranker) << ',' << r.final_candidates << ',' << r.training_curves << ',' << r.trials << ','
        << format_double(r.mean_relative_regret) << ',' << format_double(r.stderr_relative_regret) << ','
        << format_double(r.mean_relative_compute) << '\n';
  }
}

std::vector<TrialResult> read_results_csv(std::istream& in) {
  return read_rows<TrialResult>(in, kResultsHeader, 12, [](const std::vector<std::string>& f, std::size_t l) {
    TrialResult r;
    r.ranker = parse_ranker(f[0]);
    r.final_candidates = parse_field<int>(f[1], l);
    r.training_curves = parse_field<int>(f[2], l);
    r.trial = parse_field<int>(f[3], l);
    r.seed = parse_field<std::uint64_t>(f[4], l);
    r.picked_id = parse_field<int>(f[5], l);
    r.picked_perf = parse_field<double>(f[6], l);
    r.best_perf = parse_field<double>(f[7], l);
    r.absolute_regret = parse_field<double>(f[8], l);
    r.relative_regret = parse_field<double>(f[9], l);
    r.compute_units = parse_field<std::int64_t>(f[10], l);
    r.relative_compute = parse_field<double>(f[11], l);
    return r;
  });
}

std::vector<AggregateRow> read_aggregate_csv(std::istream& in) {
  return read_rows<AggregateRow>(in, kAggregateHeader, 7, [](const std::vector<std::string>& f, std::size_t l) {
    AggregateRow r;
    r.ranker = parse_ranker(f[0]);
    r.final_candidates = parse_field<int>(f[1], l);
    r.training_curves = parse_field<int>(f[2], l);
    r.trials = parse_field<int>(f[3], l);
    r.mean_relative_regret = parse_field<double>(f[4], l);
    r.stderr_relative_regret = parse_field<double>(f[5], l);
    r.mean_relative_compute = parse_field<double>(f[6], l);
    return r;
  });
}

}  // namespace halvinglab
