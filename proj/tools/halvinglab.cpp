// halvinglab: generate curves, run Successive Halving, sweep, report.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "halvinglab/curve_model.hpp"
#include "halvinglab/errors.hpp"
#include "halvinglab/experiment.hpp"
#include "halvinglab/rng.hpp"
#include "halvinglab/serialize.hpp"
#include "halvinglab/sh_engine.hpp"

namespace fs = std::filesystem;
using namespace halvinglab;

namespace {

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kNumerical = 4 };

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + '"';
}

void diag(const std::string& kind, const std::string& message) {
  std::cerr << "status=error kind=" << kind << " message=" << quote(message) << '\n';
}

std::optional<std::uint64_t> seed_from_env() {
  const char* env = std::getenv("HALVINGLAB_SEED");
  if (!env || !*env) return std::nullopt;
  std::uint64_t v = 0;
  const std::string s(env);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("HALVINGLAB_SEED is not a non-negative integer: '" + s + "'");
  }
  return v;
}

/// --seed wins, then HALVINGLAB_SEED, then the config file value.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t from_config) {
  if (flag) return *flag;
  if (auto env = seed_from_env()) return *env;
  return from_config;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

template <class F>
void write_with(const fs::path& path, F&& body) {
  auto out = open_out(path);
  body(out);
  if (!out) throw IoError("write failed: " + path.string());
}

std::string absolute_path(const std::string& p) { return fs::weakly_canonical(fs::absolute(p)).string(); }

CurveSet load_curves(const std::string& path, bool subtract_reference) {
  if (path.empty()) throw ConfigError("no curve file given (--curves or \"curves\" in the config)");
  CsvOptions opt;
  opt.subtract_reference = subtract_reference;
  return load_csv(path, opt);
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a) {
  GenerateSpec spec = generate_spec_from_json(load_json(a.config));
  spec.seed = resolve_seed(a.seed, spec.seed);
  const CurveSet set = generate_synthetic(spec.family, spec.count, spec.steps, spec.seed);
  save_csv(set, a.out);
  fs::path resolved = a.out;
  resolved.replace_extension(".resolved.json");
  write_json(resolved, to_json(spec));
  std::cout << "N=" << set.size() << " T=" << set.steps() << " D=" << set.dims() << " out=" << a.out << '\n';
  return kOk;
}

struct RunArgs {
  std::string config;
  std::string curves;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ranker;
  std::optional<int> final_candidates;
  std::optional<int> training_curves;
  std::optional<int> eta;
  std::optional<double> grace;
  std::optional<double> reference_perf;
  bool subtract_reference = false;
};

int cmd_run(const RunArgs& a) {
  RunSpec spec;
  if (!a.config.empty()) {
    spec = run_spec_from_json(load_json(a.config));
    if (!spec.curves.empty()) spec.curves = (fs::path(a.config).parent_path() / spec.curves).string();
  }
  if (!a.curves.empty()) spec.curves = a.curves;
  if (a.ranker) spec.ranker = parse_ranker(*a.ranker);
  if (a.final_candidates) spec.final_candidates = *a.final_candidates;
  if (a.training_curves) spec.training_curves = *a.training_curves;
  if (a.eta) spec.eta = *a.eta;
  if (a.grace) spec.grace_fraction = *a.grace;
  if (a.reference_perf) spec.reference_perf = *a.reference_perf;
  if (a.subtract_reference) spec.subtract_reference = true;
  spec.seed = resolve_seed(a.seed, spec.seed);
  if (spec.ranker != RankerKind::gp) spec.training_curves = 0;

  const CurveSet set = load_curves(spec.curves, spec.subtract_reference);
  spec.curves = absolute_path(spec.curves);
  const int pool = static_cast<int>(set.size());
  if (spec.ranker == RankerKind::gp && (spec.training_curves < 1 || spec.training_curves >= pool)) {
    throw ConfigError("--training-curves must lie in 1..N-1 for the gp ranker");
  }

  ShConfig cfg;
  cfg.final_candidates = spec.final_candidates;
  cfg.eta = spec.eta;
  cfg.grace_fraction = spec.grace_fraction;
  cfg.ranker = spec.ranker;
  cfg.fit = spec.fit;
  cfg.n_samples = spec.n_samples;
  cfg.current_window_fraction = spec.current_window_fraction;
  if (spec.ranker == RankerKind::gp) {
    rng::Stream stream(rng::derive_seed(spec.seed, "training"));
    for (int k : rng::sample_without_replacement(stream, pool, spec.training_curves)) {
      cfg.gp_training_curve_ids.push_back(set[static_cast<std::size_t>(k)].id);
    }
    std::sort(cfg.gp_training_curve_ids.begin(), cfg.gp_training_curve_ids.end());
  }
  cfg.n_candidates = pool - static_cast<int>(cfg.gp_training_curve_ids.size());

  const ShTrace trace = run(set, cfg, spec.perf, spec.seed);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : set.curves()) {
    if (std::binary_search(cfg.gp_training_curve_ids.begin(), cfg.gp_training_curve_ids.end(), c.id)) continue;
    best = std::min(best, perf(c, spec.perf));
  }
  const double reference = spec.reference_perf ? *spec.reference_perf : mean_perf(set, spec.perf);
  const ComputeUnits cu = compute_units(trace, pool, set.steps());

  const fs::path out = a.out.empty() ? fs::path(".") : fs::path(a.out);
  write_json(out / "trace.json", to_json(trace));
  write_with(out / "trace.csv", [&](std::ostream& o) { write_trace_csv(trace, o); });
  write_json(out / "resolved_config.json", to_json(spec));
  std::cout << "picked_id=" << trace.picked_id << " picked_perf=" << format_double(trace.picked_perf)
            << " regret=" << format_double(trace.picked_perf - best)
            << " relative_regret=" << format_double(relative_regret(trace.picked_perf, best, reference))
            << " compute_units=" << cu.absolute << " relative_compute=" << format_double(cu.relative) << '\n';
  return kOk;
}

struct SweepArgs {
  std::string config;
  std::string curves;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  int jobs = 1;
  std::vector<std::string> rankers;
  std::vector<int> final_candidates;
  std::vector<int> training_curves;
  std::optional<int> eta;
  std::optional<double> grace;
};

int cmd_sweep(const SweepArgs& a) {
  SweepConfig cfg = sweep_config_from_json(load_json(a.config));
  if (!cfg.curves.empty()) cfg.curves = (fs::path(a.config).parent_path() / cfg.curves).string();
  if (!a.curves.empty()) cfg.curves = a.curves;
  auto& spec = cfg.spec;
  spec.root_seed = resolve_seed(a.seed, spec.root_seed);
  if (a.trials) spec.trials = *a.trials;
  if (!a.rankers.empty()) {
    spec.rankers.clear();
    for (const auto& r : a.rankers) spec.rankers.push_back(parse_ranker(r));
  }
  if (!a.final_candidates.empty()) spec.final_candidates = a.final_candidates;
  if (!a.training_curves.empty()) spec.training_curves = a.training_curves;
  if (a.eta) spec.eta = *a.eta;
  if (a.grace) spec.grace_fraction = *a.grace;
  if (a.jobs < 1) throw ConfigError("--jobs must be >= 1");

  const CurveSet universe = load_curves(cfg.curves, cfg.subtract_reference);
  cfg.curves = absolute_path(cfg.curves);
  SweepOptions opt;
  opt.jobs = a.jobs;
  const SweepOutcome outcome = run_sweep(universe, spec, opt);
  const Aggregate agg = aggregate(outcome.results);
  for (const auto& w : agg.warnings) std::cerr << "status=warning message=" << quote(w) << '\n';

  const fs::path out = a.out.empty() ? fs::path(".") : fs::path(a.out);
  write_with(out / "results.csv", [&](std::ostream& o) { write_results_csv(outcome.results, o); });
  write_with(out / "aggregate.csv", [&](std::ostream& o) { write_aggregate_csv(agg.rows, o); });
  json resolved = to_json(cfg);
  if (!spec.reference_perf) resolved["reference_perf"] = outcome.reference_perf;
  write_json(out / "resolved_config.json", resolved);
  std::cout << "trials=" << outcome.results.size() << " cells=" << agg.rows.size()
            << " reference_perf=" << format_double(outcome.reference_perf) << " out=" << out.string() << '\n';
  return kOk;
}

struct ReportArgs {
  std::string results;
  std::string out;
};

std::string format_fixed(double v, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

int cmd_report(const ReportArgs& a) {
  std::ifstream in(a.results);
  if (!in) throw IoError("cannot open " + a.results);
  std::string header;
  std::getline(in, header);
  in.seekg(0);
  std::vector<AggregateRow> rows;
  if (header.rfind("ranker,F,C,trials,", 0) == 0) {
    rows = read_aggregate_csv(in);
  } else {
    const auto results = read_results_csv(in);
    if (results.empty()) throw ConfigError(a.results + " holds no trial rows; nothing to report");
    const Aggregate agg = aggregate(results);
    for (const auto& w : agg.warnings) std::cerr << "status=warning message=" << quote(w) << '\n';
    rows = agg.rows;
  }
  if (rows.empty()) throw ConfigError(a.results + " holds no aggregate rows; nothing to report");

  std::map<std::pair<RankerKind, int>, std::vector<AggregateRow>> series;
  for (const auto& r : rows) series[{r.ranker, r.training_curves}].push_back(r);
  const fs::path out = a.out.empty() ? fs::path(".") : fs::path(a.out);
  for (auto& [key, members] : series) {
    std::sort(members.begin(), members.end(),
              [](const AggregateRow& x, const AggregateRow& y) { return x.final_candidates < y.final_candidates; });
    std::string name = "series_" + to_string(key.first);
    if (key.first == RankerKind::gp) name += "_C" + std::to_string(key.second);
    write_with(out / (name + ".csv"), [&](std::ostream& o) {
      o << "F,relative_compute,relative_regret,stderr\n";
      for (const auto& m : members) {
        o << m.final_candidates << ',' << format_double(m.mean_relative_compute) << ','
          << format_double(m.mean_relative_regret) << ',' << format_double(m.stderr_relative_regret) << '\n';
      }
    });
  }

  std::ostringstream table;
  table << std::left << std::setw(9) << "ranker" << std::right << std::setw(5) << "C" << std::setw(5) << "F"
        << std::setw(8) << "trials" << std::setw(12) << "compute" << std::setw(12) << "regret" << std::setw(12)
        << "stderr" << '\n';
  for (const auto& [key, members] : series) {
    for (const auto& m : members) {
      table << std::left << std::setw(9) << to_string(m.ranker) << std::right << std::setw(5)
            << m.training_curves << std::setw(5) << m.final_candidates << std::setw(8) << m.trials
            << std::setw(12) << format_fixed(m.mean_relative_compute, 4) << std::setw(12)
            << format_fixed(m.mean_relative_regret, 6) << std::setw(12) << format_fixed(m.stderr_relative_regret, 6)
            << '\n';
    }
  }
  write_with(out / "summary.txt", [&](std::ostream& o) { o << table.str(); });
  std::cout << table.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Successive Halving simulation lab"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic curve universe as CSV");
  g->add_option("--config", gen.config, "Synthetic family spec (JSON)")->required();
  g->add_option("--out", gen.out, "Output CSV path")->required();
  g->add_option("--seed", gen.seed, "Root seed (falls back to HALVINGLAB_SEED, then the spec)");

  RunArgs run_args;
  auto* r = app.add_subcommand("run", "One Successive Halving run with a trace dump");
  r->add_option("--config", run_args.config, "Run config (JSON); flags override it");
  r->add_option("--curves", run_args.curves, "Curve CSV");
  r->add_option("--out", run_args.out, "Output directory");
  r->add_option("--seed", run_args.seed, "Root seed");
  r->add_option("--ranker", run_args.ranker, "current, gp or oracle");
  r->add_option("--final-candidates", run_args.final_candidates, "F");
  r->add_option("--training-curves", run_args.training_curves, "C, gp only");
  r->add_option("--eta", run_args.eta, "Reduction rate");
  r->add_option("--grace", run_args.grace, "Grace fraction of T");
  r->add_option("--reference-perf", run_args.reference_perf, "Relative regret denominator");
  r->add_flag("--subtract-reference", run_args.subtract_reference, "Difference curves against candidate -1");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Seeded multi-trial sweep");
  s->add_option("--config", sw.config, "Sweep config (JSON)")->required();
  s->add_option("--curves", sw.curves, "Universe CSV (overrides the config)");
  s->add_option("--out", sw.out, "Output directory");
  s->add_option("--seed", sw.seed, "Root seed");
  s->add_option("--trials", sw.trials, "Trials per cell");
  s->add_option("--jobs", sw.jobs, "Concurrent trials");
  s->add_option("--ranker", sw.rankers, "Rankers")->delimiter(',');
  s->add_option("--final-candidates", sw.final_candidates, "F grid")->delimiter(',');
  s->add_option("--training-curves", sw.training_curves, "C grid")->delimiter(',');
  s->add_option("--eta", sw.eta, "Reduction rate");
  s->add_option("--grace", sw.grace, "Grace fraction of T");

  ReportArgs rep;
  auto* p = app.add_subcommand("report", "Plot data and a summary table from sweep output");
  p->add_option("--results", rep.results, "results.csv or aggregate.csv")->required();
  p->add_option("--out", rep.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    diag("config", e.what());
    return kConfig;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*r) return cmd_run(run_args);
    if (*s) return cmd_sweep(sw);
    if (*p) return cmd_report(rep);
  } catch (const NumericalError& e) {
    diag("numerical", e.what());
    return kNumerical;
  } catch (const IoError& e) {
    diag("io", e.what());
    return kIo;
  } catch (const ConfigError& e) {
    diag("config", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    diag("internal", e.what());
    return 1;
  }
  return kOk;
}
