#include "halvinglab/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "halvinglab/errors.hpp"

namespace halvinglab {

namespace {

void convert(const json& j, double& out) {
  if (!j.is_number()) throw std::invalid_argument("expected a number");
  out = j.get<double>();
}

void convert(const json& j, int& out) {
  if (!j.is_number_integer()) throw std::invalid_argument("expected an integer");
  const auto v = j.get<long long>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw std::invalid_argument("integer out of range");
  }
  out = static_cast<int>(v);
}

void convert(const json& j, std::uint64_t& out) {
  if (j.is_number_unsigned()) {
    out = j.get<std::uint64_t>();
  } else if (j.is_number_integer() && j.get<long long>() >= 0) {
    out = static_cast<std::uint64_t>(j.get<long long>());
  } else {
    throw std::invalid_argument("expected a non-negative integer");
  }
}

void convert(const json& j, bool& out) {
  if (!j.is_boolean()) throw std::invalid_argument("expected true or false");
  out = j.get<bool>();
}

void convert(const json& j, std::string& out) {
  if (!j.is_string()) throw std::invalid_argument("expected a string");
  out = j.get<std::string>();
}

void convert(const json& j, RankerKind& out) {
  std::string s;
  convert(j, s);
  out = parse_ranker(s);
}

void convert(const json& j, gp::SolverKind& out) {
  std::string s;
  convert(j, s);
  if (s == "kronecker") {
    out = gp::SolverKind::kronecker;
  } else if (s == "dense") {
    out = gp::SolverKind::dense;
  } else {
    throw std::invalid_argument("expected \"kronecker\" or \"dense\"");
  }
}

void convert(const json& j, ParamRange& out) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected [low, high]");
  convert(j[0], out.low);
  convert(j[1], out.high);
}

template <class T>
void convert(const json& j, std::vector<T>& out) {
  if (!j.is_array()) throw std::invalid_argument("expected an array");
  out.clear();
  for (const auto& e : j) {
    T v{};
    convert(e, v);
    out.push_back(v);
  }
}

template <class T>
void convert(const json& j, std::optional<T>& out) {
  if (j.is_null()) {
    out.reset();
    return;
  }
  T v{};
  convert(j, v);
  out = v;
}

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <class T>
  bool get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return false;
    try {
      convert(*it, out);
    } catch (const ConfigError& e) {
      throw ConfigError(path(key) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
    return true;
  }

  template <class T>
  void require(const std::string& key, T& out) {
    if (!get(key, out)) throw ConfigError(path(key) + ": required field is missing");
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(path(key) + ": unknown field");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

gp::FitConfig fit_from_json(const json& j, const std::string& where) {
  gp::FitConfig c;
  Fields f(j, where);
  f.get("learning_rate", c.learning_rate);
  f.get("iterations", c.iterations);
  f.get("beta1", c.beta1);
  f.get("beta2", c.beta2);
  f.get("epsilon", c.epsilon);
  f.get("solver", c.solver);
  f.finish();
  return c;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::vector<std::string> ranker_names(const std::vector<RankerKind>& rankers) {
  std::vector<std::string> out;
  for (auto r : rankers) out.push_back(to_string(r));
  return out;
}

json ranking_json(const Ranking& r) {
  json rows = json::array();
  for (std::size_t k = 0; k < r.ids.size(); ++k) rows.push_back({{"candidate_id", r.ids[k]}, {"score", r.scores[k]}});
  return rows;
}

json sh_config_json(const ShConfig& c) {
  return {{"n_candidates", c.n_candidates},
          {"final_candidates", c.final_candidates},
          {"eta", c.eta},
          {"grace", c.grace_fraction},
          {"ranker", to_string(c.ranker)},
          {"gp_training_curve_ids", c.gp_training_curve_ids},
          {"fit", to_json(c.fit)},
          {"n_samples", c.n_samples},
          {"current_window_fraction", c.current_window_fraction}};
}

}  // namespace

GenerateSpec generate_spec_from_json(const json& j) {
  GenerateSpec s;
  Fields f(j, "generate");
  std::string family;
  f.require("family", family);
  try {
    s.family.family = parse_family(family);
  } catch (const ConfigError& e) {
    throw ConfigError(f.path("family") + ": " + e.what());
  }
  f.require("count", s.count);
  f.require("steps", s.steps);
  f.get("seed", s.seed);
  f.get("noise_std", s.family.noise_std);
  f.get("slow_starter_fraction", s.family.slow_starter_fraction);
  if (const json* ranges = f.child("param_ranges")) {
    Fields r(*ranges, f.path("param_ranges"));
    for (const auto& [key, value] : ranges->items()) {
      ParamRange range;
      r.get(key, range);
      s.family.param_ranges[key] = range;
    }
  }
  f.finish();
  try {
    s.family.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("generate: ") + e.what());
  }
  if (s.count < 2) throw ConfigError("generate.count: must be >= 2");
  if (s.steps < 2) throw ConfigError("generate.steps: must be >= 2");
  return s;
}

json to_json(const GenerateSpec& s) {
  json ranges = json::object();
  for (const auto& [key, r] : s.family.resolved_ranges()) ranges[key] = {r.low, r.high};
  return {{"family", to_string(s.family.family)},
          {"count", s.count},
          {"steps", s.steps},
          {"seed", s.seed},
          {"noise_std", s.family.noise_std},
          {"slow_starter_fraction", s.family.slow_starter_fraction},
          {"param_ranges", ranges}};
}

RunSpec run_spec_from_json(const json& j) {
  RunSpec s;
  Fields f(j, "run");
  f.get("curves", s.curves);
  f.get("subtract_reference", s.subtract_reference);
  f.get("ranker", s.ranker);
  f.get("final_candidates", s.final_candidates);
  f.get("training_curves", s.training_curves);
  f.get("eta", s.eta);
  f.get("grace", s.grace_fraction);
  f.get("seed", s.seed);
  f.get("window_fraction", s.perf.window_fraction);
  f.get("reference_perf", s.reference_perf);
  if (const json* fit = f.child("fit")) s.fit = fit_from_json(*fit, f.path("fit"));
  f.get("n_samples", s.n_samples);
  f.get("current_window_fraction", s.current_window_fraction);
  f.finish();
  return s;
}

json to_json(const RunSpec& s) {
  return {{"curves", s.curves},
          {"subtract_reference", s.subtract_reference},
          {"ranker", to_string(s.ranker)},
          {"final_candidates", s.final_candidates},
          {"training_curves", s.training_curves},
          {"eta", s.eta},
          {"grace", s.grace_fraction},
          {"seed", s.seed},
          {"window_fraction", s.perf.window_fraction},
          {"reference_perf", optional_json(s.reference_perf)},
          {"fit", to_json(s.fit)},
          {"n_samples", s.n_samples},
          {"current_window_fraction", s.current_window_fraction}};
}

SweepConfig sweep_config_from_json(const json& j) {
  SweepConfig c;
  auto& s = c.spec;
  Fields f(j, "sweep");
  f.get("curves", c.curves);
  f.get("subtract_reference", c.subtract_reference);
  f.get("pool_size", s.pool_size);
  f.get("final_candidates", s.final_candidates);
  f.get("training_curves", s.training_curves);
  f.get("rankers", s.rankers);
  f.get("trials", s.trials);
  f.get("seed", s.root_seed);
  f.get("window_fraction", s.perf.window_fraction);
  f.get("reference_perf", s.reference_perf);
  f.get("eta", s.eta);
  f.get("grace", s.grace_fraction);
  if (const json* fit = f.child("fit")) s.fit = fit_from_json(*fit, f.path("fit"));
  f.get("n_samples", s.n_samples);
  f.get("current_window_fraction", s.current_window_fraction);
  f.finish();
  return c;
}

json to_json(const SweepConfig& c) {
  const auto& s = c.spec;
  return {{"curves", c.curves},
          {"subtract_reference", c.subtract_reference},
          {"pool_size", s.pool_size},
          {"final_candidates", s.final_candidates},
          {"training_curves", s.training_curves},
          {"rankers", ranker_names(s.rankers)},
          {"trials", s.trials},
          {"seed", s.root_seed},
          {"window_fraction", s.perf.window_fraction},
          {"reference_perf", optional_json(s.reference_perf)},
          {"eta", s.eta},
          {"grace", s.grace_fraction},
          {"fit", to_json(s.fit)},
          {"n_samples", s.n_samples},
          {"current_window_fraction", s.current_window_fraction}};
}

json to_json(const gp::FitConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"iterations", c.iterations},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"solver", c.solver == gp::SolverKind::dense ? "dense" : "kronecker"}};
}

json to_json(const gp::GpHyperparams& hp) {
  std::vector<double> ls(hp.log_lengthscales.data(), hp.log_lengthscales.data() + hp.log_lengthscales.size());
  return {{"log_lengthscales", ls}, {"log_amplitude", hp.log_amplitude}, {"log_noise", hp.log_noise}};
}

std::string observation_digest(const gp::ObservationSet& obs) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t k = 0; k < obs.points.size(); ++k) {
    mix(static_cast<std::uint64_t>(obs.points[k].candidate));
    mix(static_cast<std::uint64_t>(obs.points[k].time));
    mix(std::bit_cast<std::uint64_t>(obs.targets(static_cast<Eigen::Index>(k))));
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return "fnv1a64:" + out.str();
}

json to_json(const gp::GpModel& model) {
  const auto& st = model.standardization();
  const auto& obs = model.observations();
  const auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"hyperparams", to_json(model.hyperparams())},
          {"log_marginal_likelihood", log_marginal_likelihood(model)},
          {"standardization",
           {{"input_mins", vec(st.input_mins)},
            {"input_maxes", vec(st.input_maxes)},
            {"output_shift", st.output_shift},
            {"output_scale", st.output_scale}}},
          {"observations",
           {{"count", obs.size()},
            {"candidates", obs.candidates()},
            {"steps", obs.steps()},
            {"digest", observation_digest(obs)}}}};
}

json to_json(const ShTrace& t) {
  json rungs = json::array();
  for (const auto& r : t.rungs) {
    json rj = {{"rung", r.rung},
               {"budget_steps", r.budget_steps},
               {"active_ids", r.active_ids},
               {"ranking", ranking_json(r.ranking)},
               {"promoted_ids", r.promoted_ids}};
    if (r.gp_fit) {
      rj["gp_fit"] = {{"hyperparams", to_json(r.gp_fit->hyperparams)},
                      {"log_marginal_likelihood", r.gp_fit->log_marginal_likelihood},
                      {"observations", r.gp_fit->observations}};
    }
    rungs.push_back(std::move(rj));
  }
  json cells = json::array();
  for (const auto& c : t.observed_cells) cells.push_back({c.candidate_id, c.t, c.rung});
  return {{"config", sh_config_json(t.config)},
          {"steps", t.steps},
          {"grace_steps", t.grace_steps},
          {"rung_total", t.rung_total},
          {"rungs", rungs},
          {"observed_cells", cells},
          {"final_ids", t.final_ids},
          {"picked_id", t.picked_id},
          {"picked_perf", t.picked_perf},
          {"compute_units", t.compute_units}};
}

void write_trace_csv(const ShTrace& trace, std::ostream& out) {
  out << "rung,budget_steps,candidate_id,score,rank,promoted\n";
  for (const auto& r : trace.rungs) {
    const std::set<int> promoted(r.promoted_ids.begin(), r.promoted_ids.end());
    for (std::size_t k = 0; k < r.ranking.ids.size(); ++k) {
      out << r.rung << ',' << r.budget_steps << ',' << r.ranking.ids[k] << ',' << format_double(r.ranking.scores[k])
          << ',' << (k + 1) << ',' << (promoted.contains(r.ranking.ids[k]) ? 1 : 0) << '\n';
    }
  }
}

json parse_json(std::istream& in, const std::string& source) {
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": malformed JSON: " + e.what());
  }
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_json(in, path.string());
}

}  // namespace halvinglab
