#include <sstream>

#include "doctest.h"
#include "halvinglab/errors.hpp"
#include "halvinglab/serialize.hpp"

using namespace halvinglab;

namespace {

std::string config_error(const json& j, GenerateSpec (*reader)(const json&)) {
  try {
    reader(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("generate spec parsing") {
  const json j = json::parse(R"({"family": "power_law", "count": 8, "steps": 12, "seed": 4,
                                 "noise_std": 0.1, "param_ranges": {"a": [1, 2]}})");
  const GenerateSpec s = generate_spec_from_json(j);
  CHECK(s.family.family == CurveFamily::power_law);
  CHECK(s.count == 8);
  CHECK(s.steps == 12);
  CHECK(s.seed == 4);
  CHECK(s.family.param_ranges.at("a").high == 2.0);
  CHECK(generate_spec_from_json(to_json(s)).family.resolved_ranges().at("b").low == 0.3);
  CHECK(to_json(generate_spec_from_json(to_json(s))) == to_json(s));

  const auto err = [](const char* text) { return config_error(json::parse(text), generate_spec_from_json); };
  CHECK(err(R"({"family": "power_law", "count": "many", "steps": 3})").find("generate.count") != std::string::npos);
  CHECK(err(R"({"family": "power_law", "count": 4.5, "steps": 3})").find("generate.count") != std::string::npos);
  CHECK(err(R"({"family": "power_law", "steps": 3})").find("generate.count") != std::string::npos);
  CHECK(err(R"({"family": "spline", "count": 4, "steps": 3})").find("generate.family") != std::string::npos);
  CHECK(err(R"({"family": "power_law", "count": 4, "steps": 3, "colour": 1})").find("generate.colour") !=
        std::string::npos);
  CHECK(err(R"({"family": "power_law", "count": 4, "steps": 3, "param_ranges": {"a": [2, 1]}})")
            .find("param_ranges.a") != std::string::npos);
  CHECK(err(R"({"family": "power_law", "count": 4, "steps": 3, "param_ranges": {"q": [0, 1]}})")
            .find("'q'") != std::string::npos);
  CHECK(err(R"([1, 2])").find("expected a JSON object") != std::string::npos);

  std::istringstream broken("{\"family\": ");
  CHECK_THROWS_AS(parse_json(broken, "spec.json"), ConfigError);
  CHECK_THROWS_AS(load_json("/nonexistent/spec.json"), IoError);
}

TEST_CASE("sweep and run configs round trip") {
  const json j = json::parse(R"({"curves": "u.csv", "pool_size": 32, "final_candidates": [1, 2],
                                 "training_curves": [4], "rankers": ["gp", "current"], "trials": 7,
                                 "seed": 18446744073709551615, "fit": {"iterations": 10, "solver": "dense"},
                                 "reference_perf": 0.5})");
  const SweepConfig c = sweep_config_from_json(j);
  CHECK(c.spec.root_seed == 18446744073709551615ULL);
  CHECK(c.spec.fit.iterations == 10);
  CHECK(c.spec.fit.solver == gp::SolverKind::dense);
  CHECK(c.spec.rankers == std::vector<RankerKind>{RankerKind::gp, RankerKind::current});
  CHECK(*c.spec.reference_perf == 0.5);
  CHECK(to_json(sweep_config_from_json(to_json(c))) == to_json(c));
  CHECK_THROWS_WITH_AS(sweep_config_from_json(json::parse(R"({"fit": {"lr": 1}})")),
                       doctest::Contains("sweep.fit.lr"), ConfigError);
  CHECK_THROWS_WITH_AS(sweep_config_from_json(json::parse(R"({"rankers": ["best"]})")),
                       doctest::Contains("sweep.rankers"), ConfigError);
  CHECK_THROWS_AS(sweep_config_from_json(json::parse(R"({"seed": -1})")), ConfigError);

  RunSpec r;
  r.ranker = RankerKind::gp;
  r.training_curves = 8;
  r.curves = "/tmp/x.csv";
  CHECK(to_json(run_spec_from_json(to_json(r))) == to_json(r));
}

TEST_CASE("model and trace documents") {
  const CurveSet set = load_csv(HALVINGLAB_DATA_DIR "/fixture8.csv");
  std::vector<gp::CurvePrefix> prefixes;
  for (std::size_t i = 0; i < set.size(); ++i) prefixes.push_back({i, i < 4 ? 10 : 3});
  const auto data = gp::make_training_data(set, prefixes);
  gp::FitConfig cfg;
  cfg.iterations = 10;
  const gp::GpModel model = gp::fit(data.observations, data.standardization, cfg);
  const json mj = to_json(model);
  CHECK(mj["hyperparams"]["log_lengthscales"].size() == 3);
  CHECK(mj["observations"]["count"] == 52);
  CHECK(mj["observations"]["digest"] == observation_digest(model.observations()));
  CHECK(mj["standardization"]["input_maxes"].size() == 3);
  auto shifted = model.observations();
  shifted.targets(0) += 1e-15;
  CHECK(observation_digest(shifted) != observation_digest(model.observations()));

  ShConfig sc;
  sc.n_candidates = 8;
  sc.final_candidates = 1;
  const ShTrace trace = run(set, sc, PerfSpec{}, 1);
  const json tj = to_json(trace);
  CHECK(tj["observed_cells"].size() == trace.observed_cells.size());
  CHECK(tj["rungs"].size() == 3);
  CHECK(tj["picked_id"] == trace.picked_id);
  CHECK(tj["compute_units"] == trace.compute_units);

  std::ostringstream csv;
  write_trace_csv(trace, csv);
  std::istringstream lines(csv.str());
  std::string line;
  int rows = -1;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 8 + 4 + 2);
}
