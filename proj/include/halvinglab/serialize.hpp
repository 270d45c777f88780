#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "halvinglab/curve_model.hpp"
#include "halvinglab/experiment.hpp"
#include "halvinglab/gp_core.hpp"
#include "halvinglab/sh_engine.hpp"
#include "json.hpp"

namespace halvinglab {

using nlohmann::json;

/// Input of `generate`: family spec plus universe shape.
struct GenerateSpec {
  SyntheticFamilySpec family;
  int count = 0;
  int steps = 0;
  std::uint64_t seed = 0;
};

/// Input of `run`: one SH execution over a curve file. Training curves
/// (gp only) are drawn from the file with the seed.
struct RunSpec {
  std::string curves;
  bool subtract_reference = false;
  RankerKind ranker = RankerKind::current;
  int final_candidates = 1;
  int training_curves = 0;
  int eta = 2;
  double grace_fraction = 0.1;
  std::uint64_t seed = 0;
  PerfSpec perf;
  std::optional<double> reference_perf;
  gp::FitConfig fit;
  int n_samples = 64;
  double current_window_fraction = 0.2;
};

/// Input of `sweep`.
struct SweepConfig {
  std::string curves;
  bool subtract_reference = false;
  SweepSpec spec;
};

// Readers reject unknown keys and wrongly typed fields with a ConfigError
// naming the field. Missing keys keep their defaults unless noted.
GenerateSpec generate_spec_from_json(const json& j);  // family, count, steps required
json to_json(const GenerateSpec& spec);

RunSpec run_spec_from_json(const json& j);
json to_json(const RunSpec& spec);

SweepConfig sweep_config_from_json(const json& j);
json to_json(const SweepConfig& config);

json to_json(const gp::FitConfig& config);
json to_json(const gp::GpHyperparams& hp);
/// Hyperparameters, standardization and a digest of the observations.
json to_json(const gp::GpModel& model);

/// FNV-1a over the observed cells and the bit patterns of the targets.
std::string observation_digest(const gp::ObservationSet& obs);

json to_json(const ShTrace& trace);
/// One row per rung and ranked candidate:
/// rung,budget_steps,candidate_id,score,rank,promoted
void write_trace_csv(const ShTrace& trace, std::ostream& out);

/// Parses a JSON document; syntax errors become ConfigError.
json parse_json(std::istream& in, const std::string& source);
json load_json(const std::filesystem::path& path);

}  // namespace halvinglab
