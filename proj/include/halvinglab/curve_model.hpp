#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace halvinglab {

/// One candidate: its hyperparameter vector and the metric observed at
/// t = 1..T (lower is better).
struct LearningCurve {
  int id = 0;
  std::vector<double> hyperparams;
  std::vector<double> values;

  bool operator==(const LearningCurve&) const = default;
};

/// N learning curves sharing one uniform time grid and hyperparameter
/// dimension, plus an optional reference-model curve.
class CurveSet {
 public:
  /// Validates shapes, finiteness and id uniqueness; throws ConfigError.
  explicit CurveSet(std::vector<LearningCurve> curves,
                    std::optional<std::vector<double>> reference = std::nullopt);

  std::size_t size() const noexcept { return curves_.size(); }
  bool empty() const noexcept { return curves_.empty(); }
  int steps() const noexcept { return steps_; }
  int dims() const noexcept { return dims_; }

  const std::vector<LearningCurve>& curves() const noexcept { return curves_; }
  const LearningCurve& operator[](std::size_t index) const { return curves_[index]; }
  const std::optional<std::vector<double>>& reference() const noexcept { return reference_; }

  /// Position of the curve with the given id; throws ConfigError when absent.
  std::size_t index_of(int id) const;

  /// The curves at the given positions, in that order, keeping their ids.
  CurveSet subset(std::span<const std::size_t> indices) const;

  bool operator==(const CurveSet&) const = default;

 private:
  std::vector<LearningCurve> curves_;
  std::optional<std::vector<double>> reference_;
  int steps_ = 0;
  int dims_ = 0;
};

/// Width of the trailing window that defines perf(i).
struct PerfSpec {
  double window_fraction = 0.2;

  /// max(1, round(window_fraction * T)); throws ConfigError when the
  /// fraction lies outside (0, 1].
  int window_steps(int steps) const;
};

/// Shared trailing-window rule: max(1, round(fraction * steps)).
int trailing_window(double fraction, int steps);

/// Mean of the last Δ values of the curve.
double perf(const LearningCurve& curve, const PerfSpec& spec, int steps);
double perf(const LearningCurve& curve, const PerfSpec& spec);

struct BestCandidate {
  std::size_t index = 0;
  int id = 0;
  double perf = 0.0;
};

/// Minimizer of perf over the set; ties go to the lowest candidate id.
BestCandidate best_candidate(const CurveSet& set, const PerfSpec& spec);

/// Subtracts the reference curve from every curve; the output reference is
/// all zeros. Throws ConfigError when no reference is present.
CurveSet apply_reference_diff(const CurveSet& set);

// ---------------------------------------------------------------------------
// Synthetic curves

enum class CurveFamily { power_law, exponential_decay, crossing_pair_mix };

struct ParamRange {
  double low = 0.0;
  double high = 0.0;
};

struct SyntheticFamilySpec {
  CurveFamily family = CurveFamily::power_law;
  /// Keys a, b, c; crossing_pair_mix also reads slow_a, slow_b, slow_c.
  /// Missing keys fall back to family defaults.
  std::map<std::string, ParamRange> param_ranges;
  double noise_std = 0.0;
  double slow_starter_fraction = 0.0;

  /// Ranges after defaults are filled in.
  std::map<std::string, ParamRange> resolved_ranges() const;
  void validate() const;
};

std::string to_string(CurveFamily family);
CurveFamily parse_family(const std::string& name);

/// Family shapes at integer step t of T, parameters (a, b, c).
double power_law_value(double a, double b, double c, int t);
double exponential_decay_value(double a, double b, double c, int t, int steps);

/// Deterministic given the seed. Hyperparameters of each curve are its
/// sampled (a, b, c). For crossing_pair_mix at least
/// ceil(slow_starter_fraction * N) curves change rank between the first
/// 10% of steps and the final window.
CurveSet generate_synthetic(const SyntheticFamilySpec& spec, int count, int steps,
                            std::uint64_t seed);

/// Number of curves whose rank by mean over the first 10% of steps differs
/// from their rank by final perf (ranks tie-broken by id).
int count_rank_changes(const CurveSet& set, const PerfSpec& spec);

// ---------------------------------------------------------------------------
// CSV

struct CsvOptions {
  /// Apply reference differencing right after parsing.
  bool subtract_reference = false;
};

/// Long format: candidate_id,t,value,h1..hD; candidate_id -1 holds the
/// optional reference curve. Candidate ids are reindexed to 0..N-1 in
/// ascending order of the ids found in the file.
CurveSet read_csv(std::istream& in, const CsvOptions& options = {});
CurveSet load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// Writes shortest round-trip decimal representations.
void write_csv(const CurveSet& set, std::ostream& out);
void save_csv(const CurveSet& set, const std::filesystem::path& path);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace halvinglab
