#include <algorithm>
#include <cmath>
#include <numeric>

#include "halvinglab/curve_model.hpp"
#include "halvinglab/errors.hpp"
#include "halvinglab/rng.hpp"

namespace halvinglab {

namespace {

constexpr int kMaxAttempts = 64;

std::map<std::string, ParamRange> family_defaults(CurveFamily family) {
  switch (family) {
    case CurveFamily::power_law:
      return {{"a", {0.5, 2.0}}, {"b", {0.3, 1.2}}, {"c", {0.1, 0.5}}};
    case CurveFamily::exponential_decay:
      return {{"a", {0.5, 2.0}}, {"b", {1.0, 8.0}}, {"c", {0.1, 0.5}}};
    case CurveFamily::crossing_pair_mix:
      // Fast starters sit close to a high plateau early; slow starters start
      // far above it and drop below it after roughly a third of the run.
      return {{"a", {0.2, 0.5}},      {"b", {2.0, 5.0}},      {"c", {0.3, 0.5}},
              {"slow_a", {1.5, 3.0}}, {"slow_b", {5.0, 8.0}}, {"slow_c", {0.05, 0.25}}};
  }
  return {};
}

std::vector<int> ranks_by(const std::vector<double>& score, const CurveSet& set) {
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int l, int r) {
    if (score[l] != score[r]) return score[l] < score[r];
    return set[l].id < set[r].id;
  });
  std::vector<int> rank(score.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = static_cast<int>(pos);
  return rank;
}

}  // namespace

std::string to_string(CurveFamily family) {
  switch (family) {
    case CurveFamily::power_law: return "power_law";
    case CurveFamily::exponential_decay: return "exponential_decay";
    case CurveFamily::crossing_pair_mix: return "crossing_pair_mix";
  }
  return "unknown";
}

CurveFamily parse_family(const std::string& name) {
  if (name == "power_law") return CurveFamily::power_law;
  if (name == "exponential_decay") return CurveFamily::exponential_decay;
  if (name == "crossing_pair_mix") return CurveFamily::crossing_pair_mix;
  throw ConfigError("family: unknown curve family '" + name + "'");
}

std::map<std::string, ParamRange> SyntheticFamilySpec::resolved_ranges() const {
  auto ranges = family_defaults(family);
  for (const auto& [key, range] : param_ranges) {
    if (!ranges.contains(key)) {
      throw ConfigError("param_ranges: unknown parameter '" + key + "' for family " +
                        to_string(family));
    }
    ranges[key] = range;
  }
  return ranges;
}

void SyntheticFamilySpec::validate() const {
  for (const auto& [key, r] : resolved_ranges()) {
    if (!std::isfinite(r.low) || !std::isfinite(r.high) || r.low > r.high) {
      throw ConfigError("param_ranges." + key + ": require finite low <= high");
    }
  }
  if (!std::isfinite(noise_std) || noise_std < 0.0) {
    throw ConfigError("noise_std: must be finite and >= 0");
  }
  if (!(slow_starter_fraction >= 0.0 && slow_starter_fraction <= 1.0)) {
    throw ConfigError("slow_starter_fraction: must lie in [0, 1]");
  }
}

double power_law_value(double a, double b, double c, int t) {
  return a * std::pow(static_cast<double>(t), -b) + c;
}

double exponential_decay_value(double a, double b, double c, int t, int steps) {
  return a * std::exp(-b * static_cast<double>(t) / steps) + c;
}

int count_rank_changes(const CurveSet& set, const PerfSpec& spec) {
  const int early = trailing_window(0.1, set.steps());
  std::vector<double> early_score(set.size());
  std::vector<double> final_score(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& v = set[i].values;
    early_score[i] = std::accumulate(v.begin(), v.begin() + early, 0.0) / early;
    final_score[i] = perf(set[i], spec);
  }
  const auto early_rank = ranks_by(early_score, set);
  const auto final_rank = ranks_by(final_score, set);
  int changed = 0;
  for (std::size_t i = 0; i < set.size(); ++i) changed += early_rank[i] != final_rank[i];
  return changed;
}

CurveSet generate_synthetic(const SyntheticFamilySpec& spec, int count, int steps,
                            std::uint64_t seed) {
  if (count < 2) throw ConfigError("N: synthetic generation needs at least 2 curves");
  if (steps < 2) throw ConfigError("T: synthetic generation needs at least 2 steps");
  spec.validate();
  const auto ranges = spec.resolved_ranges();
  const bool crossing = spec.family == CurveFamily::crossing_pair_mix;
  const int slow_count =
      crossing ? static_cast<int>(std::ceil(spec.slow_starter_fraction * count - 1e-12)) : 0;

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    rng::Stream stream(rng::derive_seed(seed, "synthetic", {static_cast<std::uint64_t>(attempt)}));
    std::vector<bool> slow(static_cast<std::size_t>(count), false);
    for (int i : rng::sample_without_replacement(stream, count, slow_count)) slow[i] = true;

    std::vector<LearningCurve> curves;
    curves.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const std::string prefix = slow[i] ? "slow_" : "";
      const auto& ra = ranges.at(prefix + "a");
      const auto& rb = ranges.at(prefix + "b");
      const auto& rc = ranges.at(prefix + "c");
      const double a = stream.uniform(ra.low, ra.high);
      const double b = stream.uniform(rb.low, rb.high);
      const double c = stream.uniform(rc.low, rc.high);

      LearningCurve curve{i, {a, b, c}, std::vector<double>(static_cast<std::size_t>(steps))};
      for (int t = 1; t <= steps; ++t) {
        double y = spec.family == CurveFamily::power_law
                       ? power_law_value(a, b, c, t)
                       : exponential_decay_value(a, b, c, t, steps);
        if (spec.noise_std > 0.0) y += spec.noise_std * stream.normal();
        curve.values[static_cast<std::size_t>(t - 1)] = y;
      }
      curves.push_back(std::move(curve));
    }
    CurveSet set(std::move(curves));
    if (!crossing || count_rank_changes(set, PerfSpec{}) >= slow_count) return set;
  }
  throw ConfigError("slow_starter_fraction: could not generate " + std::to_string(slow_count) +
                    " rank-changing curves within " + std::to_string(kMaxAttempts) +
                    " attempts; widen the slow_* ranges");
}

}  // namespace halvinglab
