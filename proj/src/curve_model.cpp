#include "halvinglab/curve_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "halvinglab/errors.hpp"

namespace halvinglab {

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

CurveSet::CurveSet(std::vector<LearningCurve> curves, std::optional<std::vector<double>> reference)
    : curves_(std::move(curves)), reference_(std::move(reference)) {
  if (!curves_.empty()) {
    steps_ = static_cast<int>(curves_.front().values.size());
    dims_ = static_cast<int>(curves_.front().hyperparams.size());
  } else if (reference_) {
    steps_ = static_cast<int>(reference_->size());
  }
  if (!curves_.empty() && steps_ < 1) throw ConfigError("curves must have at least one step");
  if (!curves_.empty() && dims_ < 1) throw ConfigError("curves must have at least one hyperparameter");

  std::set<int> ids;
  for (const auto& c : curves_) {
    if (static_cast<int>(c.values.size()) != steps_) {
      throw ConfigError("candidate " + std::to_string(c.id) + " has " +
                        std::to_string(c.values.size()) + " steps, expected " +
                        std::to_string(steps_));
    }
    if (static_cast<int>(c.hyperparams.size()) != dims_) {
      throw ConfigError("candidate " + std::to_string(c.id) + " has " +
                        std::to_string(c.hyperparams.size()) + " hyperparameters, expected " +
                        std::to_string(dims_));
    }
    if (!all_finite(c.values) || !all_finite(c.hyperparams)) {
      throw ConfigError("candidate " + std::to_string(c.id) + " has non-finite entries");
    }
    if (!ids.insert(c.id).second) throw ConfigError("duplicate candidate id " + std::to_string(c.id));
  }
  if (reference_) {
    if (static_cast<int>(reference_->size()) != steps_) {
      throw ConfigError("reference curve has " + std::to_string(reference_->size()) +
                        " steps, expected " + std::to_string(steps_));
    }
    if (!all_finite(*reference_)) throw ConfigError("reference curve has non-finite entries");
  }
}

std::size_t CurveSet::index_of(int id) const {
  for (std::size_t i = 0; i < curves_.size(); ++i) {
    if (curves_[i].id == id) return i;
  }
  throw ConfigError("unknown candidate id " + std::to_string(id));
}

CurveSet CurveSet::subset(std::span<const std::size_t> indices) const {
  std::vector<LearningCurve> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= curves_.size()) throw ConfigError("subset index out of range");
    out.push_back(curves_[i]);
  }
  return CurveSet(std::move(out), reference_);
}

int trailing_window(double fraction, int steps) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("window_fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  if (steps < 1) throw ConfigError("window needs at least one step");
  const auto w = static_cast<int>(std::llround(fraction * steps));
  return std::clamp(w, 1, steps);
}

int PerfSpec::window_steps(int steps) const { return trailing_window(window_fraction, steps); }

double perf(const LearningCurve& curve, const PerfSpec& spec, int steps) {
  if (steps < 1 || steps > static_cast<int>(curve.values.size())) {
    throw ConfigError("perf: curve has fewer than " + std::to_string(steps) + " steps");
  }
  const int window = spec.window_steps(steps);
  const auto end = curve.values.begin() + steps;
  return std::accumulate(end - window, end, 0.0) / window;
}

double perf(const LearningCurve& curve, const PerfSpec& spec) {
  return perf(curve, spec, static_cast<int>(curve.values.size()));
}

BestCandidate best_candidate(const CurveSet& set, const PerfSpec& spec) {
  if (set.empty()) throw ConfigError("best_candidate: empty curve set");
  BestCandidate best;
  bool first = true;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double p = perf(set[i], spec);
    if (first || p < best.perf || (p == best.perf && set[i].id < best.id)) {
      best = {i, set[i].id, p};
      first = false;
    }
  }
  return best;
}

CurveSet apply_reference_diff(const CurveSet& set) {
  if (!set.reference()) throw ConfigError("reference differencing requires a reference curve");
  const auto& ref = *set.reference();
  std::vector<LearningCurve> out = set.curves();
  for (auto& c : out) {
    for (std::size_t t = 0; t < c.values.size(); ++t) c.values[t] -= ref[t];
  }
  return CurveSet(std::move(out), std::vector<double>(ref.size(), 0.0));
}

}  // namespace halvinglab
