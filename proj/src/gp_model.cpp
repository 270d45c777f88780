#include <limits>
#include <sstream>

#include "halvinglab/errors.hpp"
#include "halvinglab/gp_core.hpp"
#include "halvinglab/rng.hpp"

namespace halvinglab::gp {

namespace {

std::string describe(const Eigen::VectorXd& theta) {
  std::ostringstream out;
  out.precision(17);
  out << '[';
  for (Eigen::Index i = 0; i < theta.size(); ++i) out << (i ? "," : "") << theta(i);
  out << ']';
  return out.str();
}

std::vector<Cell> window_cells(int candidate, int window, int steps) {
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(window));
  for (int t = steps - window; t < steps; ++t) cells.push_back({candidate, t});
  return cells;
}

void check_query(const GpModel& model, std::span<const int> candidates, int window) {
  const auto& obs = model.observations();
  if (window < 1 || window > obs.steps()) {
    throw ConfigError("prediction window must cover 1..T steps");
  }
  for (int c : candidates) {
    if (c < 0 || c >= obs.candidates()) throw ConfigError("queried candidate is not in the model inputs");
  }
}

}  // namespace

GpModel::GpModel(GpHyperparams hp, ObservationSet obs, StandardizationParams standardization,
                 SolverKind solver)
    : hp_(std::move(hp)), obs_(std::move(obs)), standardization_(std::move(standardization)) {
  if (obs_.points.empty()) throw ConfigError("a GP model needs at least one observation");
  posterior_ = factorize(hp_, obs_, solver);
}

double log_marginal_likelihood(const GpModel& model) {
  return model.posterior().log_marginal_likelihood();
}

Eigen::VectorXd lml_gradient(const GpModel& model) { return model.posterior().lml_gradient(); }

GpModel fit(ObservationSet obs, StandardizationParams standardization, const FitConfig& config,
            std::optional<GpHyperparams> init) {
  obs.validate();
  if (obs.size() < 2) throw ConfigError("fit needs at least two observations");
  if (config.iterations < 0 || !(config.learning_rate > 0.0)) {
    throw ConfigError("fit: iterations must be >= 0 and learning_rate > 0");
  }
  const GpHyperparams start = init ? *init : GpHyperparams::initial(static_cast<int>(obs.x_matrix.cols()));
  if (start.hyper_dims() != obs.x_matrix.cols()) {
    throw ConfigError("fit: initial hyperparameters do not match the input dimension");
  }

  Eigen::VectorXd theta = start.pack();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd best_theta = theta;
  double best_lml = -std::numeric_limits<double>::infinity();
  std::vector<double> trajectory;
  trajectory.reserve(static_cast<std::size_t>(config.iterations) + 1);

  for (int it = 0; it <= config.iterations; ++it) {
    std::unique_ptr<Posterior> post;
    try {
      post = factorize(GpHyperparams::unpack(theta), obs, config.solver);
    } catch (const NumericalError& e) {
      throw NumericalError("fit aborted at iteration " + std::to_string(it) + " theta=" +
                               describe(theta) + ": " + e.what(),
                           e.jitter_ladder());
    }
    const double lml = post->log_marginal_likelihood();
    if (!std::isfinite(lml)) {
      throw NumericalError("fit aborted: non-finite LML at iteration " + std::to_string(it) +
                           " theta=" + describe(theta));
    }
    trajectory.push_back(lml);
    if (lml > best_lml) {
      best_lml = lml;
      best_theta = theta;
    }
    if (it == config.iterations) break;

    const Eigen::VectorXd g = post->lml_gradient();
    if (!g.allFinite()) {
      throw NumericalError("fit aborted: non-finite gradient at iteration " + std::to_string(it) +
                           " theta=" + describe(theta));
    }
    m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
    m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config.beta1, it + 1);
    const double c2 = 1.0 - std::pow(config.beta2, it + 1);
    theta.array() += config.learning_rate * (m1.array() / c1) /
                     ((m2.array() / c2).sqrt() + config.epsilon);
  }

  GpModel model(GpHyperparams::unpack(best_theta), std::move(obs), std::move(standardization),
                config.solver);
  model.set_trajectory(std::move(trajectory));
  return model;
}

std::vector<CandidateSummary> predict_perf(const GpModel& model, std::span<const int> candidates,
                                           int window, int n_samples, std::uint64_t seed) {
  check_query(model, candidates, window);
  if (n_samples < 2) throw ConfigError("predict_perf needs at least two samples");
  const auto& st = model.standardization();
  const int steps = model.observations().steps();

  std::vector<CandidateSummary> out;
  out.reserve(candidates.size());
  for (int c : candidates) {
    const auto cells = window_cells(c, window, steps);
    const JointPrediction joint = model.posterior().predict(cells);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(joint.cov);
    const Eigen::MatrixXd root =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    rng::Stream stream(rng::derive_seed(seed, "posterior_sample", {static_cast<std::uint64_t>(c)}));
    Eigen::VectorXd z(window);
    Eigen::VectorXd draws(n_samples);
    for (int s = 0; s < n_samples; ++s) {
      for (int k = 0; k < window; ++k) z(k) = stream.normal();
      draws(s) = (joint.mean + root * z).mean();
    }
    const double mean = draws.mean();
    const double var = (draws.array() - mean).square().sum() / (n_samples - 1);
    out.push_back({c, st.destandardize(mean),
                   std::max(var * st.output_scale * st.output_scale, kMinVariance)});
  }
  return out;
}

std::vector<CandidateSummary> exact_window_posterior(const GpModel& model,
                                                     std::span<const int> candidates, int window) {
  check_query(model, candidates, window);
  const auto& st = model.standardization();
  const int steps = model.observations().steps();
  std::vector<CandidateSummary> out;
  for (int c : candidates) {
    const auto joint = model.posterior().predict(window_cells(c, window, steps));
    const double mean = joint.mean.mean();
    const double var = joint.cov.sum() / (static_cast<double>(window) * window);
    out.push_back({c, st.destandardize(mean),
                   std::max(var * st.output_scale * st.output_scale, kMinVariance)});
  }
  return out;
}

}  // namespace halvinglab::gp
