#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "halvinglab/curve_model.hpp"
#include "halvinglab/types.hpp"

namespace halvinglab::gp {

/// Log-parameterized hyperparameters of the product squared-exponential
/// kernel amp^2 * k_X(x, x') * k_T(t, t') with homoscedastic noise.
struct GpHyperparams {
  /// D hyperparameter lengthscales followed by the time lengthscale.
  Eigen::VectorXd log_lengthscales;
  double log_amplitude = 0.0;
  /// Log of the noise standard deviation; the noise variance is exp(2 * log_noise).
  double log_noise = std::log(0.1);

  /// Unit lengthscales and amplitude, noise std 0.1.
  static GpHyperparams initial(int hyper_dims);

  int hyper_dims() const { return static_cast<int>(log_lengthscales.size()) - 1; }
  /// D + 3 unconstrained parameters.
  int size() const { return static_cast<int>(log_lengthscales.size()) + 2; }
  double amplitude2() const { return std::exp(2.0 * log_amplitude); }
  double noise_variance() const { return std::exp(2.0 * log_noise); }

  /// [log_lengthscales..., log_amplitude, log_noise]
  Eigen::VectorXd pack() const;
  static GpHyperparams unpack(const Eigen::VectorXd& theta);

  bool operator==(const GpHyperparams& other) const {
    return log_lengthscales == other.log_lengthscales && log_amplitude == other.log_amplitude &&
           log_noise == other.log_noise;
  }
};

/// A point in (hyperparameters x time) input space.
struct InputPoint {
  Eigen::VectorXd x;
  double t = 0.0;
};

double kernel_eval(const GpHyperparams& hp, const InputPoint& a, const InputPoint& b);

/// Unit-amplitude Gram matrices of the two kernel factors.
Eigen::MatrixXd hyper_gram(const GpHyperparams& hp, const Eigen::MatrixXd& x);
Eigen::MatrixXd time_gram(const GpHyperparams& hp, const Eigen::VectorXd& t);

/// Row `candidate` of the input matrix at column `time` of the time grid.
struct Cell {
  int candidate = 0;
  int time = 0;

  auto operator<=>(const Cell&) const = default;
};

/// Observed (candidate, time) cells with standardized targets. The input
/// matrix holds every candidate the model may be queried on.
struct ObservationSet {
  std::vector<Cell> points;
  Eigen::VectorXd targets;
  Eigen::MatrixXd x_matrix;  // candidates x D, normalized to [0, 1]
  Eigen::VectorXd t_grid;    // T normalized times in [0, 1]

  std::size_t size() const { return points.size(); }
  int candidates() const { return static_cast<int>(x_matrix.rows()); }
  int steps() const { return static_cast<int>(t_grid.size()); }
  /// Throws ConfigError on empty, mismatched, duplicated or out-of-range data.
  void validate() const;
};

struct StandardizationParams {
  Eigen::VectorXd input_mins;   // D hyperparameter dims, then time
  Eigen::VectorXd input_maxes;
  double output_shift = 0.0;
  double output_scale = 1.0;

  double standardize(double y) const { return (y - output_shift) / output_scale; }
  double destandardize(double z) const { return z * output_scale + output_shift; }
};

/// Candidate `index` (position in the pool) revealed for t = 1..observed_until.
struct CurvePrefix {
  std::size_t index = 0;
  int observed_until = 0;
};

struct TrainingData {
  ObservationSet observations;
  StandardizationParams standardization;
};

/// Normalizes hyperparameters by per-dimension min/max over the whole pool
/// (constant dimensions map to 0.5), time by t = 1 -> 0 and t = T -> 1, and
/// standardizes targets by the mean over observations at t = T and the
/// standard deviation over all observations.
TrainingData make_training_data(const CurveSet& pool, std::span<const CurvePrefix> prefixes);

// ---------------------------------------------------------------------------
// Exact inference

enum class SolverKind {
  /// Dense Cholesky of the full covariance.
  dense,
  /// Eigendecomposition of the Kronecker block of complete curves plus a
  /// Cholesky of the Schur complement over the remaining cells.
  kronecker,
};

struct JointPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Factorized covariance for one (hyperparameters, observations) pair.
class Posterior {
 public:
  virtual ~Posterior() = default;

  virtual double log_marginal_likelihood() const = 0;
  /// d LML / d [log_lengthscales, log_amplitude, log_noise].
  virtual Eigen::VectorXd lml_gradient() const = 0;
  /// Joint posterior of the latent function at the given cells.
  virtual JointPrediction predict(std::span<const Cell> cells) const = 0;
  /// Diagonal jitter (relative to amp^2) needed for a successful factorization.
  virtual double jitter() const = 0;
};

/// Factorizes with the jitter ladder 0 -> 1e-8 -> 1e-6 -> 1e-4 (times amp^2)
/// and throws NumericalError carrying the ladder when all rungs fail.
std::unique_ptr<Posterior> factorize(const GpHyperparams& hp, const ObservationSet& obs,
                                     SolverKind kind = SolverKind::kronecker);

/// Jitter values tried in order, relative to amp^2.
std::span<const double> jitter_ladder();

// ---------------------------------------------------------------------------
// Model and fitting

struct FitConfig {
  double learning_rate = 0.1;
  int iterations = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  SolverKind solver = SolverKind::kronecker;
};

class GpModel {
 public:
  GpModel(GpHyperparams hp, ObservationSet obs, StandardizationParams standardization,
          SolverKind solver = SolverKind::kronecker);

  const GpHyperparams& hyperparams() const { return hp_; }
  const ObservationSet& observations() const { return obs_; }
  const StandardizationParams& standardization() const { return standardization_; }
  const Posterior& posterior() const { return *posterior_; }

  /// LML of every evaluated iterate when the model came out of fit().
  const std::vector<double>& lml_trajectory() const { return trajectory_; }
  void set_trajectory(std::vector<double> lml) { trajectory_ = std::move(lml); }

 private:
  GpHyperparams hp_;
  ObservationSet obs_;
  StandardizationParams standardization_;
  std::shared_ptr<const Posterior> posterior_;
  std::vector<double> trajectory_;
};

double log_marginal_likelihood(const GpModel& model);
Eigen::VectorXd lml_gradient(const GpModel& model);

/// Maximizes the LML with Adam from `init` (default GpHyperparams::initial)
/// and returns the evaluated iterate with the highest LML. Throws
/// NumericalError if an iterate yields a non-finite LML.
GpModel fit(ObservationSet obs, StandardizationParams standardization, const FitConfig& config = {},
            std::optional<GpHyperparams> init = std::nullopt);

/// Monte-Carlo estimate of the final-window mean of each candidate (rows of
/// the input matrix). Each sample is a joint draw over the last `window`
/// time steps, averaged; mean and unbiased variance are reported on the
/// original output scale, variance clamped below at kMinVariance.
/// candidate_id in the result is the queried row.
std::vector<CandidateSummary> predict_perf(const GpModel& model, std::span<const int> candidates,
                                           int window, int n_samples, std::uint64_t seed);

/// Closed-form posterior of the final-window mean (weights 1/window), on the
/// original output scale.
std::vector<CandidateSummary> exact_window_posterior(const GpModel& model,
                                                     std::span<const int> candidates, int window);

// ---------------------------------------------------------------------------
// Masked Kronecker products

/// Row-major candidate x time observation mask.
using GridMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Cells selected by the mask, ordered by candidate then time.
std::vector<Cell> mask_cells(const GridMask& mask);

/// amp^2 (K_X kron K_T) restricted to the masked cells, applied to v, via
/// scatter -> K_X V K_T -> gather.
Eigen::VectorXd kronecker_matvec(const GpHyperparams& hp, const Eigen::MatrixXd& x_matrix,
                                 const Eigen::VectorXd& t_grid, const GridMask& mask,
                                 const Eigen::VectorXd& v);

struct CgConfig {
  double relative_tolerance = 1e-8;
  int max_iterations = 1000;
};

struct CgResult {
  Eigen::VectorXd solution;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Conjugate gradients on (masked kernel + noise I) x = rhs.
CgResult solve_cg(const GpHyperparams& hp, const Eigen::MatrixXd& x_matrix,
                  const Eigen::VectorXd& t_grid, const GridMask& mask, const Eigen::VectorXd& rhs,
                  const CgConfig& config = {});

/// Posterior mean at `cells` computed with a CG solve instead of a factorization.
Eigen::VectorXd posterior_mean_cg(const GpModel& model, std::span<const Cell> cells,
                                  const CgConfig& config = {});

}  // namespace halvinglab::gp
