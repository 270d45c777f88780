#include <algorithm>
#include <set>

#include "halvinglab/errors.hpp"
#include "halvinglab/gp_core.hpp"

namespace halvinglab::gp {

GpHyperparams GpHyperparams::initial(int hyper_dims) {
  GpHyperparams hp;
  hp.log_lengthscales = Eigen::VectorXd::Zero(hyper_dims + 1);
  return hp;
}

Eigen::VectorXd GpHyperparams::pack() const {
  Eigen::VectorXd theta(size());
  theta.head(log_lengthscales.size()) = log_lengthscales;
  theta(size() - 2) = log_amplitude;
  theta(size() - 1) = log_noise;
  return theta;
}

GpHyperparams GpHyperparams::unpack(const Eigen::VectorXd& theta) {
  if (theta.size() < 3) throw ConfigError("hyperparameter vector needs at least 3 entries");
  GpHyperparams hp;
  hp.log_lengthscales = theta.head(theta.size() - 2);
  hp.log_amplitude = theta(theta.size() - 2);
  hp.log_noise = theta(theta.size() - 1);
  return hp;
}

double kernel_eval(const GpHyperparams& hp, const InputPoint& a, const InputPoint& b) {
  const int dims = hp.hyper_dims();
  double r2 = 0.0;
  for (int d = 0; d < dims; ++d) {
    const double z = (a.x(d) - b.x(d)) / std::exp(hp.log_lengthscales(d));
    r2 += z * z;
  }
  const double zt = (a.t - b.t) / std::exp(hp.log_lengthscales(dims));
  return hp.amplitude2() * std::exp(-0.5 * r2) * std::exp(-0.5 * zt * zt);
}

Eigen::MatrixXd hyper_gram(const GpHyperparams& hp, const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::ArrayXd inv_ell = (-hp.log_lengthscales.head(hp.hyper_dims())).array().exp();
  Eigen::MatrixXd scaled = x * inv_ell.matrix().asDiagonal();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = std::exp(-0.5 * (scaled.row(i) - scaled.row(j)).squaredNorm());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::MatrixXd time_gram(const GpHyperparams& hp, const Eigen::VectorXd& t) {
  const Eigen::Index n = t.size();
  const double inv_ell = std::exp(-hp.log_lengthscales(hp.hyper_dims()));
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double z = (t(i) - t(j)) * inv_ell;
      k(i, j) = std::exp(-0.5 * z * z);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

void ObservationSet::validate() const {
  if (points.empty()) throw ConfigError("observation set is empty");
  if (static_cast<std::size_t>(targets.size()) != points.size()) {
    throw ConfigError("observation targets and points differ in length");
  }
  if (x_matrix.cols() < 1) throw ConfigError("observation inputs need at least one dimension");
  std::set<Cell> seen;
  for (const Cell& c : points) {
    if (c.candidate < 0 || c.candidate >= candidates() || c.time < 0 || c.time >= steps()) {
      throw ConfigError("observation cell out of range");
    }
    if (!seen.insert(c).second) throw ConfigError("duplicate observation cell");
  }
  if (!targets.allFinite() || !x_matrix.allFinite() || !t_grid.allFinite()) {
    throw ConfigError("observation data must be finite");
  }
}

TrainingData make_training_data(const CurveSet& pool, std::span<const CurvePrefix> prefixes) {
  if (pool.empty()) throw ConfigError("training data needs a non-empty pool");
  if (prefixes.empty()) throw ConfigError("training data needs at least one observation");
  const int dims = pool.dims();
  const int steps = pool.steps();
  const auto n_pool = static_cast<Eigen::Index>(pool.size());

  TrainingData out;
  auto& st = out.standardization;
  st.input_mins.resize(dims + 1);
  st.input_maxes.resize(dims + 1);
  Eigen::MatrixXd raw(n_pool, dims);
  for (Eigen::Index i = 0; i < n_pool; ++i) {
    for (int d = 0; d < dims; ++d) raw(i, d) = pool[static_cast<std::size_t>(i)].hyperparams[d];
  }
  auto& obs = out.observations;
  obs.x_matrix.resize(n_pool, dims);
  for (int d = 0; d < dims; ++d) {
    const double lo = raw.col(d).minCoeff();
    const double hi = raw.col(d).maxCoeff();
    st.input_mins(d) = lo;
    st.input_maxes(d) = hi;
    if (hi > lo) {
      obs.x_matrix.col(d) = (raw.col(d).array() - lo) / (hi - lo);
    } else {
      obs.x_matrix.col(d).setConstant(0.5);
    }
  }
  st.input_mins(dims) = 1.0;
  st.input_maxes(dims) = steps;
  obs.t_grid.resize(steps);
  for (int t = 0; t < steps; ++t) {
    obs.t_grid(t) = steps > 1 ? static_cast<double>(t) / (steps - 1) : 0.5;
  }

  std::vector<double> raw_targets;
  double final_sum = 0.0;
  int final_count = 0;
  for (const CurvePrefix& p : prefixes) {
    if (p.index >= pool.size()) throw ConfigError("training prefix index out of range");
    if (p.observed_until < 1 || p.observed_until > steps) {
      throw ConfigError("training prefix must cover 1..T steps");
    }
    const auto& values = pool[p.index].values;
    for (int t = 0; t < p.observed_until; ++t) {
      obs.points.push_back({static_cast<int>(p.index), t});
      raw_targets.push_back(values[t]);
    }
    if (p.observed_until == steps) {
      final_sum += values[steps - 1];
      ++final_count;
    }
  }
  // Owned copy: reductions over a Map of vector storage peel by the runtime
  // address, which makes the last bits depend on heap layout.
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(raw_targets.data(),
                                                              static_cast<Eigen::Index>(raw_targets.size()));
  st.output_shift = final_count > 0 ? final_sum / final_count : y.mean();
  const double sd = std::sqrt((y.array() - y.mean()).square().mean());
  st.output_scale = (sd > 0.0 && std::isfinite(sd)) ? sd : 1.0;
  obs.targets = (y.array() - st.output_shift) / st.output_scale;
  obs.validate();
  return out;
}

}  // namespace halvinglab::gp
