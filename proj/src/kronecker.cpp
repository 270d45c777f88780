#include <map>

#include "halvinglab/errors.hpp"
#include "halvinglab/gp_core.hpp"

namespace halvinglab::gp {

namespace {

struct GridFactors {
  Eigen::MatrixXd kx;
  Eigen::MatrixXd kt;
};

GridFactors grid_factors(const GpHyperparams& hp, const Eigen::MatrixXd& x_matrix,
                         const Eigen::VectorXd& t_grid, const GridMask& mask) {
  if (mask.rows() != x_matrix.rows() || mask.cols() != t_grid.size()) {
    throw ConfigError("kronecker: mask is " + std::to_string(mask.rows()) + "x" +
                      std::to_string(mask.cols()) + ", inputs are " + std::to_string(x_matrix.rows()) +
                      "x" + std::to_string(t_grid.size()));
  }
  if (hp.hyper_dims() != x_matrix.cols()) {
    throw ConfigError("kronecker: hyperparameter dimension does not match inputs");
  }
  return {hyper_gram(hp, x_matrix), time_gram(hp, t_grid)};
}

Eigen::VectorXd masked_product(const GridFactors& f, double amp2, const GridMask& mask,
                               const Eigen::VectorXd& v) {
  Eigen::MatrixXd grid = Eigen::MatrixXd::Zero(mask.rows(), mask.cols());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index t = 0; t < mask.cols(); ++t) {
      if (mask(i, t)) grid(i, t) = v(k++);
    }
  }
  const Eigen::MatrixXd product = amp2 * (f.kx * grid * f.kt);
  Eigen::VectorXd out(v.size());
  k = 0;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index t = 0; t < mask.cols(); ++t) {
      if (mask(i, t)) out(k++) = product(i, t);
    }
  }
  return out;
}

CgResult conjugate_gradient(const GridFactors& f, const GpHyperparams& hp, const GridMask& mask,
                            const Eigen::VectorXd& rhs, const CgConfig& config) {
  const double noise = hp.noise_variance();
  const double amp2 = hp.amplitude2();
  const auto apply = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out = masked_product(f, amp2, mask, v);
    out += noise * v;
    return out;
  };

  CgResult res;
  res.solution = Eigen::VectorXd::Zero(rhs.size());
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    res.converged = true;
    return res;
  }
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  for (int it = 1; it <= config.max_iterations; ++it) {
    const Eigen::VectorXd ap = apply(p);
    const double step = rr / p.dot(ap);
    res.solution += step * p;
    r -= step * ap;
    const double rr_next = r.squaredNorm();
    res.iterations = it;
    res.relative_residual = std::sqrt(rr_next) / rhs_norm;
    if (res.relative_residual <= config.relative_tolerance) {
      res.converged = true;
      break;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return res;
}

}  // namespace

std::vector<Cell> mask_cells(const GridMask& mask) {
  std::vector<Cell> cells;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index t = 0; t < mask.cols(); ++t) {
      if (mask(i, t)) cells.push_back({static_cast<int>(i), static_cast<int>(t)});
    }
  }
  return cells;
}

Eigen::VectorXd kronecker_matvec(const GpHyperparams& hp, const Eigen::MatrixXd& x_matrix,
                                 const Eigen::VectorXd& t_grid, const GridMask& mask,
                                 const Eigen::VectorXd& v) {
  const auto f = grid_factors(hp, x_matrix, t_grid, mask);
  if (v.size() != mask.count()) {
    throw ConfigError("kronecker_matvec: vector has " + std::to_string(v.size()) +
                      " entries, mask selects " + std::to_string(mask.count()));
  }
  return masked_product(f, hp.amplitude2(), mask, v);
}

CgResult solve_cg(const GpHyperparams& hp, const Eigen::MatrixXd& x_matrix,
                  const Eigen::VectorXd& t_grid, const GridMask& mask, const Eigen::VectorXd& rhs,
                  const CgConfig& config) {
  const auto f = grid_factors(hp, x_matrix, t_grid, mask);
  if (rhs.size() != mask.count()) throw ConfigError("solve_cg: right-hand side does not match mask");
  return conjugate_gradient(f, hp, mask, rhs, config);
}

Eigen::VectorXd posterior_mean_cg(const GpModel& model, std::span<const Cell> cells,
                                  const CgConfig& config) {
  const auto& obs = model.observations();
  const auto& hp = model.hyperparams();
  GridMask mask = GridMask::Constant(obs.candidates(), obs.steps(), false);
  std::map<Cell, Eigen::Index> slot;
  for (std::size_t p = 0; p < obs.points.size(); ++p) {
    mask(obs.points[p].candidate, obs.points[p].time) = true;
    slot[obs.points[p]] = static_cast<Eigen::Index>(p);
  }
  const auto ordered = mask_cells(mask);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(ordered.size()));
  for (std::size_t k = 0; k < ordered.size(); ++k) rhs(static_cast<Eigen::Index>(k)) = obs.targets(slot.at(ordered[k]));

  const auto f = grid_factors(hp, obs.x_matrix, obs.t_grid, mask);
  const CgResult res = conjugate_gradient(f, hp, mask, rhs, config);
  if (!res.converged) {
    throw NumericalError("posterior_mean_cg: CG did not converge (relative residual " +
                         std::to_string(res.relative_residual) + ")");
  }
  Eigen::MatrixXd grid = Eigen::MatrixXd::Zero(mask.rows(), mask.cols());
  for (std::size_t k = 0; k < ordered.size(); ++k) {
    grid(ordered[k].candidate, ordered[k].time) = res.solution(static_cast<Eigen::Index>(k));
  }
  const Eigen::MatrixXd projected = hp.amplitude2() * (f.kx * grid * f.kt);
  Eigen::VectorXd mean(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t q = 0; q < cells.size(); ++q) {
    mean(static_cast<Eigen::Index>(q)) = projected(cells[q].candidate, cells[q].time);
  }
  return mean;
}

}  // namespace halvinglab::gp
