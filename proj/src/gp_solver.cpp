#include <array>
#include <numbers>
#include <sstream>

#include "halvinglab/errors.hpp"
#include "halvinglab/gp_core.hpp"

namespace halvinglab::gp {

namespace {

constexpr std::array<double, 4> kJitterLadder{0.0, 1e-8, 1e-6, 1e-4};
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

[[noreturn]] void throw_ladder_exhausted(const char* solver, std::size_t n) {
  std::ostringstream msg;
  msg << solver << " factorization failed for n=" << n << " after jitter ladder";
  for (double j : kJitterLadder) msg << ' ' << j;
  msg << " (x amp^2)";
  throw NumericalError(msg.str(), std::vector<double>(kJitterLadder.begin(), kJitterLadder.end()));
}

// ---------------------------------------------------------------------------
// Dense reference path: explicit covariance, Cholesky, explicit inverse.

class DensePosterior final : public Posterior {
 public:
  DensePosterior(const GpHyperparams& hp, const ObservationSet& obs)
      : hp_(hp), obs_(obs), kx_(hyper_gram(hp, obs.x_matrix)), kt_(time_gram(hp, obs.t_grid)) {
    const auto n = static_cast<Eigen::Index>(obs_.size());
    const double s2 = hp_.amplitude2();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index q = 0; q < n; ++q) {
      for (Eigen::Index p = 0; p < n; ++p) k(p, q) = cov(obs_.points[p], obs_.points[q]);
    }
    for (double jitter : kJitterLadder) {
      Eigen::MatrixXd ky = k;
      ky.diagonal().array() += hp_.noise_variance() + jitter * s2;
      llt_.compute(ky);
      if (llt_.info() == Eigen::Success) {
        jitter_ = jitter;
        alpha_ = llt_.solve(obs_.targets);
        const double logdet = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
        lml_ = -0.5 * obs_.targets.dot(alpha_) - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;
        return;
      }
    }
    throw_ladder_exhausted("dense", obs_.size());
  }

  double log_marginal_likelihood() const override { return lml_; }
  double jitter() const override { return jitter_; }

  Eigen::VectorXd lml_gradient() const override {
    const auto n = static_cast<Eigen::Index>(obs_.size());
    const int dims = hp_.hyper_dims();
    const Eigen::ArrayXd inv_ell = (-hp_.log_lengthscales).array().exp();
    Eigen::MatrixXd w = alpha_ * alpha_.transpose();
    w -= llt_.solve(Eigen::MatrixXd::Identity(n, n));

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(hp_.size());
    for (Eigen::Index q = 0; q < n; ++q) {
      const Cell& cq = obs_.points[q];
      for (Eigen::Index p = 0; p < n; ++p) {
        const Cell& cp = obs_.points[p];
        const double wk = w(p, q) * cov(cp, cq);
        for (int d = 0; d < dims; ++d) {
          const double z = (obs_.x_matrix(cp.candidate, d) - obs_.x_matrix(cq.candidate, d)) * inv_ell(d);
          grad(d) += 0.5 * wk * z * z;
        }
        const double zt = (obs_.t_grid(cp.time) - obs_.t_grid(cq.time)) * inv_ell(dims);
        grad(dims) += 0.5 * wk * zt * zt;
        grad(dims + 1) += wk;
      }
    }
    const double trace_w = w.trace();
    grad(dims + 1) += jitter_ * hp_.amplitude2() * trace_w;
    grad(dims + 2) = hp_.noise_variance() * trace_w;
    return grad;
  }

  JointPrediction predict(std::span<const Cell> cells) const override {
    const auto n = static_cast<Eigen::Index>(obs_.size());
    const auto nq = static_cast<Eigen::Index>(cells.size());
    Eigen::MatrixXd kq(n, nq);
    Eigen::MatrixXd kqq(nq, nq);
    for (Eigen::Index j = 0; j < nq; ++j) {
      for (Eigen::Index p = 0; p < n; ++p) kq(p, j) = cov(obs_.points[p], cells[j]);
      for (Eigen::Index i = 0; i < nq; ++i) kqq(i, j) = cov(cells[i], cells[j]);
    }
    JointPrediction out;
    out.mean = kq.transpose() * alpha_;
    const Eigen::MatrixXd v = llt_.matrixL().solve(kq);
    out.cov = kqq - v.transpose() * v;
    return out;
  }

 private:
  double cov(const Cell& a, const Cell& b) const {
    return hp_.amplitude2() * kx_(a.candidate, b.candidate) * kt_(a.time, b.time);
  }

  GpHyperparams hp_;
  ObservationSet obs_;
  Eigen::MatrixXd kx_;
  Eigen::MatrixXd kt_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
  double jitter_ = 0.0;
};

// ---------------------------------------------------------------------------
// Structured path. Candidates observed at every step form a full grid block
//   A = amp^2 (Kx_gg kron Kt) + nv I = (Qc kron Qt) diag(lam) (Qc kron Qt)^T,
// the remaining m cells are handled through the Schur complement
//   S = D - B^T A^{-1} B.
// Grid vectors are stored column-major as c x T matrices (index k + c * tau).
// Quantities with a "hat" live in the eigenbasis of A.

class KroneckerPosterior final : public Posterior {
 public:
  KroneckerPosterior(const GpHyperparams& hp, const ObservationSet& obs)
      : hp_(hp), obs_(obs), kx_(hyper_gram(hp, obs.x_matrix)), kt_(time_gram(hp, obs.t_grid)) {
    steps_ = obs_.steps();
    partition();
    decompose();
    for (double jitter : kJitterLadder) {
      if (try_factorize(jitter)) {
        jitter_ = jitter;
        return;
      }
    }
    throw_ladder_exhausted("kronecker", obs_.size());
  }

  double log_marginal_likelihood() const override { return lml_; }
  double jitter() const override { return jitter_; }

  Eigen::VectorXd lml_gradient() const override {
    const Eigen::Index nx = obs_.candidates();
    const Eigen::Index c = grid_size();
    const Eigen::Index m = rest_size();
    const Eigen::Index t_count = steps_;

    // Contractions of W = alpha alpha^T - K^{-1} against the kernel factors:
    //   cand(i, j) = sum_{t, t'} W[(i,t),(j,t')] Kt[t,t']
    //   time(t, t') = sum_{i, j} W[(i,t),(j,t')] Kx[i,j]
    Eigen::MatrixXd cand = Eigen::MatrixXd::Zero(nx, nx);
    Eigen::MatrixXd time = Eigen::MatrixXd::Zero(t_count, t_count);
    double trace_w = 0.0;

    {
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nx, t_count);
      for (Eigen::Index k = 0; k < c; ++k) {
        for (Eigen::Index tau = 0; tau < t_count; ++tau) a(grid_[k], tau) = alpha_g_(k + c * tau);
      }
      for (Eigen::Index r = 0; r < m; ++r) a(rest_[r].candidate, rest_[r].time) = alpha_r_(r);
      cand.noalias() += a * kt_ * a.transpose();
      time.noalias() += a.transpose() * kx_ * a;
      trace_w += alpha_g_.squaredNorm() + alpha_r_.squaredNorm();
    }

    Eigen::MatrixXd sinv;
    if (m > 0) sinv = schur_.solve(Eigen::MatrixXd::Identity(m, m));

    if (c > 0) {
      const Eigen::Map<const Eigen::MatrixXd> lam(lam_.data(), c, t_count);
      const Eigen::ArrayXXd inv = lam.array().inverse();
      const Eigen::VectorXd w_c = (inv.rowwise() * et_.transpose().array()).rowwise().sum();
      const Eigen::VectorXd w_t = (inv.colwise() * ec_.array()).colwise().sum().transpose();
      Eigen::MatrixXd cand_gg = -(qc_ * w_c.asDiagonal() * qc_.transpose());
      Eigen::MatrixXd time_gg = -(qt_ * w_t.asDiagonal() * qt_.transpose());
      trace_w -= inv.sum();

      if (m > 0) {
        // H = Ghat Ls^{-T} so that G S^{-1} G^T = Q H H^T Q^T.
        const Eigen::MatrixXd h =
            schur_.matrixL().solve(g_hat_.transpose()).transpose();
        trace_w -= h.squaredNorm();

        const Eigen::Map<const Eigen::MatrixXd> h_wide(h.data(), c, t_count * m);
        Eigen::VectorXd sqrt_et = et_.cwiseSqrt();
        Eigen::MatrixXd hs = h_wide * sqrt_et.replicate(m, 1).asDiagonal();
        Eigen::MatrixXd inner_c = Eigen::MatrixXd::Zero(c, c);
        inner_c.selfadjointView<Eigen::Lower>().rankUpdate(hs);
        cand_gg.noalias() -= qc_ * inner_c.selfadjointView<Eigen::Lower>() * qc_.transpose();

        Eigen::MatrixXd tall(c * m, t_count);
        const Eigen::VectorXd sqrt_ec = ec_.cwiseSqrt();
        for (Eigen::Index u = 0; u < m; ++u) {
          const Eigen::Map<const Eigen::MatrixXd> hu(h.col(u).data(), c, t_count);
          tall.middleRows(u * c, c) = sqrt_ec.asDiagonal() * hu;
        }
        Eigen::MatrixXd inner_t = Eigen::MatrixXd::Zero(t_count, t_count);
        inner_t.selfadjointView<Eigen::Lower>().rankUpdate(tall.transpose());
        time_gg.noalias() -= qt_ * inner_t.selfadjointView<Eigen::Lower>() * qt_.transpose();

        // Cross block of -K^{-1}: + G S^{-1} = Q Ehat, Ehat = H Ls^{-1}.
        const Eigen::MatrixXd e_hat =
            schur_.matrixU().solve(h.transpose()).transpose();
        Eigen::MatrixXd z(c, m);
        Eigen::MatrixXd y(t_count, m);
        for (Eigen::Index r = 0; r < m; ++r) {
          const Eigen::Map<const Eigen::MatrixXd> er(e_hat.col(r).data(), c, t_count);
          z.col(r) = er * pt_.col(r);
          y.col(r) = er.transpose() * px_.col(r);
        }
        const Eigen::MatrixXd z_orig = qc_ * z;
        const Eigen::MatrixXd y_orig = qt_ * y;
        for (Eigen::Index r = 0; r < m; ++r) {
          const int cr = rest_[r].candidate;
          const int tr = rest_[r].time;
          for (Eigen::Index k = 0; k < c; ++k) {
            cand(grid_[k], cr) += z_orig(k, r);
            cand(cr, grid_[k]) += z_orig(k, r);
          }
          for (Eigen::Index t = 0; t < t_count; ++t) {
            time(t, tr) += y_orig(t, r);
            time(tr, t) += y_orig(t, r);
          }
        }
      }
      for (Eigen::Index j = 0; j < c; ++j) {
        for (Eigen::Index i = 0; i < c; ++i) cand(grid_[i], grid_[j]) += cand_gg(i, j);
      }
      time += time_gg;
    }

    if (m > 0) {
      for (Eigen::Index s = 0; s < m; ++s) {
        for (Eigen::Index r = 0; r < m; ++r) {
          const Cell& a = rest_[r];
          const Cell& b = rest_[s];
          cand(a.candidate, b.candidate) -= sinv(r, s) * kt_(a.time, b.time);
          time(a.time, b.time) -= sinv(r, s) * kx_(a.candidate, b.candidate);
        }
      }
      trace_w -= sinv.trace();
    }

    return assemble(cand, time, trace_w);
  }

  JointPrediction predict(std::span<const Cell> cells) const override {
    const Eigen::Index c = grid_size();
    const Eigen::Index m = rest_size();
    const auto nq = static_cast<Eigen::Index>(cells.size());
    const double s2 = hp_.amplitude2();

    Eigen::MatrixXd f_q(c * steps_, nq);
    Eigen::MatrixXd k_rq(m, nq);
    Eigen::MatrixXd k_qq(nq, nq);
    for (Eigen::Index j = 0; j < nq; ++j) {
      const Cell& q = cells[j];
      if (c > 0) {
        Eigen::VectorXd kx_gq(c);
        for (Eigen::Index k = 0; k < c; ++k) kx_gq(k) = kx_(grid_[k], q.candidate);
        Eigen::Map<Eigen::MatrixXd>(f_q.col(j).data(), c, steps_) =
            s2 * (qc_.transpose() * kx_gq) * (qt_.transpose() * kt_.col(q.time)).transpose();
      }
      for (Eigen::Index r = 0; r < m; ++r) k_rq(r, j) = cov(rest_[r], q);
      for (Eigen::Index i = 0; i < nq; ++i) k_qq(i, j) = cov(cells[i], q);
    }

    JointPrediction out;
    out.mean = f_q.transpose() * alpha_g_hat_ + k_rq.transpose() * alpha_r_;
    out.cov = k_qq;
    if (c > 0) out.cov.noalias() -= f_q.transpose() * (lam_.cwiseInverse().asDiagonal() * f_q);
    if (m > 0) {
      Eigen::MatrixXd v = g_hat_.transpose() * f_q - k_rq;
      schur_.matrixL().solveInPlace(v);
      out.cov.noalias() -= v.transpose() * v;
    }
    return out;
  }

 private:
  Eigen::Index grid_size() const { return static_cast<Eigen::Index>(grid_.size()); }
  Eigen::Index rest_size() const { return static_cast<Eigen::Index>(rest_.size()); }

  double cov(const Cell& a, const Cell& b) const {
    return hp_.amplitude2() * kx_(a.candidate, b.candidate) * kt_(a.time, b.time);
  }

  void partition() {
    std::vector<int> counts(static_cast<std::size_t>(obs_.candidates()), 0);
    for (const Cell& p : obs_.points) ++counts[p.candidate];
    std::vector<int> slot(counts.size(), -1);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] == steps_) {
        slot[i] = static_cast<int>(grid_.size());
        grid_.push_back(static_cast<int>(i));
      }
    }
    const Eigen::Index c = grid_size();
    y_g_ = Eigen::VectorXd::Zero(c * steps_);
    std::vector<double> y_rest;
    for (std::size_t p = 0; p < obs_.points.size(); ++p) {
      const Cell& cell = obs_.points[p];
      if (slot[cell.candidate] >= 0) {
        y_g_(slot[cell.candidate] + c * cell.time) = obs_.targets(static_cast<Eigen::Index>(p));
      } else {
        rest_.push_back(cell);
        y_rest.push_back(obs_.targets(static_cast<Eigen::Index>(p)));
      }
    }
    y_r_ = Eigen::Map<Eigen::VectorXd>(y_rest.data(), static_cast<Eigen::Index>(y_rest.size()));
  }

  void decompose() {
    const Eigen::Index c = grid_size();
    const Eigen::Index m = rest_size();
    const double s2 = hp_.amplitude2();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_t(kt_);
    qt_ = eig_t.eigenvectors();
    et_ = eig_t.eigenvalues().cwiseMax(0.0);
    if (c > 0) {
      Eigen::MatrixXd kx_gg(c, c);
      for (Eigen::Index j = 0; j < c; ++j) {
        for (Eigen::Index i = 0; i < c; ++i) kx_gg(i, j) = kx_(grid_[i], grid_[j]);
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_c(kx_gg);
      qc_ = eig_c.eigenvectors();
      ec_ = eig_c.eigenvalues().cwiseMax(0.0);
    } else {
      qc_.resize(0, 0);
      ec_.resize(0);
    }

    px_.resize(c, m);
    pt_.resize(steps_, m);
    f_hat_.resize(c * steps_, m);
    d_.resize(m, m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const Cell& cell = rest_[r];
      if (c > 0) {
        Eigen::VectorXd kx_gr(c);
        for (Eigen::Index k = 0; k < c; ++k) kx_gr(k) = kx_(grid_[k], cell.candidate);
        px_.col(r) = qc_.transpose() * kx_gr;
      }
      pt_.col(r) = qt_.transpose() * kt_.col(cell.time);
      if (c > 0) {
        Eigen::Map<Eigen::MatrixXd>(f_hat_.col(r).data(), c, steps_) =
            s2 * px_.col(r) * pt_.col(r).transpose();
      }
      for (Eigen::Index q = 0; q < m; ++q) d_(q, r) = cov(rest_[q], cell);
    }
    if (c > 0) {
      const Eigen::Map<const Eigen::MatrixXd> yg(y_g_.data(), c, steps_);
      y_g_hat_.resize(c * steps_);
      Eigen::Map<Eigen::MatrixXd>(y_g_hat_.data(), c, steps_) = qc_.transpose() * yg * qt_;
    }
  }

  bool try_factorize(double jitter) {
    const Eigen::Index c = grid_size();
    const Eigen::Index m = rest_size();
    const double s2 = hp_.amplitude2();
    const double nv = hp_.noise_variance() + jitter * s2;

    lam_.resize(c * steps_);
    if (c > 0) {
      Eigen::Map<Eigen::MatrixXd>(lam_.data(), c, steps_) = s2 * ec_ * et_.transpose();
      lam_.array() += nv;
      if ((lam_.array() <= 0.0).any()) return false;
    }
    g_hat_ = lam_.cwiseInverse().asDiagonal() * f_hat_;

    double logdet = lam_.array().log().sum();
    Eigen::VectorXd rhs_r = y_r_;
    if (m > 0) {
      Eigen::MatrixXd s = d_;
      s.diagonal().array() += nv;
      if (c > 0) s.noalias() -= f_hat_.transpose() * g_hat_;
      schur_.compute(s);
      if (schur_.info() != Eigen::Success) return false;
      logdet += 2.0 * schur_.matrixLLT().diagonal().array().log().sum();
      if (c > 0) rhs_r.noalias() -= g_hat_.transpose() * y_g_hat_;
      alpha_r_ = schur_.solve(rhs_r);
    } else {
      alpha_r_.resize(0);
    }
    if (c > 0) {
      alpha_g_hat_ = (y_g_hat_ - f_hat_ * alpha_r_).cwiseQuotient(lam_);
      alpha_g_.resize(c * steps_);
      const Eigen::Map<const Eigen::MatrixXd> ah(alpha_g_hat_.data(), c, steps_);
      Eigen::Map<Eigen::MatrixXd>(alpha_g_.data(), c, steps_) = qc_ * ah * qt_.transpose();
    } else {
      alpha_g_hat_.resize(0);
      alpha_g_.resize(0);
    }
    const double fit = y_g_.dot(alpha_g_) + y_r_.dot(alpha_r_);
    const auto n = static_cast<double>(obs_.size());
    lml_ = -0.5 * fit - 0.5 * logdet - 0.5 * n * kLog2Pi;
    return true;
  }

  Eigen::VectorXd assemble(const Eigen::MatrixXd& cand, const Eigen::MatrixXd& time,
                           double trace_w) const {
    const int dims = hp_.hyper_dims();
    const double s2 = hp_.amplitude2();
    const Eigen::Index nx = obs_.candidates();
    const Eigen::ArrayXd inv_ell = (-hp_.log_lengthscales).array().exp();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(hp_.size());

    const Eigen::MatrixXd weighted = kx_.cwiseProduct(cand);
    for (int d = 0; d < dims; ++d) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < nx; ++j) {
        for (Eigen::Index i = 0; i < nx; ++i) {
          const double z = (obs_.x_matrix(i, d) - obs_.x_matrix(j, d)) * inv_ell(d);
          acc += weighted(i, j) * z * z;
        }
      }
      grad(d) = 0.5 * s2 * acc;
    }
    double acc_t = 0.0;
    for (Eigen::Index j = 0; j < steps_; ++j) {
      for (Eigen::Index i = 0; i < steps_; ++i) {
        const double z = (obs_.t_grid(i) - obs_.t_grid(j)) * inv_ell(dims);
        acc_t += kt_(i, j) * time(i, j) * z * z;
      }
    }
    grad(dims) = 0.5 * s2 * acc_t;
    grad(dims + 1) = s2 * weighted.sum() + jitter_ * s2 * trace_w;
    grad(dims + 2) = hp_.noise_variance() * trace_w;
    return grad;
  }

  GpHyperparams hp_;
  ObservationSet obs_;
  Eigen::MatrixXd kx_;
  Eigen::MatrixXd kt_;
  int steps_ = 0;

  std::vector<int> grid_;   // candidates observed at every step
  std::vector<Cell> rest_;  // all other observed cells
  Eigen::VectorXd y_g_;
  Eigen::VectorXd y_g_hat_;
  Eigen::VectorXd y_r_;

  Eigen::MatrixXd qc_, qt_;
  Eigen::VectorXd ec_, et_;
  Eigen::MatrixXd px_;     // Qc^T Kx(grid, rest candidates), c x m
  Eigen::MatrixXd pt_;     // Qt^T Kt(:, rest times), T x m
  Eigen::MatrixXd f_hat_;  // Q^T B, (c T) x m
  Eigen::MatrixXd d_;      // noise-free covariance among rest cells

  Eigen::VectorXd lam_;
  Eigen::MatrixXd g_hat_;  // diag(1/lam) f_hat
  Eigen::LLT<Eigen::MatrixXd> schur_;
  Eigen::VectorXd alpha_g_hat_, alpha_g_, alpha_r_;
  double lml_ = 0.0;
  double jitter_ = 0.0;
};

}  // namespace

std::span<const double> jitter_ladder() { return kJitterLadder; }

std::unique_ptr<Posterior> factorize(const GpHyperparams& hp, const ObservationSet& obs,
                                     SolverKind kind) {
  obs.validate();
  if (hp.hyper_dims() != obs.x_matrix.cols()) {
    throw ConfigError("hyperparameter dimension does not match observation inputs");
  }
  if (!hp.pack().allFinite()) throw NumericalError("non-finite hyperparameters");
  if (kind == SolverKind::dense) return std::make_unique<DensePosterior>(hp, obs);
  return std::make_unique<KroneckerPosterior>(hp, obs);
}

}  // namespace halvinglab::gp
