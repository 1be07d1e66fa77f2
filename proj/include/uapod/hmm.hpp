#pragma once

// Gaussian posterior of a hidden state under a (possibly degenerate)
// zero-mean Gaussian prior and linear Gaussian observations, applied
// matrix-free; plus a dense Kalman filter / RTS smoother for small
// linear-Gaussian state-space models.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uapod/errors.hpp"
#include "uapod/krylov.hpp"
#include "uapod/operator.hpp"

namespace uapod {

/// Zero-mean Gaussian prior given by a symmetric PSD precision operator,
/// possibly rank-deficient.
struct DegenerateGaussianPrior {
  SymmetricOperator precision;
  /// Orthonormal basis of ker(precision), when known. Used to decide whether
  /// observations pin down the improper directions.
  std::optional<Matrix> null_space;
};

/// y = H x + offset + w, w ~ N(0, noise_var I).
struct LinearObservation {
  LinearMap obs_op;
  Vector offset;
  double noise_var = 1.0;
  Vector data;

  void validate() const {
    if (!(noise_var > 0.0) || !std::isfinite(noise_var)) {
      throw ValidationError("noise_var", "must be finite and strictly positive");
    }
    if (offset.size() != obs_op.rows()) throw DimensionMismatch("offset length differs from m");
    if (data.size() != obs_op.rows()) throw DimensionMismatch("data length differs from m");
  }
};

struct PosteriorOptions {
  double cg_tol = 1e-8;
  /// 0 selects the default budget of 10 sqrt(n) iterations.
  int max_iter = 0;
  /// When false, rank-deficient systems are never regularized.
  bool allow_regularization = true;
};

inline int default_cg_budget(Index n) {
  return static_cast<int>(std::ceil(10.0 * std::sqrt(static_cast<double>(n))));
}

namespace detail {

/// Posterior precision system A = sum_i H_i'H_i + s2 q + eps I, shared by the
/// covariance operator and covariance-column queries.
struct PosteriorSystem {
  SymmetricOperator system;
  double noise_var;
  double cg_tol;
  int max_iter;

  Vector solve(const Vector& rhs) const { return conjugate_gradient(system, rhs, cg_tol, max_iter); }
};

}  // namespace detail

/// Posterior N(mean, cov) of one hidden state. Immutable.
///
/// `cov_op` applies p = s2 (H'H + s2 q + eps I)^-1 through CG when built by
/// posterior_factorized; callers may also assemble a posterior from an
/// explicit mean and covariance operator.
class GaussianPosterior {
 public:
  GaussianPosterior(Vector mean, SymmetricOperator cov_op, double regularization = 0.0)
      : mean_(std::move(mean)), cov_op_(std::move(cov_op)), regularization_(regularization) {
    if (mean_.size() != cov_op_.dim()) throw DimensionMismatch("posterior mean/covariance size");
  }

  /// Posterior with zero covariance: a point mass at `mean`.
  static GaussianPosterior point_mass(Vector mean) {
    const Index n = mean.size();
    return GaussianPosterior(std::move(mean), SymmetricOperator(LinearOperator::zero(n)));
  }

  const Vector& mean() const noexcept { return mean_; }
  const SymmetricOperator& cov_op() const noexcept { return cov_op_; }
  /// Diagonal shift eps actually added to the precision system (0 if none).
  double regularization() const noexcept { return regularization_; }
  Index dim() const noexcept { return mean_.size(); }

  /// Underlying precision system when the posterior came from
  /// posterior_factorized; null for hand-assembled posteriors.
  const std::shared_ptr<const detail::PosteriorSystem>& system() const noexcept { return system_; }

 private:
  friend GaussianPosterior posterior_factorized(const DegenerateGaussianPrior&,
                                                std::span<const LinearObservation>,
                                                const PosteriorOptions&);
  Vector mean_;
  SymmetricOperator cov_op_;
  double regularization_;
  std::shared_ptr<const detail::PosteriorSystem> system_;
};

/// Closed-form Gaussian posterior for one time step.
///
/// With replicas i = 1..M sharing a noise variance s2 the posterior solves
///   (sum_i H_i'H_i + s2 q + eps I) mean = sum_i H_i'(y_i - xi_i)
/// and p = s2 (sum_i H_i'H_i + s2 q + eps I)^-1.
///
/// eps is zero unless the prior's declared null space is (numerically) not
/// observed, or, with no declared null space, CG fails on the unshifted
/// system. Then eps = 1e-8 trace(sum H'H + s2 q)/n. Throws SingularSystem if
/// the solve still fails.
inline GaussianPosterior posterior_factorized(const DegenerateGaussianPrior& prior,
                                              std::span<const LinearObservation> replicas,
                                              const PosteriorOptions& options = {}) {
  if (replicas.empty()) throw DimensionMismatch("posterior needs at least one observation");
  const Index n = prior.precision.dim();
  const double s2 = replicas.front().noise_var;
  for (const auto& obs : replicas) {
    obs.validate();
    if (obs.obs_op.cols() != n) throw DimensionMismatch("observation operator width differs from n");
    if (obs.noise_var != s2) {
      throw ValidationError("noise_var", "replicas of one time step must share the noise variance");
    }
  }
  const int max_iter = options.max_iter > 0 ? options.max_iter : default_cg_budget(n);

  // Copies keep the system operator self-contained after the caller's
  // observations go out of scope.
  auto maps = std::make_shared<std::vector<LinearMap>>();
  for (const auto& obs : replicas) maps->push_back(obs.obs_op);
  const SymmetricOperator precision = prior.precision;

  Vector rhs = Vector::Zero(n);
  for (const auto& obs : replicas) rhs += obs.obs_op.apply_adjoint(obs.data - obs.offset);

  double gram_trace = 0.0;
  for (const auto& h : *maps) gram_trace += h.frobenius_sq();
  const double scale = (gram_trace + s2 * operator_trace(precision)) / static_cast<double>(n);
  const double eps_candidate = 1e-8 * scale;

  auto make_system = [&](double eps) {
    return SymmetricOperator(LinearOperator(n, [maps, precision, s2, eps](const Vector& in,
                                                                          Vector& out) {
      precision.apply(in, out);
      out *= s2;
      for (const auto& h : *maps) out += h.apply_adjoint(h.apply(in));
      if (eps != 0.0) out += eps * in;
    }));
  };

  double eps = 0.0;
  if (options.allow_regularization && prior.null_space && prior.null_space->cols() > 0) {
    const Matrix& basis = *prior.null_space;
    Matrix gram = Matrix::Zero(basis.cols(), basis.cols());
    for (const auto& h : *maps) {
      Matrix hb(h.rows(), basis.cols());
      for (Index j = 0; j < basis.cols(); ++j) hb.col(j) = h.apply(basis.col(j));
      gram += hb.transpose() * hb;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= eps_candidate) eps = eps_candidate;
  }

  auto build = [&](double shift) {
    auto sys = std::make_shared<detail::PosteriorSystem>(
        detail::PosteriorSystem{make_system(shift), s2, options.cg_tol, max_iter});
    Vector mean = sys->solve(rhs);
    SymmetricOperator cov(LinearOperator(n, [sys](const Vector& in, Vector& out) {
      out = sys->noise_var * sys->solve(in);
    }));
    GaussianPosterior post(std::move(mean), std::move(cov), shift);
    post.system_ = std::move(sys);
    return post;
  };

  try {
    return build(eps);
  } catch (const NonConvergence& e) {
    if (eps != 0.0 || !options.allow_regularization) {
      throw SingularSystem(std::string("posterior system could not be solved: ") + e.what());
    }
  }
  try {
    return build(eps_candidate);
  } catch (const NonConvergence& e) {
    throw SingularSystem(std::string("posterior system singular even after regularization: ") +
                         e.what());
  }
}

inline GaussianPosterior posterior_factorized(const DegenerateGaussianPrior& prior,
                                              const LinearObservation& obs,
                                              const PosteriorOptions& options = {}) {
  return posterior_factorized(prior, std::span<const LinearObservation>(&obs, 1), options);
}

/// Column `index` of the posterior covariance, p e_index, via one CG solve.
inline Vector covariance_column(const GaussianPosterior& post, Index index) {
  if (index < 0 || index >= post.dim()) {
    throw DimensionMismatch("covariance_column: index " + std::to_string(index) + " out of range");
  }
  Vector e = Vector::Zero(post.dim());
  e[index] = 1.0;
  return post.cov_op().apply(e);
}

// ---------------------------------------------------------------------------
// Dense linear-Gaussian state-space model (small n, oracle scale).

/// x_1 ~ N(initial_mean, initial_cov)
/// x_t = A_t x_{t-1} + v_t,    v_t ~ N(0, Q_t)          t >= 2
/// y_t = H_t x_t + xi_t + w_t, w_t ~ N(0, R_t)
///
/// Vectors are indexed by t-1; transitions[0] and process_cov[0] are unused.
struct DenseLGSS {
  Vector initial_mean;
  Matrix initial_cov;
  std::vector<Matrix> transitions;
  std::vector<Matrix> process_cov;
  std::vector<Matrix> obs_matrices;
  std::vector<Matrix> obs_noise_cov;
  std::vector<Vector> obs_offsets;

  Index state_dim() const noexcept { return initial_mean.size(); }
  std::size_t horizon() const noexcept { return obs_matrices.size(); }
};

struct DenseGaussian {
  Vector mean;
  Matrix cov;
};

inline constexpr Index kKalmanOracleMaxDim = 64;
inline constexpr std::size_t kKalmanOracleMaxSteps = 200;

namespace detail {

inline void require_psd(const Matrix& m, const char* what, std::size_t t) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw NotPSD(std::string(what) + " lost positive semi-definiteness at t=" +
                 std::to_string(t + 1));
  }
}

}  // namespace detail

/// Forward Kalman filter followed by the Rauch-Tung-Striebel backward pass.
/// Returns the smoothed mean and covariance of every x_t.
inline std::vector<DenseGaussian> kalman_rts_oracle(const DenseLGSS& model,
                                                    std::span<const Vector> observations) {
  const Index n = model.state_dim();
  const std::size_t horizon = model.horizon();
  if (n > kKalmanOracleMaxDim || horizon > kKalmanOracleMaxSteps) {
    throw TooLarge("kalman_rts_oracle is limited to n <= 64, T <= 200");
  }
  if (observations.size() != horizon || model.transitions.size() != horizon ||
      model.process_cov.size() != horizon || model.obs_noise_cov.size() != horizon ||
      model.obs_offsets.size() != horizon) {
    throw DimensionMismatch("kalman_rts_oracle: per-time sequences must all have length T");
  }

  std::vector<DenseGaussian> predicted(horizon);
  std::vector<DenseGaussian> filtered(horizon);
  const Matrix identity = Matrix::Identity(n, n);

  for (std::size_t t = 0; t < horizon; ++t) {
    if (t == 0) {
      predicted[t] = {model.initial_mean, model.initial_cov};
    } else {
      const Matrix& a = model.transitions[t];
      predicted[t].mean = a * filtered[t - 1].mean;
      predicted[t].cov = a * filtered[t - 1].cov * a.transpose() + model.process_cov[t];
      predicted[t].cov = 0.5 * (predicted[t].cov + predicted[t].cov.transpose());
    }
    detail::require_psd(predicted[t].cov, "predicted covariance", t);

    const Matrix& h = model.obs_matrices[t];
    const Matrix& r = model.obs_noise_cov[t];
    const Matrix& p = predicted[t].cov;
    const Matrix s = h * p * h.transpose() + r;
    Eigen::LDLT<Matrix> s_ldlt(s);
    const Matrix gain = s_ldlt.solve(h * p).transpose();
    const Vector innovation = observations[t] - h * predicted[t].mean - model.obs_offsets[t];
    filtered[t].mean = predicted[t].mean + gain * innovation;
    // Joseph form keeps the update symmetric PSD.
    const Matrix ikh = identity - gain * h;
    filtered[t].cov = ikh * p * ikh.transpose() + gain * r * gain.transpose();
    filtered[t].cov = 0.5 * (filtered[t].cov + filtered[t].cov.transpose());
  }

  std::vector<DenseGaussian> smoothed(horizon);
  smoothed[horizon - 1] = filtered[horizon - 1];
  for (std::size_t t = horizon - 1; t-- > 0;) {
    const Matrix& a = model.transitions[t + 1];
    const Matrix& pred_cov = predicted[t + 1].cov;
    Eigen::LDLT<Matrix> ldlt(pred_cov);
    // G = P_t|t A' P_{t+1|t}^-1
    const Matrix gain = ldlt.solve(a * filtered[t].cov).transpose();
    smoothed[t].mean =
        filtered[t].mean + gain * (smoothed[t + 1].mean - predicted[t + 1].mean);
    smoothed[t].cov = filtered[t].cov + gain * (smoothed[t + 1].cov - pred_cov) * gain.transpose();
    smoothed[t].cov = 0.5 * (smoothed[t].cov + smoothed[t].cov.transpose());
  }
  return smoothed;
}

}  // namespace uapod
