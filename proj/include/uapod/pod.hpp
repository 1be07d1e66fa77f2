#pragma once

// Uncertainty-aware POD: the posterior second-moment operator
//   S = sum_t (p_t + mean_t mean_t'),
// its leading eigenvectors as the reduced basis, the snapshot-POD baseline,
// and the projection-cost / reconstruction-error metrics.

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "uapod/errors.hpp"
#include "uapod/hmm.hpp"
#include "uapod/krylov.hpp"
#include "uapod/operator.hpp"
#include "uapod/types.hpp"

namespace uapod {

/// Matrix-free posterior second moment sum_t (p_t + mean_t mean_t').
/// Contributions are accumulated in ascending t, so applies are bitwise
/// reproducible.
class SecondMomentOperator {
 public:
  explicit SecondMomentOperator(std::vector<GaussianPosterior> posteriors)
      : posteriors_(std::make_shared<const std::vector<GaussianPosterior>>(std::move(posteriors))) {
    if (posteriors_->empty()) throw DimensionMismatch("second moment needs T >= 1 posteriors");
    const Index n = posteriors_->front().dim();
    for (const auto& p : *posteriors_) {
      if (p.dim() != n) throw DimensionMismatch("posteriors differ in dimension");
    }
  }

  Index dim() const noexcept { return posteriors_->front().dim(); }
  std::size_t length() const noexcept { return posteriors_->size(); }
  const std::vector<GaussianPosterior>& posteriors() const noexcept { return *posteriors_; }

  void apply(const Vector& in, Vector& out) const { apply_impl(*posteriors_, in, out); }

  Vector apply(const Vector& in) const {
    Vector out;
    apply(in, out);
    return out;
  }

  SymmetricOperator as_operator() const {
    return SymmetricOperator(LinearOperator(
        dim(), [posts = posteriors_](const Vector& in, Vector& out) { apply_impl(*posts, in, out); }));
  }

 private:
  static void apply_impl(const std::vector<GaussianPosterior>& posts, const Vector& in,
                         Vector& out) {
    if (in.size() != posts.front().dim()) throw DimensionMismatch("second moment apply: length");
    out = Vector::Zero(in.size());
    Vector tmp;
    for (const auto& p : posts) {
      p.cov_op().apply(in, tmp);
      out += tmp;
      out.noalias() += p.mean() * p.mean().dot(in);
    }
  }

  std::shared_ptr<const std::vector<GaussianPosterior>> posteriors_;
};

struct TraceEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = true;
};

enum class TraceMode { automatic, exact, hutchinson };

struct TraceOptions {
  TraceMode mode = TraceMode::automatic;
  Index exact_max_dim = 4096;
  int probes = 64;
  std::uint64_t seed = 0;
};

/// trace(S) = sum_t trace(p_t) + |mean_t|^2.
///
/// Covariance traces use the operator's trace hint when it has one. Otherwise
/// they are computed exactly with n applies per posterior when n is at most
/// `exact_max_dim` (automatic mode), or estimated with Rademacher probes
/// (Hutchinson), in which case the standard error is reported.
inline TraceEstimate trace_estimate(const SecondMomentOperator& s, const TraceOptions& opt = {}) {
  const Index n = s.dim();
  const bool exact =
      opt.mode == TraceMode::exact || (opt.mode == TraceMode::automatic && n <= opt.exact_max_dim);
  TraceEstimate out;
  out.exact = true;

  std::vector<const GaussianPosterior*> probed;
  for (const auto& p : s.posteriors()) {
    out.value += p.mean().squaredNorm();
    if (p.cov_op().trace_hint()) {
      out.value += *p.cov_op().trace_hint();
    } else if (exact) {
      out.value += operator_trace(p.cov_op());
    } else {
      probed.push_back(&p);
    }
  }
  if (probed.empty()) return out;

  out.exact = false;
  if (opt.probes < 2) throw ValidationError("probes", "Hutchinson estimate needs >= 2 probes");
  std::mt19937_64 rng(opt.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(opt.probes));
  Vector z(n);
  Vector tmp;
  for (int q = 0; q < opt.probes; ++q) {
    for (Index i = 0; i < n; ++i) z[i] = coin(rng) ? 1.0 : -1.0;
    double acc = 0.0;
    for (const auto* p : probed) {
      p->cov_op().apply(z, tmp);
      acc += z.dot(tmp);
    }
    samples.push_back(acc);
  }
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(samples.size() - 1);
  out.value += mean;
  out.std_error = std::sqrt(var / static_cast<double>(samples.size()));
  return out;
}

namespace detail {

inline void require_basis_dim(Index n, const ReducedBasis& u) {
  if (u.dim() != n) {
    throw DimensionMismatch("basis has " + std::to_string(u.dim()) + " rows, expected " +
                            std::to_string(n));
  }
}

}  // namespace detail

/// ||X - U U' X||_F^2.
inline double projection_cost(const StateTrajectory& x, const ReducedBasis& u) {
  detail::require_basis_dim(x.dim(), u);
  if (u.rank() == 0) return x.states.squaredNorm();
  const Matrix coeffs = u.columns.transpose() * x.states;
  return (x.states - u.columns * coeffs).squaredNorm();
}

/// E[||X - U U' X||_F^2 | y] = trace(S) - sum_j u_j' S u_j.
inline double expected_projection_cost(const SecondMomentOperator& s, const ReducedBasis& u,
                                       double trace_s) {
  detail::require_basis_dim(s.dim(), u);
  double captured = 0.0;
  for (Index j = 0; j < u.rank(); ++j) {
    const Vector col = u.columns.col(j);
    captured += col.dot(s.apply(col));
  }
  return trace_s - captured;
}

inline double expected_projection_cost(const SecondMomentOperator& s, const ReducedBasis& u) {
  return expected_projection_cost(s, u, trace_estimate(s).value);
}

struct BasisOptions {
  double tol = 1e-8;
  int max_restarts = 10;
  bool compute_trailing_mass = true;
  TraceOptions trace{};
};

/// Leading-k eigenvectors of the posterior second moment (Lanczos), with the
/// spectrum and, optionally, the trailing mass trace(S) - sum_{j<=k} s_j.
inline ReducedBasis uncertainty_aware_basis(const SecondMomentOperator& s, Index k,
                                            Index krylov_dim, std::uint64_t seed,
                                            const BasisOptions& options = {}) {
  if (k < 1 || k > krylov_dim || krylov_dim > s.dim()) {
    throw DimensionMismatch("need 1 <= k <= krylov_dim <= n");
  }
  const SpectralDecomposition eig =
      lanczos_topk(s.as_operator(), k, krylov_dim, seed, options.tol, options.max_restarts);
  ReducedBasis out;
  out.columns = eig.eigenvectors;
  out.spectrum = eig.eigenvalues;
  if (options.compute_trailing_mass) {
    const TraceEstimate tr = trace_estimate(s, options.trace);
    out.trailing_mass = tr.value - eig.eigenvalues.sum();
    out.trailing_mass_stderr = tr.std_error;
  }
  return out;
}

inline constexpr double kSnapshotRankTolerance = 1e-12;

/// Snapshot POD: leading left singular vectors of the n x T estimate matrix,
/// computed through the T x T Gram matrix. Directions whose eigenvalue falls
/// below 1e-12 of the largest are dropped and the result is flagged
/// rank-deficient.
inline ReducedBasis snapshot_basis(const StateTrajectory& estimates, Index k) {
  const Matrix& x = estimates.states;
  if (k < 1 || k > std::min(x.rows(), x.cols())) {
    throw DimensionMismatch("snapshot_basis: need 1 <= k <= min(T, n)");
  }
  const Matrix gram = x.transpose() * x;
  Vector values;
  Matrix vectors;
  detail::descending_eig(gram, values, vectors);

  Index available = 0;
  const double cutoff = kSnapshotRankTolerance * std::max(values[0], 0.0);
  while (available < k && values[available] > cutoff && values[available] > 0.0) ++available;

  ReducedBasis out;
  out.rank_deficient = available < k;
  out.spectrum = values.head(available);
  if (available == 0) {
    out.columns = Matrix::Zero(x.rows(), 0);
    return out;
  }
  Matrix u = x * vectors.leftCols(available);
  for (Index j = 0; j < available; ++j) u.col(j) /= std::sqrt(values[j]);
  // One QR pass restores orthonormality lost to the Gram route's squaring.
  Eigen::HouseholderQR<Matrix> qr(u);
  Matrix q = qr.householderQ() * Matrix::Identity(x.rows(), available);
  const Matrix r = qr.matrixQR().topLeftCorner(available, available);
  for (Index j = 0; j < available; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  detail::normalize_signs(q);
  out.columns = std::move(q);
  return out;
}

/// ||X - U U' X||_F^2 / ||X||_F^2, in [0, 1].
inline double reconstruction_error(const StateTrajectory& truth, const ReducedBasis& u) {
  const double total = truth.states.squaredNorm();
  if (total == 0.0) throw ZeroTruth("reconstruction_error: truth has zero norm");
  return std::clamp(projection_cost(truth, u) / total, 0.0, 1.0);
}

}  // namespace uapod
