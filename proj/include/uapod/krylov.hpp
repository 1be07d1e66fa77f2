#pragma once

// Matrix-free symmetric eigensolver (thick-restart Lanczos with full
// reorthogonalization), conjugate gradients, and a dense eigensolver used as
// the exact route and as a test oracle.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

#include "uapod/errors.hpp"
#include "uapod/operator.hpp"

namespace uapod {

/// Leading eigenpairs, eigenvalues in non-increasing order.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;  // n x k, orthonormal columns
  Vector residuals;     // ||A u_j - s_j u_j|| per pair; empty for the dense route
  int restarts = 0;
  Index operator_applies = 0;

  Index size() const noexcept { return eigenvalues.size(); }
};

namespace detail {

/// Flip each column so its largest-magnitude entry is positive.
inline void normalize_signs(Matrix& vectors) {
  for (Index j = 0; j < vectors.cols(); ++j) {
    Index arg = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, j) < 0.0) vectors.col(j) *= -1.0;
  }
}

/// Eigendecomposition of a small symmetric matrix, reordered descending.
inline void descending_eig(const Matrix& sym, Vector& values, Matrix& vectors) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NonConvergence("dense symmetric eigensolver failed");
  const Index n = sym.rows();
  values.resize(n);
  vectors.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    values[i] = solver.eigenvalues()[n - 1 - i];
    vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
}

/// Orthogonalize `w` against the first `cols` columns of `basis`, twice.
/// Returns the accumulated projection coefficients.
inline Vector reorthogonalize(const Matrix& basis, Index cols, Vector& w) {
  const auto block = basis.leftCols(cols);
  Vector h = block.transpose() * w;
  w.noalias() -= block * h;
  const Vector h2 = block.transpose() * w;
  w.noalias() -= block * h2;
  return h + h2;
}

}  // namespace detail

/// Largest `k` eigenpairs of a symmetric (PSD up to rounding) operator.
///
/// Thick-restart Lanczos: a Krylov basis of size `krylov_dim` is built with
/// full two-pass Gram-Schmidt reorthogonalization; on restart the leading
/// Ritz vectors are kept and the residual vector resumes the expansion. A
/// pair counts as converged when its Ritz residual is at most `tol` times the
/// largest Ritz value in magnitude.
///
/// Throws DimensionMismatch when krylov_dim exceeds the operator dimension
/// and NonConvergence (carrying the first unconverged index) after
/// `max_restarts` restarts.
inline SpectralDecomposition lanczos_topk(const SymmetricOperator& op, Index k, Index krylov_dim,
                                          std::uint64_t seed = 0, double tol = 1e-10,
                                          int max_restarts = 10) {
  const Index n = op.dim();
  if (krylov_dim > n) {
    throw DimensionMismatch("krylov_dim " + std::to_string(krylov_dim) +
                            " exceeds operator dimension " + std::to_string(n));
  }
  if (k < 1 || k > krylov_dim) {
    throw DimensionMismatch("need 1 <= k <= krylov_dim, got k=" + std::to_string(k) +
                            ", krylov_dim=" + std::to_string(krylov_dim));
  }

  const Index m = krylov_dim;
  std::mt19937_64 rng(seed);
  Matrix basis = Matrix::Zero(n, m + 1);
  Matrix projected = Matrix::Zero(m, m);

  // Fresh unit vector orthogonal to the first `cols` basis columns; zero if
  // the basis already spans the space.
  auto fresh_direction = [&](Index cols) -> Vector {
    for (int attempt = 0; attempt < 4; ++attempt) {
      Vector v = random_normal(n, rng);
      if (cols > 0) detail::reorthogonalize(basis, cols, v);
      const double norm = v.norm();
      if (norm > 1e-8) return v / norm;
    }
    return Vector::Zero(n);
  };

  basis.col(0) = fresh_direction(0);

  SpectralDecomposition result;
  Index start = 0;
  double op_scale = 0.0;
  Vector ritz_values;
  Matrix ritz_vectors;
  Vector w;

  for (int restart = 0;; ++restart) {
    double trailing_beta = 0.0;
    for (Index j = start; j < m; ++j) {
      op.apply(basis.col(j), w);
      ++result.operator_applies;
      const Vector h = detail::reorthogonalize(basis, j + 1, w);
      projected.col(j).head(j + 1) = h;
      projected.row(j).head(j + 1) = h.transpose();
      op_scale = std::max(op_scale, h.cwiseAbs().maxCoeff());

      double beta = w.norm();
      op_scale = std::max(op_scale, beta);
      if (beta <= 1e-12 * op_scale || j + 1 >= n) {
        // Invariant subspace: continue from an unrelated direction.
        beta = 0.0;
        basis.col(j + 1) = (j + 1 < n) ? fresh_direction(j + 1) : Vector::Zero(n);
      } else {
        basis.col(j + 1) = w / beta;
      }
      if (j + 1 < m) {
        projected(j + 1, j) = beta;
        projected(j, j + 1) = beta;
      } else {
        trailing_beta = beta;
      }
    }

    detail::descending_eig(projected, ritz_values, ritz_vectors);
    const double scale = std::max(std::abs(ritz_values[0]), std::abs(ritz_values[m - 1]));
    Index first_unconverged = -1;
    for (Index i = 0; i < k; ++i) {
      if (std::abs(trailing_beta * ritz_vectors(m - 1, i)) > tol * scale) {
        first_unconverged = i;
        break;
      }
    }
    if (first_unconverged < 0) break;
    if (restart >= max_restarts) {
      throw NonConvergence("Lanczos: eigenpair " + std::to_string(first_unconverged) +
                               " unconverged after " + std::to_string(max_restarts) +
                               " restarts; increase krylov_dim",
                           first_unconverged);
    }

    // Thick restart: keep the leading Ritz vectors plus the residual direction.
    const Index keep = std::min(m - 1, std::max(k, k + (m - k) / 2));
    const Matrix kept = basis.leftCols(m) * ritz_vectors.leftCols(keep);
    const Vector residual_dir = basis.col(m);
    basis.leftCols(keep) = kept;
    basis.rightCols(m - keep).setZero();
    basis.col(keep) = residual_dir;
    projected.setZero();
    for (Index i = 0; i < keep; ++i) {
      projected(i, i) = ritz_values[i];
      projected(i, keep) = projected(keep, i) = trailing_beta * ritz_vectors(m - 1, i);
    }
    start = keep;
    result.restarts = restart + 1;
  }

  result.eigenvalues = ritz_values.head(k);
  result.eigenvectors = basis.leftCols(m) * ritz_vectors.leftCols(k);
  detail::normalize_signs(result.eigenvectors);
  result.residuals.resize(k);
  for (Index j = 0; j < k; ++j) {
    op.apply(result.eigenvectors.col(j), w);
    ++result.operator_applies;
    result.residuals[j] = (w - result.eigenvalues[j] * result.eigenvectors.col(j)).norm();
  }
  return result;
}

struct CgStats {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Solve A x = rhs for symmetric positive definite A.
///
/// Stops once the true residual satisfies ||A x - rhs|| <= tol ||rhs||; the
/// recursive residual is only used to decide when to check. Throws
/// NonConvergence after `max_iter` iterations.
inline Vector conjugate_gradient(const SymmetricOperator& op, const Vector& rhs, double tol,
                                 int max_iter, CgStats* stats = nullptr) {
  const Index n = op.dim();
  if (rhs.size() != n) throw DimensionMismatch("CG right-hand side has wrong length");
  if (!rhs.allFinite()) throw NonFinite("CG right-hand side is not finite");

  Vector x = Vector::Zero(n);
  const double rhs_norm = rhs.norm();
  if (stats) *stats = {};
  if (rhs_norm == 0.0) return x;
  const double target = tol * rhs_norm;

  Vector r = rhs;
  Vector p = r;
  Vector ap(n);
  double rr = r.squaredNorm();
  int it = 0;
  while (true) {
    if (std::sqrt(rr) <= target) {
      // Confirm against the true residual; restart the recurrence on drift.
      op.apply(x, ap);
      r = rhs - ap;
      rr = r.squaredNorm();
      if (std::sqrt(rr) <= target) break;
      p = r;
    }
    if (it >= max_iter) {
      throw NonConvergence("CG: relative residual " + std::to_string(std::sqrt(rr) / rhs_norm) +
                           " after " + std::to_string(max_iter) + " iterations");
    }
    op.apply(p, ap);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) {
      throw NonConvergence("CG: operator not positive definite along search direction");
    }
    const double step = rr / pap;
    x.noalias() += step * p;
    r.noalias() -= step * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    ++it;
  }
  if (stats) {
    stats->iterations = it;
    stats->relative_residual = std::sqrt(rr) / rhs_norm;
  }
  return x;
}

inline constexpr Index kDenseOracleMaxDim = 512;

/// Full descending eigendecomposition of an explicit symmetric matrix. This
/// is the exact O(n^3) route; n is capped to keep it out of production paths.
inline SpectralDecomposition dense_eig_oracle(const Matrix& matrix) {
  const Index n = matrix.rows();
  if (matrix.cols() != n) throw DimensionMismatch("dense_eig_oracle: matrix must be square");
  if (n > kDenseOracleMaxDim) {
    throw TooLarge("dense_eig_oracle: n=" + std::to_string(n) + " exceeds " +
                   std::to_string(kDenseOracleMaxDim));
  }
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw NotSymmetric("dense_eig_oracle: matrix is not symmetric");
  }
  SpectralDecomposition out;
  detail::descending_eig(0.5 * (matrix + matrix.transpose()), out.eigenvalues, out.eigenvectors);
  detail::normalize_signs(out.eigenvectors);
  return out;
}

/// Orthogonal projector U U' onto the span of the columns of `u`.
inline Matrix projector(const Matrix& u) { return u * u.transpose(); }

/// Frobenius distance between the projectors of two column-orthonormal bases.
/// Computed without forming n x n matrices.
inline double projector_distance(const Matrix& a, const Matrix& b) {
  // ||AA' - BB'||_F^2 = ||(I - BB')A||_F^2 + ||(I - AA')B||_F^2; the residual
  // form avoids the cancellation in ka + kb - 2 ||A'B||_F^2.
  const double da = (a - b * (b.transpose() * a)).squaredNorm();
  const double db = (b - a * (a.transpose() * b)).squaredNorm();
  return std::sqrt(da + db);
}

}  // namespace uapod
