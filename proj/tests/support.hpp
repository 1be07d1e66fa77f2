#pragma once

// Fixtures shared by the unit tests and the acceptance runner. Everything
// here is built from explicit dense matrices so the library results can be
// checked against straightforward linear algebra.

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cstdint>
#include <random>

#include "uapod/operator.hpp"

namespace uapod::testing {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

/// Haar-ish random n x k matrix with orthonormal columns.
inline Matrix random_orthonormal(Index n, Index k, std::mt19937_64& rng) {
  const Matrix g = random_matrix(n, k, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, k);
}

/// Symmetric matrix Q diag(spectrum) Q' with a random orthogonal Q.
inline Matrix with_spectrum(const Vector& spectrum, std::mt19937_64& rng) {
  const Index n = spectrum.size();
  const Matrix q = random_orthonormal(n, n, rng);
  Matrix a = q * spectrum.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

/// Random symmetric positive definite matrix, well conditioned.
inline Matrix random_spd(Index n, std::mt19937_64& rng, double shift = 1.0) {
  const Matrix g = random_matrix(n, n, rng);
  Matrix a = g * g.transpose() / static_cast<double>(n) + shift * Matrix::Identity(n, n);
  return 0.5 * (a + a.transpose());
}

inline Matrix dense_inverse(const Matrix& spd) {
  return spd.llt().solve(Matrix::Identity(spd.rows(), spd.cols()));
}

inline double relative_error(const Matrix& got, const Matrix& want) {
  const double scale = want.norm();
  return scale > 0.0 ? (got - want).norm() / scale : (got - want).norm();
}

}  // namespace uapod::testing
