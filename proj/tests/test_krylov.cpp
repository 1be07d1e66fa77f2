#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "uapod/krylov.hpp"

using namespace uapod;
using uapod::testing::random_spd;
using uapod::testing::with_spectrum;

namespace {

void expect_orthonormal(const Matrix& u, double tol = 1e-8) {
  const Matrix gram = u.transpose() * u;
  EXPECT_LE((gram - Matrix::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff(), tol);
}

// Descending spectrum with a clear gap after position `k`.
Vector gapped_spectrum(Index n, Index k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector s(n);
  for (Index i = 0; i < n; ++i) s[i] = (i < k) ? 10.0 + 10.0 * unif(rng) : 4.0 * unif(rng);
  std::sort(s.data(), s.data() + n, std::greater<>());
  return s;
}

}  // namespace

TEST(LinearOperator, ApplyIsDeterministic) {
  std::mt19937_64 rng(3);
  const Matrix a = random_spd(12, rng);
  const auto op = LinearOperator::from_matrix(a);
  const Vector v = random_normal(12, rng);
  const Vector first = op.apply(v);
  const Vector second = op.apply(v);
  EXPECT_EQ(0, std::memcmp(first.data(), second.data(), sizeof(double) * 12));
  EXPECT_NEAR(*op.trace_hint(), a.trace(), 1e-12);
  EXPECT_THROW(op.apply(Vector::Zero(5)), DimensionMismatch);
}

TEST(LinearOperator, SymmetricFromMatrixRejectsAsymmetry) {
  Matrix a(2, 2);
  a << 1.0, 2.0, 0.0, 1.0;
  EXPECT_THROW(SymmetricOperator::from_matrix(a), NotSymmetric);
}

TEST(LinearOperator, MonteCarloSymmetryAndPsdChecks) {
  std::mt19937_64 rng(8);
  const auto op = SymmetricOperator::from_matrix(random_spd(30, rng));
  EXPECT_LE(symmetry_defect(op, 1), 1e-10);
  EXPECT_LE(psd_defect(op, 2), 0.0);
}

TEST(Lanczos, IdentityOperator) {
  const SymmetricOperator op(LinearOperator::identity(10));
  const auto eig = lanczos_topk(op, 3, 6, 1);
  ASSERT_EQ(eig.eigenvalues.size(), 3);
  for (Index j = 0; j < 3; ++j) EXPECT_NEAR(eig.eigenvalues[j], 1.0, 1e-12);
  expect_orthonormal(eig.eigenvectors);
}

TEST(Lanczos, DiagonalOperatorRecoversCoordinateAxes) {
  Vector d(10);
  for (Index i = 0; i < 10; ++i) d[i] = static_cast<double>(10 - i);
  const auto op = SymmetricOperator::from_matrix(d.asDiagonal().toDenseMatrix());
  const auto eig = lanczos_topk(op, 2, 8, 5);
  EXPECT_NEAR(eig.eigenvalues[0], 10.0, 1e-9);
  EXPECT_NEAR(eig.eigenvalues[1], 9.0, 1e-9);
  // Largest-magnitude entry is made positive, so the axes come back as +e1, +e2.
  EXPECT_NEAR(eig.eigenvectors(0, 0), 1.0, 1e-9);
  EXPECT_NEAR(eig.eigenvectors(1, 1), 1.0, 1e-9);
}

TEST(Lanczos, RandomPsdMatchesKnownSpectrum) {
  std::mt19937_64 rng(100);
  const Vector spectrum = gapped_spectrum(100, 5, rng);
  const Matrix a = with_spectrum(spectrum, rng);
  const auto op = SymmetricOperator::from_matrix(a);
  const auto eig = lanczos_topk(op, 5, 20, 11);

  for (Index j = 0; j < 5; ++j) {
    EXPECT_LE(std::abs(eig.eigenvalues[j] - spectrum[j]) / spectrum[j], 1e-8) << j;
  }
  const auto dense = dense_eig_oracle(a);
  EXPECT_LE(projector_distance(eig.eigenvectors, dense.eigenvectors.leftCols(5)), 1e-6);
  expect_orthonormal(eig.eigenvectors);
}

TEST(Lanczos, ContractInvariants) {
  std::mt19937_64 rng(21);
  const Vector spectrum = gapped_spectrum(80, 6, rng);
  const Matrix a = with_spectrum(spectrum, rng);
  const auto op = SymmetricOperator::from_matrix(a);
  const double tol = 1e-10;
  const auto eig = lanczos_topk(op, 6, 24, 4, tol);
  const double s1 = eig.eigenvalues[0];
  for (Index j = 0; j < 6; ++j) {
    if (j + 1 < 6) EXPECT_GE(eig.eigenvalues[j], eig.eigenvalues[j + 1]);
    const Vector u = eig.eigenvectors.col(j);
    EXPECT_NEAR(u.dot(a * u), eig.eigenvalues[j], 1e-8 * s1);
    EXPECT_LE((a * u - eig.eigenvalues[j] * u).norm(), 10 * tol * s1);
    EXPECT_DOUBLE_EQ(eig.residuals[j], (a * u - eig.eigenvalues[j] * u).norm());
  }
  expect_orthonormal(eig.eigenvectors);
}

TEST(Lanczos, SameSeedIsBitwiseReproducible) {
  std::mt19937_64 rng(9);
  const auto op = SymmetricOperator::from_matrix(random_spd(60, rng));
  const auto a = lanczos_topk(op, 4, 16, 77);
  const auto b = lanczos_topk(op, 4, 16, 77);
  EXPECT_EQ(0, std::memcmp(a.eigenvectors.data(), b.eigenvectors.data(),
                           sizeof(double) * a.eigenvectors.size()));
  EXPECT_EQ(0, std::memcmp(a.eigenvalues.data(), b.eigenvalues.data(), sizeof(double) * 4));
}

TEST(Lanczos, RestartsReachInteriorConvergence) {
  // A slowly decaying spectrum forces thick restarts with a small subspace.
  Vector s(150);
  for (Index i = 0; i < 150; ++i) s[i] = 1.0 / (1.0 + 0.05 * static_cast<double>(i));
  std::mt19937_64 rng(2);
  const Matrix a = with_spectrum(s, rng);
  const auto eig = lanczos_topk(SymmetricOperator::from_matrix(a), 3, 30, 3, 1e-9, 10);
  EXPECT_GT(eig.restarts, 0);
  for (Index j = 0; j < 3; ++j) EXPECT_NEAR(eig.eigenvalues[j], s[j], 1e-8);
}

TEST(Lanczos, NonConvergenceNamesTheFailingPair) {
  Vector s(200);
  for (Index i = 0; i < 200; ++i) s[i] = 1.0 - 1e-4 * static_cast<double>(i);
  std::mt19937_64 rng(4);
  const auto op = SymmetricOperator::from_matrix(with_spectrum(s, rng));
  try {
    lanczos_topk(op, 5, 6, 1, 1e-12, 0);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_GE(e.index(), 0);
    EXPECT_LT(e.index(), 5);
  }
}

TEST(Lanczos, DimensionErrors) {
  const SymmetricOperator op(LinearOperator::identity(6));
  EXPECT_THROW(lanczos_topk(op, 2, 7), DimensionMismatch);
  EXPECT_THROW(lanczos_topk(op, 0, 4), DimensionMismatch);
  EXPECT_THROW(lanczos_topk(op, 5, 4), DimensionMismatch);
}

TEST(Lanczos, SmallGapsWithFullKrylovSpace) {
  // With sigma_k - sigma_{k+1} = 1e-6 sigma_1 the subspace is only determined
  // to residual/gap, so the full space is used to resolve it.
  std::mt19937_64 rng(12);
  Vector s(60);
  for (Index i = 0; i < 60; ++i) s[i] = 60.0 - static_cast<double>(i);
  s[4] = s[3] - 1e-6 * s[0];
  s[5] = s[4] - 1e-6 * s[0];
  const Matrix a = with_spectrum(s, rng);
  const auto eig = lanczos_topk(SymmetricOperator::from_matrix(a), 5, 60, 6, 1e-12);
  const auto dense = dense_eig_oracle(a);
  for (Index j = 0; j < 5; ++j) EXPECT_LE(std::abs(eig.eigenvalues[j] - s[j]) / s[j], 1e-8);
  EXPECT_LE(projector_distance(eig.eigenvectors, dense.eigenvectors.leftCols(5)), 1e-6);
}

TEST(ConjugateGradient, IdentityReturnsRhs) {
  const SymmetricOperator op(LinearOperator::identity(7));
  Vector r(7);
  r << 1, -2, 3, -4, 5, -6, 7;
  EXPECT_LE((conjugate_gradient(op, r, 1e-12, 10) - r).norm(), 1e-14);
}

TEST(ConjugateGradient, DiagonalSolve) {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 4.0;
  const Vector x = conjugate_gradient(SymmetricOperator::from_matrix(d), Vector{{2.0, 8.0}}, 1e-12, 10);
  EXPECT_NEAR(x[0], 1.0, 1e-12);
  EXPECT_NEAR(x[1], 2.0, 1e-12);
}

TEST(ConjugateGradient, MatchesCholeskySolve) {
  std::mt19937_64 rng(50);
  const Matrix a = random_spd(50, rng, 0.5);
  const Vector b = random_normal(50, rng);
  CgStats stats;
  const Vector x = conjugate_gradient(SymmetricOperator::from_matrix(a), b, 1e-12, 500, &stats);
  const Vector oracle = a.llt().solve(b);
  EXPECT_LE((x - oracle).norm() / oracle.norm(), 1e-8);
  EXPECT_LE((a * x - b).norm(), 1e-12 * b.norm() * 1.0001);
  EXPECT_GT(stats.iterations, 0);
}

TEST(ConjugateGradient, ZeroRhsGivesZero) {
  std::mt19937_64 rng(1);
  const auto op = SymmetricOperator::from_matrix(random_spd(5, rng));
  EXPECT_EQ(conjugate_gradient(op, Vector::Zero(5), 1e-10, 10).norm(), 0.0);
}

TEST(ConjugateGradient, BudgetExhaustionThrows) {
  Vector s(40);
  for (Index i = 0; i < 40; ++i) s[i] = std::pow(10.0, -6.0 * static_cast<double>(i) / 39.0);
  std::mt19937_64 rng(6);
  const auto op = SymmetricOperator::from_matrix(with_spectrum(s, rng));
  EXPECT_THROW(conjugate_gradient(op, random_normal(40, rng), 1e-12, 3), NonConvergence);
}

TEST(DenseOracle, DiagonalTwoByTwo) {
  Matrix a(2, 2);
  a << 2, 0, 0, 1;
  const auto eig = dense_eig_oracle(a);
  EXPECT_DOUBLE_EQ(eig.eigenvalues[0], 2.0);
  EXPECT_DOUBLE_EQ(eig.eigenvalues[1], 1.0);
}

TEST(DenseOracle, SwapMatrix) {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const auto eig = dense_eig_oracle(a);
  EXPECT_NEAR(eig.eigenvalues[0], 1.0, 1e-15);
  EXPECT_NEAR(eig.eigenvalues[1], -1.0, 1e-15);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(eig.eigenvectors(0, 0), r, 1e-15);
  EXPECT_NEAR(eig.eigenvectors(1, 0), r, 1e-15);
  EXPECT_NEAR(std::abs(eig.eigenvectors(0, 1)), r, 1e-15);
  EXPECT_NEAR(eig.eigenvectors(0, 1), -eig.eigenvectors(1, 1), 1e-15);
}

TEST(DenseOracle, ResidualsAndReconstruction) {
  std::mt19937_64 rng(20);
  Matrix a = uapod::testing::random_matrix(20, 20, rng);
  a = (0.5 * (a + a.transpose())).eval();
  const auto eig = dense_eig_oracle(a);
  for (Index j = 0; j < 20; ++j) {
    const Vector u = eig.eigenvectors.col(j);
    EXPECT_LE((a * u - eig.eigenvalues[j] * u).norm(), 1e-8);
    if (j + 1 < 20) EXPECT_GE(eig.eigenvalues[j], eig.eigenvalues[j + 1]);
  }
  const Matrix rebuilt =
      eig.eigenvectors * eig.eigenvalues.asDiagonal() * eig.eigenvectors.transpose();
  EXPECT_LE((a - rebuilt).norm(), 1e-8 * a.norm());
}

TEST(DenseOracle, Guards) {
  EXPECT_THROW(dense_eig_oracle(Matrix::Identity(513, 513)), TooLarge);
  Matrix a = Matrix::Identity(3, 3);
  a(0, 2) = 1e-6;
  EXPECT_THROW(dense_eig_oracle(a), NotSymmetric);
}

TEST(Projector, DistanceIgnoresRotationWithinSubspace) {
  std::mt19937_64 rng(31);
  const Matrix u = uapod::testing::random_orthonormal(12, 3, rng);
  const Matrix r = uapod::testing::random_orthonormal(3, 3, rng);
  EXPECT_LE(projector_distance(u, u * r), 1e-12);
  const Matrix other = uapod::testing::random_orthonormal(12, 3, rng);
  EXPECT_NEAR(projector_distance(u, other), (projector(u) - projector(other)).norm(), 1e-10);
}
