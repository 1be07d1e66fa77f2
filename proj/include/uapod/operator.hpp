#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "uapod/errors.hpp"

namespace uapod {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Square matrix-free operator on R^dim.
///
/// `apply` must be deterministic. An operator may carry a trace hint when its
/// trace is cheaply known in closed form; consumers fall back to probing.
class LinearOperator {
 public:
  using ApplyFn = std::function<void(const Vector&, Vector&)>;

  LinearOperator(Index dim, ApplyFn fn, std::optional<double> trace = std::nullopt)
      : dim_(dim), fn_(std::move(fn)), trace_(trace) {
    if (dim_ <= 0) throw DimensionMismatch("operator dimension must be positive");
  }

  Index dim() const noexcept { return dim_; }
  const std::optional<double>& trace_hint() const noexcept { return trace_; }

  void apply(const Vector& in, Vector& out) const {
    if (in.size() != dim_) {
      throw DimensionMismatch("operator of dim " + std::to_string(dim_) +
                              " applied to vector of length " + std::to_string(in.size()));
    }
    out.resize(dim_);
    fn_(in, out);
  }

  Vector apply(const Vector& in) const {
    Vector out(dim_);
    apply(in, out);
    return out;
  }

  Vector operator()(const Vector& in) const { return apply(in); }

  static LinearOperator from_matrix(Matrix m) {
    const Index n = m.rows();
    if (m.cols() != n) throw DimensionMismatch("operator matrix must be square");
    const double tr = m.trace();
    auto shared = std::make_shared<const Matrix>(std::move(m));
    return LinearOperator(
        n, [shared](const Vector& in, Vector& out) { out.noalias() = *shared * in; }, tr);
  }

  static LinearOperator identity(Index n, double scale = 1.0) {
    return LinearOperator(
        n, [scale](const Vector& in, Vector& out) { out = scale * in; },
        scale * static_cast<double>(n));
  }

  static LinearOperator zero(Index n) {
    return LinearOperator(
        n, [](const Vector& in, Vector& out) { out.setZero(in.size()); }, 0.0);
  }

 private:
  Index dim_;
  ApplyFn fn_;
  std::optional<double> trace_;
};

/// A LinearOperator the caller asserts is symmetric: <u, A v> = <A u, v>.
///
/// Symmetric eigensolvers and CG only accept this type, so the assertion is
/// made once, at construction, and is visible at call sites.
class SymmetricOperator {
 public:
  explicit SymmetricOperator(LinearOperator op) : op_(std::move(op)) {}

  static SymmetricOperator from_matrix(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("operator matrix must be square");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw NotSymmetric("matrix is not symmetric");
    }
    return SymmetricOperator(LinearOperator::from_matrix(m));
  }

  Index dim() const noexcept { return op_.dim(); }
  const std::optional<double>& trace_hint() const noexcept { return op_.trace_hint(); }
  void apply(const Vector& in, Vector& out) const { op_.apply(in, out); }
  Vector apply(const Vector& in) const { return op_.apply(in); }
  Vector operator()(const Vector& in) const { return op_.apply(in); }
  const LinearOperator& base() const noexcept { return op_; }

 private:
  LinearOperator op_;
};

/// Rectangular matrix-free map R^cols -> R^rows with its adjoint.
class LinearMap {
 public:
  using ApplyFn = std::function<void(const Vector&, Vector&)>;

  LinearMap(Index rows, Index cols, ApplyFn forward, ApplyFn adjoint,
            std::optional<double> frobenius_sq = std::nullopt)
      : rows_(rows), cols_(cols), forward_(std::move(forward)), adjoint_(std::move(adjoint)),
        frobenius_sq_(frobenius_sq) {}

  static LinearMap from_matrix(Matrix m) {
    const Index r = m.rows();
    const Index c = m.cols();
    const double f = m.squaredNorm();
    auto shared = std::make_shared<const Matrix>(std::move(m));
    return LinearMap(
        r, c, [shared](const Vector& in, Vector& out) { out.noalias() = *shared * in; },
        [shared](const Vector& in, Vector& out) { out.noalias() = shared->transpose() * in; }, f);
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  const std::optional<double>& frobenius_sq_hint() const noexcept { return frobenius_sq_; }

  Vector apply(const Vector& in) const {
    if (in.size() != cols_) throw DimensionMismatch("map applied to vector of wrong length");
    Vector out(rows_);
    forward_(in, out);
    return out;
  }

  Vector apply_adjoint(const Vector& in) const {
    if (in.size() != rows_) throw DimensionMismatch("adjoint applied to vector of wrong length");
    Vector out(cols_);
    adjoint_(in, out);
    return out;
  }

  /// ||H||_F^2, from the hint when present, else by probing every column.
  double frobenius_sq() const {
    if (frobenius_sq_) return *frobenius_sq_;
    double acc = 0.0;
    Vector e = Vector::Zero(cols_);
    for (Index i = 0; i < cols_; ++i) {
      e[i] = 1.0;
      acc += apply(e).squaredNorm();
      e[i] = 0.0;
    }
    return acc;
  }

 private:
  Index rows_;
  Index cols_;
  ApplyFn forward_;
  ApplyFn adjoint_;
  std::optional<double> frobenius_sq_;
};

/// Trace of a square operator: the hint if available, else sum of e_i' A e_i.
inline double operator_trace(const LinearOperator& op) {
  if (op.trace_hint()) return *op.trace_hint();
  double acc = 0.0;
  Vector e = Vector::Zero(op.dim());
  Vector out;
  for (Index i = 0; i < op.dim(); ++i) {
    e[i] = 1.0;
    op.apply(e, out);
    acc += out[i];
    e[i] = 0.0;
  }
  return acc;
}

inline double operator_trace(const SymmetricOperator& op) { return operator_trace(op.base()); }

/// Explicit dense matrix of an operator, one column per apply. Test/oracle use.
inline Matrix materialize(const LinearOperator& op) {
  const Index n = op.dim();
  Matrix m(n, n);
  Vector e = Vector::Zero(n);
  Vector col;
  for (Index i = 0; i < n; ++i) {
    e[i] = 1.0;
    op.apply(e, col);
    m.col(i) = col;
    e[i] = 0.0;
  }
  return m;
}

inline Matrix materialize(const SymmetricOperator& op) { return materialize(op.base()); }

/// Standard-normal vector from a seeded engine.
inline Vector random_normal(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

/// Worst normalized symmetry defect |<u,Av> - <Au,v>| / (|u| |Av|) over
/// `samples` random pairs.
inline double symmetry_defect(const SymmetricOperator& op, std::uint64_t seed, int samples = 8) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vector u = random_normal(op.dim(), rng);
    const Vector v = random_normal(op.dim(), rng);
    const Vector av = op.apply(v);
    const Vector au = op.apply(u);
    const double denom = u.norm() * av.norm();
    if (denom == 0.0) continue;
    worst = std::max(worst, std::abs(u.dot(av) - au.dot(v)) / denom);
  }
  return worst;
}

/// Most negative normalized Rayleigh quotient <v, A v>/|v|^2 over random v,
/// or 0 when none is negative.
inline double psd_defect(const SymmetricOperator& op, std::uint64_t seed, int samples = 8) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vector v = random_normal(op.dim(), rng);
    worst = std::min(worst, v.dot(op.apply(v)) / v.squaredNorm());
  }
  return -worst;
}

}  // namespace uapod
