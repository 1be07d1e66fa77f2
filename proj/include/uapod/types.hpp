#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <string>

#include "uapod/errors.hpp"
#include "uapod/grid.hpp"
#include "uapod/operator.hpp"

namespace uapod {

/// Sequence x_1..x_T of states in R^n, one per column.
struct StateTrajectory {
  Matrix states;
  std::optional<Grid2D> grid;

  StateTrajectory() = default;
  explicit StateTrajectory(Matrix s, std::optional<Grid2D> g = std::nullopt)
      : states(std::move(s)), grid(g) {
    if (states.cols() < 1) throw DimensionMismatch("trajectory needs T >= 1");
    if (grid && grid->velocity_dim() != states.rows()) {
      throw DimensionMismatch("trajectory state length differs from 2*width*height");
    }
  }

  Index dim() const noexcept { return states.rows(); }
  Index length() const noexcept { return states.cols(); }
  Vector at(Index t) const { return states.col(t); }
};

/// Column-orthonormal n x k basis with its leading spectrum.
struct ReducedBasis {
  Matrix columns;
  Vector spectrum;
  /// trace(S) - sum of the retained eigenvalues; NaN when not computed.
  double trailing_mass = std::numeric_limits<double>::quiet_NaN();
  /// Standard error of trailing_mass (nonzero only for stochastic traces).
  double trailing_mass_stderr = 0.0;
  /// Set when fewer than the requested number of directions were available.
  bool rank_deficient = false;

  Index dim() const noexcept { return columns.rows(); }
  Index rank() const noexcept { return columns.cols(); }

  /// First `k` columns, sharing the spectrum prefix.
  ReducedBasis truncated(Index k) const {
    if (k < 0 || k > rank()) throw DimensionMismatch("truncation beyond basis rank");
    ReducedBasis out;
    out.columns = columns.leftCols(k);
    out.spectrum = spectrum.head(std::min<Index>(k, spectrum.size()));
    out.rank_deficient = rank_deficient;
    return out;
  }
};

}  // namespace uapod
