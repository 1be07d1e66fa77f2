#pragma once

// Desk-scale 2D incompressible turbulence in vorticity-transport form on a
// periodic grid, passive-scalar transport, and the Galerkin-reduced step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uapod/errors.hpp"
#include "uapod/grid.hpp"
#include "uapod/spectral.hpp"
#include "uapod/types.hpp"

namespace uapod {

/// Discrete operators and parameters of the turbulence model.
///
/// Derivatives are second-order central differences, the Laplacian is the
/// 5-point stencil, and velocity is recovered from vorticity through a
/// spectral stream-function solve that inverts the central-difference curl.
struct FluidModel {
  Grid2D grid;
  double alpha = 1e-3;  // dissipation (viscosity)
  double dt = 0.1;

  FluidModel() = default;
  FluidModel(Grid2D g, double a, double step) : grid(g), alpha(a), dt(step) { validate(); }

  void validate() const {
    grid.validate();
    if (!(alpha >= 0.0)) throw ValidationError("alpha", "must be non-negative");
    if (!(dt > 0.0)) throw ValidationError("dt", "must be positive");
  }

  Vector ddx(const Vector& f) const {
    require_scalar_field(grid, f, "field");
    Vector out(f.size());
    const double c = 0.5 / grid.spacing;
    for (Index y = 0; y < grid.height; ++y) {
      for (Index x = 0; x < grid.width; ++x) {
        out[grid.index(x, y)] = c * (f[grid.index(x + 1, y)] - f[grid.index(x - 1, y)]);
      }
    }
    return out;
  }

  Vector ddy(const Vector& f) const {
    require_scalar_field(grid, f, "field");
    Vector out(f.size());
    const double c = 0.5 / grid.spacing;
    for (Index y = 0; y < grid.height; ++y) {
      for (Index x = 0; x < grid.width; ++x) {
        out[grid.index(x, y)] = c * (f[grid.index(x, y + 1)] - f[grid.index(x, y - 1)]);
      }
    }
    return out;
  }

  /// 5-point Laplacian (the operator l).
  Vector laplacian(const Vector& f) const {
    require_scalar_field(grid, f, "field");
    Vector out(f.size());
    const double c = 1.0 / (grid.spacing * grid.spacing);
    for (Index y = 0; y < grid.height; ++y) {
      for (Index x = 0; x < grid.width; ++x) {
        out[grid.index(x, y)] =
            c * (f[grid.index(x + 1, y)] + f[grid.index(x - 1, y)] + f[grid.index(x, y + 1)] +
                 f[grid.index(x, y - 1)] - 4.0 * f[grid.index(x, y)]);
      }
    }
    return out;
  }

  /// Gradient (the operator r): scalar field -> blocked [d/dx; d/dy].
  Vector gradient(const Vector& f) const {
    Vector out(grid.velocity_dim());
    out.head(grid.pixels()) = ddx(f);
    out.tail(grid.pixels()) = ddy(f);
    return out;
  }

  /// Central-difference divergence; the negative adjoint of `gradient`.
  Vector divergence(const Vector& velocity) const {
    require_velocity_field(grid, velocity, "velocity");
    return ddx(velocity.head(grid.pixels())) + ddy(velocity.tail(grid.pixels()));
  }

  /// Curl (the operator c): velocity -> vorticity dv/dx - du/dy.
  Vector curl(const Vector& velocity) const {
    require_velocity_field(grid, velocity, "velocity");
    return ddx(velocity.tail(grid.pixels())) - ddy(velocity.head(grid.pixels()));
  }

  /// Divergence-free velocity whose curl is `vorticity` (up to the modes the
  /// central-difference curl cannot represent: the mean and Nyquist lines).
  Vector biot_savart(const Vector& vorticity) const {
    require_scalar_field(grid, vorticity, "vorticity");
    const spectral::ComplexField w = spectral::forward(grid, vorticity);
    spectral::ComplexField u_hat(w.size());
    spectral::ComplexField v_hat(w.size());
    const spectral::Complex i_unit(0.0, 1.0);
    for (Index y = 0; y < grid.height; ++y) {
      const double sy = std::sin(spectral::bin_angle(y, grid.height)) / grid.spacing;
      for (Index x = 0; x < grid.width; ++x) {
        const double sx = std::sin(spectral::bin_angle(x, grid.width)) / grid.spacing;
        const double symbol = sx * sx + sy * sy;
        const Index s = y * grid.width + x;
        if (symbol * grid.spacing * grid.spacing < 1e-12) {
          u_hat[s] = v_hat[s] = 0.0;
          continue;
        }
        const spectral::Complex psi = w[s] / symbol;
        u_hat[s] = i_unit * sy * psi;
        v_hat[s] = -i_unit * sx * psi;
      }
    }
    Vector out(grid.velocity_dim());
    out.head(grid.pixels()) = spectral::inverse_real(grid, std::move(u_hat));
    out.tail(grid.pixels()) = spectral::inverse_real(grid, std::move(v_hat));
    return out;
  }

  /// Largest pixel speed times dt / spacing.
  double courant_number(const Vector& velocity) const {
    require_velocity_field(grid, velocity, "velocity");
    const Index m = grid.pixels();
    double vmax = 0.0;
    for (Index s = 0; s < m; ++s) vmax = std::max(vmax, std::hypot(velocity[s], velocity[m + s]));
    return vmax * dt / grid.spacing;
  }
};

namespace detail {

inline void require_cfl(const FluidModel& model, const Vector& velocity) {
  const double cfl = model.courant_number(velocity);
  if (!(cfl <= 1.0)) {
    throw CFLViolation("Courant number " + std::to_string(cfl) + " exceeds 1");
  }
}

}  // namespace detail

/// Vorticity after one explicit Euler step of dw/dt = alpha l w - x.(r w).
inline Vector advance_vorticity(const FluidModel& model, const Vector& velocity,
                                const Vector& vorticity) {
  const Index m = model.grid.pixels();
  const Vector advection = velocity.head(m).cwiseProduct(model.ddx(vorticity)) +
                           velocity.tail(m).cwiseProduct(model.ddy(vorticity));
  return vorticity + model.dt * (model.alpha * model.laplacian(vorticity) - advection);
}

/// One step of the full model: curl, advect-diffuse the vorticity, recover a
/// divergence-free velocity, add the forcing.
inline Vector step(const FluidModel& model, const Vector& velocity, const Vector& forcing) {
  require_velocity_field(model.grid, velocity, "velocity");
  require_velocity_field(model.grid, forcing, "forcing");
  detail::require_cfl(model, velocity);
  const Vector vorticity = model.curl(velocity);
  Vector next = model.biot_savart(advance_vorticity(model, velocity, vorticity)) + forcing;
  if (!next.allFinite()) throw NonFinite("fluid step produced non-finite velocity");
  return next;
}

/// Forcing sequence theta_1..theta_T; theta_1 is also the initial state.
struct ForcingSequence {
  std::vector<Vector> thetas;

  /// theta_1 = initial, theta_t = 0 afterwards (decaying turbulence).
  static ForcingSequence decaying(const Vector& initial, Index length) {
    ForcingSequence f;
    f.thetas.assign(static_cast<std::size_t>(length), Vector::Zero(initial.size()));
    if (length > 0) f.thetas.front() = initial;
    return f;
  }
};

/// x_1 = theta_1, x_{t+1} = step(x_t, theta_{t+1}).
inline StateTrajectory simulate(const FluidModel& model, const ForcingSequence& forcing) {
  if (forcing.thetas.empty()) throw DimensionMismatch("simulate needs T >= 1");
  const Index n = model.grid.velocity_dim();
  Matrix states(n, static_cast<Index>(forcing.thetas.size()));
  for (const auto& theta : forcing.thetas) require_velocity_field(model.grid, theta, "forcing");
  states.col(0) = forcing.thetas.front();
  for (std::size_t t = 1; t < forcing.thetas.size(); ++t) {
    const Index c = static_cast<Index>(t);
    states.col(c) = step(model, states.col(c - 1), forcing.thetas[t]);
  }
  return StateTrajectory(std::move(states), model.grid);
}

/// Reduced step u' step(u z, theta).
inline Vector galerkin_step(const FluidModel& model, const ReducedBasis& basis, const Vector& z,
                            const Vector& forcing) {
  if (basis.dim() != model.grid.velocity_dim()) {
    throw DimensionMismatch("basis rows differ from velocity dimension");
  }
  if (z.size() != basis.rank()) throw DimensionMismatch("reduced state length differs from k");
  const Vector lifted = basis.columns * z;
  return basis.columns.transpose() * step(model, lifted, forcing);
}

/// Semi-Lagrangian advection of a scalar image by `velocity` over one dt,
/// with periodic bilinear interpolation at the departure points.
inline Vector scalar_transport(const FluidModel& model, const Vector& image, const Vector& velocity) {
  const Grid2D& g = model.grid;
  require_scalar_field(g, image, "image");
  require_velocity_field(g, velocity, "velocity");
  detail::require_cfl(model, velocity);
  const Index m = g.pixels();
  const double scale = model.dt / g.spacing;
  Vector out(m);
  for (Index y = 0; y < g.height; ++y) {
    for (Index x = 0; x < g.width; ++x) {
      const Index s = g.index(x, y);
      const double px = static_cast<double>(x) - scale * velocity[s];
      const double py = static_cast<double>(y) - scale * velocity[m + s];
      const double fx = std::floor(px);
      const double fy = std::floor(py);
      const double ax = px - fx;
      const double ay = py - fy;
      const auto ix = static_cast<Index>(fx);
      const auto iy = static_cast<Index>(fy);
      out[s] = (1.0 - ay) * ((1.0 - ax) * image[g.index(ix, iy)] + ax * image[g.index(ix + 1, iy)]) +
               ay * ((1.0 - ax) * image[g.index(ix, iy + 1)] + ax * image[g.index(ix + 1, iy + 1)]);
    }
  }
  return out;
}

/// Band-limited random divergence-free velocity with peak pixel speed
/// `max_speed`. Used as the seeded initial condition theta_1.
inline Vector band_limited_velocity(const FluidModel& model, double kmin, double kmax,
                                    double max_speed, std::uint64_t seed) {
  const Vector vorticity = spectral::band_limited_scalar(model.grid, kmin, kmax, seed);
  Vector velocity = model.biot_savart(vorticity);
  const Index m = model.grid.pixels();
  double vmax = 0.0;
  for (Index s = 0; s < m; ++s) vmax = std::max(vmax, std::hypot(velocity[s], velocity[m + s]));
  if (vmax > 0.0) velocity *= max_speed / vmax;
  return velocity;
}

}  // namespace uapod
