#pragma once

#include <string>
#include <vector>

#include "uapod/errors.hpp"
#include "uapod/operator.hpp"

namespace uapod {

/// Uniform periodic pixel grid. Scalar fields have m = width*height entries,
/// row-major (s = iy*width + ix). Velocity fields have n = 2m entries stored
/// in blocks: all u components, then all v components.
struct Grid2D {
  Index width = 0;
  Index height = 0;
  double spacing = 1.0;

  Grid2D() = default;
  Grid2D(Index w, Index h, double dx = 1.0) : width(w), height(h), spacing(dx) { validate(); }

  void validate() const {
    if (width < 4 || height < 4) throw ValidationError("grid", "width and height must be >= 4");
    if (!(spacing > 0.0)) throw ValidationError("grid", "spacing must be positive");
  }

  Index pixels() const noexcept { return width * height; }
  Index velocity_dim() const noexcept { return 2 * pixels(); }

  Index index(Index ix, Index iy) const noexcept {
    const Index x = ((ix % width) + width) % width;
    const Index y = ((iy % height) + height) % height;
    return y * width + x;
  }

  bool operator==(const Grid2D& o) const noexcept {
    return width == o.width && height == o.height && spacing == o.spacing;
  }
};

/// Periodic neighbour indices of every pixel, for stencil loops.
struct Neighbours {
  std::vector<Index> east, west, north, south;

  explicit Neighbours(const Grid2D& g) {
    const auto m = static_cast<std::size_t>(g.pixels());
    east.resize(m);
    west.resize(m);
    north.resize(m);
    south.resize(m);
    for (Index y = 0; y < g.height; ++y) {
      for (Index x = 0; x < g.width; ++x) {
        const auto s = static_cast<std::size_t>(g.index(x, y));
        east[s] = g.index(x + 1, y);
        west[s] = g.index(x - 1, y);
        north[s] = g.index(x, y + 1);
        south[s] = g.index(x, y - 1);
      }
    }
  }
};

inline void require_scalar_field(const Grid2D& g, const Vector& f, const char* name) {
  if (f.size() != g.pixels()) {
    throw DimensionMismatch(std::string(name) + " must have width*height entries");
  }
}

inline void require_velocity_field(const Grid2D& g, const Vector& f, const char* name) {
  if (f.size() != g.velocity_dim()) {
    throw DimensionMismatch(std::string(name) + " must have 2*width*height entries");
  }
}

/// Blocked [u; v] layout to per-pixel interleaved (u0, v0, u1, v1, ...).
inline Vector interleave_components(const Vector& blocked) {
  const Index m = blocked.size() / 2;
  Vector out(blocked.size());
  for (Index s = 0; s < m; ++s) {
    out[2 * s] = blocked[s];
    out[2 * s + 1] = blocked[m + s];
  }
  return out;
}

inline Vector deinterleave_components(const Vector& interleaved) {
  const Index m = interleaved.size() / 2;
  Vector out(interleaved.size());
  for (Index s = 0; s < m; ++s) {
    out[s] = interleaved[2 * s];
    out[m + s] = interleaved[2 * s + 1];
  }
  return out;
}

}  // namespace uapod
