#pragma once

// Brightness-constancy observation model, the gradient (smoothness) prior,
// and per-pixel diagnostic maps of the optic-flow posterior.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

#include "uapod/errors.hpp"
#include "uapod/grid.hpp"
#include "uapod/hmm.hpp"
#include "uapod/operator.hpp"

namespace uapod {

/// Two consecutive scalar frames on one grid.
struct ImagePair {
  Grid2D grid;
  Vector frame_a;
  Vector frame_b;

  Vector intensity_variation() const { return frame_b - frame_a; }
};

/// Central-difference image gradient of `image`, blocked [I_x; I_y].
inline Vector image_gradient(const Grid2D& g, const Vector& image) {
  require_scalar_field(g, image, "image");
  const Index m = g.pixels();
  const double c = 0.5 / g.spacing;
  Vector out(2 * m);
  for (Index y = 0; y < g.height; ++y) {
    for (Index x = 0; x < g.width; ++x) {
      const Index s = g.index(x, y);
      out[s] = c * (image[g.index(x + 1, y)] - image[g.index(x - 1, y)]);
      out[m + s] = c * (image[g.index(x, y + 1)] - image[g.index(x, y - 1)]);
    }
  }
  return out;
}

/// Linearized brightness constancy: y = H x + noise with
/// (H x)_s = -frame_interval * (I_x x_u + I_y x_v)_s, gradients taken on
/// frame_a, offset xi = 0. `frame_interval` converts velocity to
/// displacement per frame; 1 means velocity is already in pixels per frame.
inline LinearObservation build_observation(const ImagePair& pair, double noise_var,
                                           double frame_interval = 1.0) {
  const Grid2D& g = pair.grid;
  if (pair.frame_a.size() != g.pixels() || pair.frame_b.size() != g.pixels()) {
    throw GridMismatch("image pair frames do not match the grid");
  }
  const Index m = g.pixels();
  auto grad = std::make_shared<const Vector>(-frame_interval * image_gradient(g, pair.frame_a));
  const double frob = grad->squaredNorm();
  LinearMap h(
      m, 2 * m,
      [grad, m](const Vector& in, Vector& out) {
        out = grad->head(m).cwiseProduct(in.head(m)) + grad->tail(m).cwiseProduct(in.tail(m));
      },
      [grad, m](const Vector& in, Vector& out) {
        out.resize(2 * m);
        out.head(m) = grad->head(m).cwiseProduct(in);
        out.tail(m) = grad->tail(m).cwiseProduct(in);
      },
      frob);
  LinearObservation obs{std::move(h), Vector::Zero(m), noise_var, pair.intensity_variation()};
  obs.validate();
  return obs;
}

struct GradientPriorSpec {
  double weight = 1.0;  // lambda
};

/// Precision lambda D'D, D the periodic forward differences of both velocity
/// components along both axes. Equals -lambda times the 5-point Laplacian on
/// each component; its null space is the per-component constants.
inline DegenerateGaussianPrior gradient_prior(const GradientPriorSpec& spec, const Grid2D& g) {
  if (!(spec.weight > 0.0)) throw ValidationError("lambda", "prior weight must be positive");
  g.validate();
  const Index m = g.pixels();
  const double c = spec.weight / (g.spacing * g.spacing);
  auto nb = std::make_shared<const Neighbours>(g);
  auto apply = [nb, m, c](const Vector& in, Vector& out) {
    out.resize(2 * m);
    const Index* e = nb->east.data();
    const Index* w = nb->west.data();
    const Index* no = nb->north.data();
    const Index* so = nb->south.data();
    for (Index comp = 0; comp < 2; ++comp) {
      const double* f = in.data() + comp * m;
      double* o = out.data() + comp * m;
      for (Index s = 0; s < m; ++s) {
        o[s] = c * (4.0 * f[s] - f[e[s]] - f[w[s]] - f[no[s]] - f[so[s]]);
      }
    }
  };
  const double trace = 4.0 * c * static_cast<double>(2 * m);
  Matrix null_space = Matrix::Zero(2 * m, 2);
  const double unit = 1.0 / std::sqrt(static_cast<double>(m));
  null_space.col(0).head(m).setConstant(unit);
  null_space.col(1).tail(m).setConstant(unit);
  return {SymmetricOperator(LinearOperator(2 * m, apply, trace)), std::move(null_space)};
}

/// ||D v||^2 with D the forward differences; <v, q v> = lambda ||D v||^2.
inline double forward_difference_energy(const Grid2D& g, const Vector& velocity) {
  require_velocity_field(g, velocity, "velocity");
  const Index m = g.pixels();
  double acc = 0.0;
  for (Index comp = 0; comp < 2; ++comp) {
    const Index off = comp * m;
    for (Index y = 0; y < g.height; ++y) {
      for (Index x = 0; x < g.width; ++x) {
        const double f = velocity[off + g.index(x, y)];
        const double dx = (velocity[off + g.index(x + 1, y)] - f) / g.spacing;
        const double dy = (velocity[off + g.index(x, y + 1)] - f) / g.spacing;
        acc += dx * dx + dy * dy;
      }
    }
  }
  return acc;
}

/// 0.1 times the mean squared gradient magnitude of `image`.
inline double default_prior_weight(const Grid2D& g, const Vector& image) {
  return 0.1 * image_gradient(g, image).squaredNorm() / static_cast<double>(g.pixels());
}

/// Frobenius norm of the 2x2 posterior covariance block of each pixel.
/// Two covariance-column solves per pixel.
inline Vector covariance_frobenius_map(const GaussianPosterior& post, const Grid2D& g) {
  const Index m = g.pixels();
  if (post.dim() != 2 * m) throw DimensionMismatch("posterior dimension differs from 2*pixels");
  Vector out(m);
  for (Index s = 0; s < m; ++s) {
    const Vector cu = covariance_column(post, s);
    const Vector cv = covariance_column(post, m + s);
    const double a = cu[s];
    const double b = cu[m + s];
    const double c = cv[s];
    const double d = cv[m + s];
    out[s] = std::sqrt(a * a + b * b + c * c + d * d);
  }
  return out;
}

/// Marks pixels where the normalized error is undefined (zero truth).
inline constexpr double kUndefinedPixel = std::numeric_limits<double>::quiet_NaN();

/// Per-pixel |truth_s - mean_s|^2 / |truth_s|^2 of the bivariate vectors;
/// kUndefinedPixel where truth_s = 0.
inline Vector pixel_error_map(const Vector& truth, const Vector& mean, const Grid2D& g) {
  require_velocity_field(g, truth, "truth");
  require_velocity_field(g, mean, "mean");
  const Index m = g.pixels();
  Vector out(m);
  for (Index s = 0; s < m; ++s) {
    const double tn = truth[s] * truth[s] + truth[m + s] * truth[m + s];
    if (tn == 0.0) {
      out[s] = kUndefinedPixel;
      continue;
    }
    const double du = truth[s] - mean[s];
    const double dv = truth[m + s] - mean[m + s];
    out[s] = (du * du + dv * dv) / tn;
  }
  return out;
}

namespace detail {

inline Vector average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  Vector ranks(static_cast<Index>(n));
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) ranks[static_cast<Index>(order[q])] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Spearman rank correlation over entries where both inputs are finite.
/// Ties receive average ranks.
inline double spearman_rank_correlation(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionMismatch("spearman: length mismatch");
  std::vector<double> xa;
  std::vector<double> xb;
  for (Index i = 0; i < a.size(); ++i) {
    if (std::isfinite(a[i]) && std::isfinite(b[i])) {
      xa.push_back(a[i]);
      xb.push_back(b[i]);
    }
  }
  if (xa.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  Vector ra = detail::average_ranks(xa);
  Vector rb = detail::average_ranks(xb);
  ra.array() -= ra.mean();
  rb.array() -= rb.mean();
  const double denom = ra.norm() * rb.norm();
  return denom > 0.0 ? ra.dot(rb) / denom : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace uapod
