#pragma once

// 2D periodic FFT helpers and band-limited random fields.

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "uapod/grid.hpp"

namespace uapod::spectral {

using Complex = std::complex<double>;
using ComplexField = std::vector<Complex>;  // row-major, width*height

namespace detail {

inline void transform(const Grid2D& g, ComplexField& data, bool inverse) {
  // A fresh FFT object per call: kissfft plans are cached inside it, so
  // nothing is shared between concurrent callers.
  Eigen::FFT<double> fft;
  const Index w = g.width;
  const Index h = g.height;
  std::vector<Complex> in;
  std::vector<Complex> out;
  in.resize(static_cast<std::size_t>(w));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) in[x] = data[y * w + x];
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (Index x = 0; x < w; ++x) data[y * w + x] = out[x];
  }
  in.resize(static_cast<std::size_t>(h));
  for (Index x = 0; x < w; ++x) {
    for (Index y = 0; y < h; ++y) in[y] = data[y * w + x];
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (Index y = 0; y < h; ++y) data[y * w + x] = out[y];
  }
}

}  // namespace detail

inline ComplexField forward(const Grid2D& g, const Vector& field) {
  ComplexField data(static_cast<std::size_t>(g.pixels()));
  for (Index s = 0; s < g.pixels(); ++s) data[s] = field[s];
  detail::transform(g, data, false);
  return data;
}

/// Inverse transform; returns the real part.
inline Vector inverse_real(const Grid2D& g, ComplexField data) {
  detail::transform(g, data, true);
  Vector out(g.pixels());
  for (Index s = 0; s < g.pixels(); ++s) out[s] = data[s].real();
  return out;
}

/// Angular frequency 2 pi k / N of FFT bin `i`, folded to (-pi, pi].
inline double bin_angle(Index i, Index n) {
  const Index k = (i <= n / 2) ? i : i - n;
  return 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
}

/// Signed integer wavenumber of FFT bin `i`.
inline Index bin_wavenumber(Index i, Index n) { return (i <= n / 2) ? i : i - n; }

/// Random real field whose Fourier support is the annulus kmin <= |k| <= kmax
/// (integer wavenumbers, cycles per domain). Unit RMS unless identically zero.
inline Vector band_limited_scalar(const Grid2D& g, double kmin, double kmax, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Vector noise = random_normal(g.pixels(), rng);
  ComplexField spec = forward(g, noise);
  for (Index y = 0; y < g.height; ++y) {
    for (Index x = 0; x < g.width; ++x) {
      const double kx = static_cast<double>(bin_wavenumber(x, g.width));
      const double ky = static_cast<double>(bin_wavenumber(y, g.height));
      const double k = std::hypot(kx, ky);
      if (k < kmin || k > kmax) spec[y * g.width + x] = 0.0;
    }
  }
  Vector field = inverse_real(g, std::move(spec));
  const double rms = std::sqrt(field.squaredNorm() / static_cast<double>(field.size()));
  if (rms > 0.0) field /= rms;
  return field;
}

/// Trigonometric interpolation of a scalar field onto the grid refined by
/// `factor` along both axes. Fine sample (factor*x, factor*y) reproduces
/// coarse sample (x, y); Nyquist bins are split evenly between +/- N/2.
inline Vector upsample(const Grid2D& g, const Vector& field, Index factor) {
  require_scalar_field(g, field, "field");
  if (factor < 1) throw ValidationError("factor", "must be >= 1");
  if (factor == 1) return field;
  const Grid2D fine(g.width * factor, g.height * factor, g.spacing / static_cast<double>(factor));
  const ComplexField coarse = forward(g, field);
  ComplexField spec(static_cast<std::size_t>(fine.pixels()), Complex(0.0, 0.0));
  const double gain = static_cast<double>(factor * factor);
  auto targets = [](Index i, Index n, Index nf) {
    std::vector<std::pair<Index, double>> out;
    const Index k = bin_wavenumber(i, n);
    if (n % 2 == 0 && k == n / 2) {
      out.emplace_back(k, 0.5);
      out.emplace_back(nf - k, 0.5);
    } else {
      out.emplace_back(k < 0 ? nf + k : k, 1.0);
    }
    return out;
  };
  for (Index y = 0; y < g.height; ++y) {
    for (Index x = 0; x < g.width; ++x) {
      const Complex c = coarse[y * g.width + x] * gain;
      for (const auto& [fy, wy] : targets(y, g.height, fine.height)) {
        for (const auto& [fx, wx] : targets(x, g.width, fine.width)) {
          spec[fy * fine.width + fx] += c * (wx * wy);
        }
      }
    }
  }
  return inverse_real(fine, std::move(spec));
}

}  // namespace uapod::spectral
