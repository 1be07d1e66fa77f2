#pragma once

// End-to-end experiment: simulate a decaying 2D turbulent flow, transport a
// scalar image with it, build optic-flow observations and their Gaussian
// posteriors, compute the snapshot, posterior-aware and ground-truth POD
// bases, and write error curves, diagnostic maps and run metadata.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uapod/config.hpp"
#include "uapod/errors.hpp"
#include "uapod/field_io.hpp"
#include "uapod/fluidsim.hpp"
#include "uapod/hmm.hpp"
#include "uapod/opticflow.hpp"
#include "uapod/pod.hpp"

namespace uapod {

/// A pipeline failure, tagged with the stage that raised it.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Normalized reconstruction errors of the three bases for k = 1..k_max.
struct ErrorCurve {
  struct Row {
    Index k = 0;
    double snapshot = 0.0;
    double posterior = 0.0;
    double groundtruth = 0.0;
  };
  std::vector<Row> rows;

  static constexpr const char* kHeader = "k,error_snapshot,error_posterior,error_groundtruth";

  std::string to_csv() const {
    std::string out = std::string(kHeader) + "\n";
    char buf[128];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g\n", static_cast<long>(r.k), r.snapshot,
                    r.posterior, r.groundtruth);
      out += buf;
    }
    return out;
  }
};

/// Quantities the pipeline derives when the configuration says `auto`.
struct ResolvedParameters {
  double dt = 0.0;
  double sigma2 = 0.0;
  double lambda = 0.0;
  long fig1_t = 0;
};

struct PipelineResult {
  RunConfig config;
  ResolvedParameters resolved;
  ErrorCurve curve;
  StateTrajectory truth;
  StateTrajectory posterior_means;
  ReducedBasis snapshot;
  ReducedBasis posterior;
  ReducedBasis groundtruth;
  /// Diagnostic maps at fig1_t (scalar fields, m entries).
  Vector covariance_map;
  Vector error_map;
  nlohmann::ordered_json metadata;
};

struct PipelineOptions {
  bool write_outputs = true;
  bool compute_maps = true;
};

namespace detail {

template <typename F>
auto run_stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream, std::uint64_t{0x5eed}};
  std::uint64_t out = 0;
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out = (std::uint64_t{words[0]} << 32) | words[1];
  return out;
}

inline nlohmann::ordered_json vector_json(const Vector& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

/// Basis columns as a (width, height, 2k) field: channel 2j+c is component
/// c of column j.
inline Vector basis_field(const Grid2D& g, const ReducedBasis& b) {
  const Index m = g.pixels();
  const Index k = b.rank();
  Vector out(2 * k * m);
  for (Index s = 0; s < m; ++s) {
    for (Index j = 0; j < k; ++j) {
      out[s * 2 * k + 2 * j] = b.columns(s, j);
      out[s * 2 * k + 2 * j + 1] = b.columns(m + s, j);
    }
  }
  return out;
}

}  // namespace detail

inline PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options = {}) {
  detail::run_stage("config", [&] {
    config.validate();
    return 0;
  });

  PipelineResult result;
  result.config = config;
  const Grid2D grid(config.width, config.height, 1.0);
  const Index m = grid.pixels();
  const Index T = config.T;

  // Time step: Courant 0.5 at the initial peak speed, diffusion number <= 0.2.
  double dt = config.dt.value_or(0.0);
  if (!config.dt) {
    dt = 0.5 * grid.spacing / config.max_speed;
    if (config.alpha > 0.0) dt = std::min(dt, 0.2 * grid.spacing * grid.spacing / config.alpha);
  }
  result.resolved.dt = dt;
  result.resolved.fig1_t = config.fig1_index();
  const FluidModel model(grid, config.alpha, dt);

  result.truth = detail::run_stage("simulate", [&] {
    const Vector theta1 = band_limited_velocity(model, config.flow_kmin, config.flow_kmax,
                                                config.max_speed, detail::derive_seed(config.seed, 1));
    return simulate(model, ForcingSequence::decaying(theta1, T));
  });

  // Frames I_1..I_{T+1}; frame t+1 is frame t transported by x_t. Transport
  // runs on a grid refined by `r` in r sub-steps of dt/r, then is sampled back
  // at the coarse pixel centres.
  const std::vector<Vector> frames = detail::run_stage("render", [&] {
    const Index r = config.render_supersample;
    const Grid2D fine(grid.width * r, grid.height * r, grid.spacing / static_cast<double>(r));
    const FluidModel render_model(fine, 0.0, dt / static_cast<double>(r));
    auto sample = [&](const Vector& f) {
      Vector out(m);
      for (Index y = 0; y < grid.height; ++y) {
        for (Index x = 0; x < grid.width; ++x) out[grid.index(x, y)] = f[fine.index(r * x, r * y)];
      }
      return out;
    };
    Vector image = spectral::band_limited_scalar(fine, config.image_kmin, config.image_kmax,
                                                 detail::derive_seed(config.seed, 2));
    std::vector<Vector> f{sample(image)};
    const Index mf = fine.pixels();
    for (Index t = 0; t < T; ++t) {
      const Vector x = result.truth.at(t);
      Vector xf(2 * mf);
      xf.head(mf) = spectral::upsample(grid, x.head(m), r);
      xf.tail(mf) = spectral::upsample(grid, x.tail(m), r);
      for (Index sub = 0; sub < r; ++sub) image = scalar_transport(render_model, image, xf);
      f.push_back(sample(image));
    }
    return f;
  });

  double clean_power = 0.0;
  double grad_power = 0.0;
  for (Index t = 0; t < T; ++t) {
    clean_power += (frames[t + 1] - frames[t]).squaredNorm();
    grad_power += default_prior_weight(grid, frames[t]);
  }
  clean_power /= static_cast<double>(T * m);
  const double sigma2 = config.sigma2.value_or(clean_power / config.snr);
  // Prior precision at 10% of the mean per-pixel data precision dt^2 |grad I|^2 / sigma2.
  const double lambda =
      config.lambda.value_or(dt * dt * grad_power / static_cast<double>(T) / sigma2);
  result.resolved.sigma2 = sigma2;
  result.resolved.lambda = lambda;

  const DegenerateGaussianPrior prior =
      detail::run_stage("prior", [&] { return gradient_prior({lambda}, grid); });
  PosteriorOptions post_opts;
  post_opts.cg_tol = config.cg_tol;
  post_opts.max_iter = static_cast<int>(config.cg_max_iter);

  std::vector<GaussianPosterior> posteriors = detail::run_stage("posterior", [&] {
    std::mt19937_64 noise_rng(detail::derive_seed(config.seed, 3));
    std::normal_distribution<double> noise(0.0, std::sqrt(sigma2));
    std::vector<GaussianPosterior> out;
    out.reserve(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) {
      std::vector<LinearObservation> replicas;
      for (long i = 0; i < config.M; ++i) {
        Vector noisy = frames[t + 1];
        for (Index s = 0; s < m; ++s) noisy[s] += noise(noise_rng);
        replicas.push_back(build_observation({grid, frames[t], noisy}, sigma2, dt));
      }
      out.push_back(posterior_factorized(prior, replicas, post_opts));
    }
    return out;
  });

  Matrix means(grid.velocity_dim(), T);
  int regularized = 0;
  for (Index t = 0; t < T; ++t) {
    means.col(t) = posteriors[t].mean();
    if (posteriors[t].regularization() > 0.0) ++regularized;
  }
  result.posterior_means = StateTrajectory(means, grid);
  const SecondMomentOperator second_moment(posteriors);

  const Index k_max = config.k_max;
  result.snapshot = detail::run_stage(
      "snapshot_basis", [&] { return snapshot_basis(result.posterior_means, std::min<Index>(k_max, T)); });
  result.groundtruth = detail::run_stage(
      "groundtruth_basis", [&] { return snapshot_basis(result.truth, std::min<Index>(k_max, T)); });

  SpectralDecomposition eig;
  TraceEstimate trace;
  result.posterior = detail::run_stage("posterior_basis", [&] {
    eig = lanczos_topk(second_moment.as_operator(), k_max, config.krylov_dim, config.seed,
                       config.eig_tol);
    trace = trace_estimate(second_moment, {TraceMode::hutchinson, 0, 64, config.seed});
    ReducedBasis b;
    b.columns = eig.eigenvectors;
    b.spectrum = eig.eigenvalues;
    b.trailing_mass = trace.value - eig.eigenvalues.sum();
    b.trailing_mass_stderr = trace.std_error;
    return b;
  });

  detail::run_stage("metrics", [&] {
    for (Index k = 1; k <= k_max; ++k) {
      auto err = [&](const ReducedBasis& b) {
        return reconstruction_error(result.truth, b.truncated(std::min(k, b.rank())));
      };
      result.curve.rows.push_back({k, err(result.snapshot), err(result.posterior), err(result.groundtruth)});
    }
    return 0;
  });

  const Index fig_t = result.resolved.fig1_t - 1;
  if (options.compute_maps) {
    detail::run_stage("maps", [&] {
      result.covariance_map = covariance_frobenius_map(posteriors[fig_t], grid);
      result.error_map =
          pixel_error_map(result.truth.at(fig_t), posteriors[fig_t].mean(), grid);
      return 0;
    });
  }

  auto& meta = result.metadata;
  meta["config"] = to_json(config);
  meta["resolved"] = {{"dt", dt},
                      {"sigma2", sigma2},
                      {"lambda", lambda},
                      {"fig1_t", result.resolved.fig1_t},
                      {"n", grid.velocity_dim()},
                      {"m", m},
                      {"clean_variation_power", clean_power}};
  meta["posterior"] = {{"regularized_steps", regularized}};
  meta["lanczos"] = {{"restarts", eig.restarts},
                     {"operator_applies", eig.operator_applies},
                     {"max_residual", eig.residuals.size() ? eig.residuals.maxCoeff() : 0.0}};
  meta["trace"] = {{"value", trace.value}, {"std_error", trace.std_error}, {"exact", trace.exact}};
  meta["spectrum"] = {{"posterior", detail::vector_json(result.posterior.spectrum)},
                      {"snapshot", detail::vector_json(result.snapshot.spectrum)},
                      {"groundtruth", detail::vector_json(result.groundtruth.spectrum)}};
  meta["posterior_trailing_mass"] = {{"value", result.posterior.trailing_mass},
                                     {"std_error", result.posterior.trailing_mass_stderr}};
  meta["snapshot_rank_deficient"] = result.snapshot.rank_deficient;

  if (options.write_outputs) {
    detail::run_stage("write", [&] {
      namespace fs = std::filesystem;
      const fs::path dir(config.output_dir);
      fs::create_directories(dir);
      detail::write_text(dir / "error_curve.csv", result.curve.to_csv());
      detail::write_text(dir / "run_metadata.json", meta.dump(2) + "\n");
      const auto w = static_cast<std::uint32_t>(grid.width);
      const auto h = static_cast<std::uint32_t>(grid.height);
      dump_field(dir / "truth_fig1.fld", interleave_components(result.truth.at(fig_t)), {w, h, 2});
      dump_field(dir / "posterior_mean_fig1.fld", interleave_components(posteriors[fig_t].mean()),
                 {w, h, 2});
      if (options.compute_maps) {
        dump_field(dir / "covariance_map_fig1.fld", result.covariance_map, {w, h, 1});
        dump_field(dir / "error_map_fig1.fld", result.error_map, {w, h, 1});
      }
      for (const auto& [name, basis] :
           {std::pair{"basis_snapshot.fld", &result.snapshot},
            std::pair{"basis_posterior.fld", &result.posterior},
            std::pair{"basis_groundtruth.fld", &result.groundtruth}}) {
        dump_field(dir / name, detail::basis_field(grid, *basis),
                   {w, h, static_cast<std::uint32_t>(2 * basis->rank())});
      }
      return 0;
    });
  }
  return result;
}

}  // namespace uapod
