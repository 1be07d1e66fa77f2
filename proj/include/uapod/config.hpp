#pragma once

// Run configuration: line-oriented `key = value` text with `#` comments.
// Every key is optional; `auto` is accepted where a value is derived from
// the data (dt, sigma2, lambda, fig1_t).

#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "uapod/errors.hpp"

namespace uapod {

struct RunConfig {
  // Grid and dynamics.
  long width = 32;
  long height = 32;
  long T = 20;
  long M = 1;
  double alpha = 0.05;
  std::optional<double> dt;  // auto: Courant 0.5 at max_speed, diffusion number <= 0.2
  double max_speed = 1.0;    // peak pixel speed of the initial field
  double flow_kmin = 1.0;
  double flow_kmax = 4.0;
  double image_kmin = 1.0;
  double image_kmax = 4.0;
  long render_supersample = 1;  // images transported on a grid refined by this factor

  // Observation and prior.
  std::optional<double> sigma2;  // auto: mean clean variation power / snr
  double snr = 10.0;
  std::string prior = "gradient";
  std::optional<double> lambda;  // auto: 0.1 * dt^2 * mean |grad I|^2 / sigma2

  // Reduction.
  long k_max = 20;
  long krylov_dim = 60;
  double cg_tol = 1e-8;
  long cg_max_iter = 0;  // 0: 10 sqrt(n)
  double eig_tol = 1e-6;

  std::uint64_t seed = 1;
  std::optional<long> fig1_t;  // 1-based; auto: T/2
  std::string output_dir = "uapod_out";

  long pixels() const noexcept { return width * height; }
  long state_dim() const noexcept { return 2 * pixels(); }
  long fig1_index() const noexcept { return fig1_t ? *fig1_t : std::max(1L, T / 2); }

  /// Throws ValidationError naming the first offending field.
  void validate() const {
    if (width < 4) throw ValidationError("width", "must be >= 4");
    if (height < 4) throw ValidationError("height", "must be >= 4");
    if (T < 1) throw ValidationError("T", "must be >= 1");
    if (M < 1) throw ValidationError("M", "must be >= 1");
    if (!(alpha >= 0.0)) throw ValidationError("alpha", "must be >= 0");
    if (dt && !(*dt > 0.0)) throw ValidationError("dt", "must be > 0");
    if (!(max_speed > 0.0)) throw ValidationError("max_speed", "must be > 0");
    if (!(flow_kmin >= 0.0 && flow_kmax >= flow_kmin)) {
      throw ValidationError("flow_kmax", "need 0 <= flow_kmin <= flow_kmax");
    }
    if (!(image_kmin >= 0.0 && image_kmax >= image_kmin)) {
      throw ValidationError("image_kmax", "need 0 <= image_kmin <= image_kmax");
    }
    if (render_supersample < 1) throw ValidationError("render_supersample", "must be >= 1");
    if (sigma2 && !(*sigma2 > 0.0)) throw ValidationError("sigma2", "must be > 0");
    if (!(snr > 0.0)) throw ValidationError("snr", "must be > 0");
    if (prior != "gradient") throw ValidationError("prior", "only 'gradient' is available");
    if (lambda && !(*lambda > 0.0)) throw ValidationError("lambda", "must be > 0");
    if (k_max < 1) throw ValidationError("k_max", "must be >= 1");
    if (krylov_dim < k_max) throw ValidationError("krylov_dim", "must be >= k_max");
    if (krylov_dim > state_dim()) throw ValidationError("krylov_dim", "must be <= n = 2*width*height");
    if (!(cg_tol > 0.0)) throw ValidationError("cg_tol", "must be > 0");
    if (cg_max_iter < 0) throw ValidationError("cg_max_iter", "must be >= 0");
    if (!(eig_tol > 0.0)) throw ValidationError("eig_tol", "must be > 0");
    if (fig1_t && (*fig1_t < 1 || *fig1_t > T)) throw ValidationError("fig1_t", "must be in 1..T");
    if (output_dir.empty()) throw ValidationError("output_dir", "must not be empty");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, std::string_view key) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("invalid value '" + std::string(text) + "' for " + std::string(key), line);
  }
  return value;
}

}  // namespace detail

/// Parse configuration text. Unknown keys and malformed lines raise
/// ParseError with the line number; out-of-range values raise
/// ValidationError with the field name.
inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string_view key = detail::trim(line.substr(0, eq));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError("expected 'key = value'", line_no);

    auto as_long = [&] { return detail::parse_number<long>(value, line_no, key); };
    auto as_double = [&] { return detail::parse_number<double>(value, line_no, key); };
    auto auto_or_double = [&]() -> std::optional<double> {
      if (value == "auto") return std::nullopt;
      return as_double();
    };

    if (key == "width") cfg.width = as_long();
    else if (key == "height") cfg.height = as_long();
    else if (key == "T") cfg.T = as_long();
    else if (key == "M") cfg.M = as_long();
    else if (key == "alpha") cfg.alpha = as_double();
    else if (key == "dt") cfg.dt = auto_or_double();
    else if (key == "max_speed") cfg.max_speed = as_double();
    else if (key == "flow_kmin") cfg.flow_kmin = as_double();
    else if (key == "flow_kmax") cfg.flow_kmax = as_double();
    else if (key == "image_kmin") cfg.image_kmin = as_double();
    else if (key == "image_kmax") cfg.image_kmax = as_double();
    else if (key == "render_supersample") cfg.render_supersample = as_long();
    else if (key == "sigma2") cfg.sigma2 = auto_or_double();
    else if (key == "snr") cfg.snr = as_double();
    else if (key == "prior") cfg.prior = std::string(value);
    else if (key == "lambda") cfg.lambda = auto_or_double();
    else if (key == "k_max") cfg.k_max = as_long();
    else if (key == "krylov_dim") cfg.krylov_dim = as_long();
    else if (key == "cg_tol") cfg.cg_tol = as_double();
    else if (key == "cg_max_iter") cfg.cg_max_iter = as_long();
    else if (key == "eig_tol") cfg.eig_tol = as_double();
    else if (key == "seed") cfg.seed = detail::parse_number<std::uint64_t>(value, line_no, key);
    else if (key == "fig1_t") {
      if (value == "auto") cfg.fig1_t.reset();
      else cfg.fig1_t = as_long();
    } else if (key == "output_dir") cfg.output_dir = std::string(value);
    else throw ParseError("unknown key '" + std::string(key) + "'", line_no);
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  auto opt = [](const auto& o) -> nlohmann::ordered_json {
    if (o) return *o;
    return "auto";
  };
  return nlohmann::ordered_json{
      {"width", c.width},         {"height", c.height},         {"T", c.T},
      {"M", c.M},                 {"alpha", c.alpha},           {"dt", opt(c.dt)},
      {"max_speed", c.max_speed}, {"flow_kmin", c.flow_kmin},   {"flow_kmax", c.flow_kmax},
      {"image_kmin", c.image_kmin}, {"image_kmax", c.image_kmax}, {"render_supersample", c.render_supersample},
      {"sigma2", opt(c.sigma2)},
      {"snr", c.snr},             {"prior", c.prior},           {"lambda", opt(c.lambda)},
      {"k_max", c.k_max},         {"krylov_dim", c.krylov_dim}, {"cg_tol", c.cg_tol},
      {"cg_max_iter", c.cg_max_iter}, {"eig_tol", c.eig_tol},   {"seed", c.seed},
      {"fig1_t", c.fig1_index()}, {"output_dir", c.output_dir}};
}

}  // namespace uapod
