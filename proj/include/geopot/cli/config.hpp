#pragma once

// Run configuration: flat `key = value` text with `#` comments.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace geopot::cli {

struct RunConfig {
  // Inputs
  std::string data;                          // x,y,value,<covariates...>
  std::vector<std::string> grid_covariates;  // one raster per covariate, data column order
  std::string params;                        // params.csv of an earlier fit; refit when empty
  std::string sample;                        // sample.csv of an earlier bootstrap
  std::string potential;                     // potential grid for `total`; skips the fit
  std::string streets;                       // x,y point list for `covar-dist`

  // Coordinates: "meters", or "degrees" (lon, lat) mapped to a local
  // equirectangular frame at (ref_lon, ref_lat).
  std::string coordinates = "meters";
  std::optional<double> ref_lon;
  std::optional<double> ref_lat;
  bool rescale_covariates = true;

  // Model and EM
  bool mu_fixed_zero = false;
  double alpha = 1.0;
  std::optional<double> phi;  // interaction range for `total` on a supplied potential grid
  std::optional<double> theta_lo;
  std::optional<double> theta_hi;
  std::optional<double> phi_lo;
  std::optional<double> phi_hi;
  int max_iter = 500;
  double tol = 1e-6;
  int multistart = 0;

  // Inference
  int replicates = 200;
  std::string filter = "phi_above_max_distance";  // | phi_above | none
  double filter_threshold = 0.0;
  double level = 0.95;
  std::uint64_t seed = 1;

  // Prediction grid: covering box of the sites inflated by grid_margin * theta
  // unless the origin and size are given, or a covariate raster fixes it.
  std::optional<double> grid_x0;
  std::optional<double> grid_y0;
  double grid_cell = 50.0;
  std::optional<int> grid_nx;
  std::optional<int> grid_ny;
  double grid_margin = 3.0;
  std::string uncertainty = "auto";  // | wald | bootstrap | none
  int draws = 200;

  // Total potential
  int max_n = 500;
  double min_distance = 0.0;
  double rel_tol = 1e-3;

  // covar-dist: 1 / (d_min / distance_unit + offset)
  double distance_unit = 1000.0;
  double distance_offset = 0.1;

  std::string out = ".";
  unsigned threads = 0;

  /// Range checks and existence of every referenced file. Throws ConfigError
  /// or IoError.
  void validate() const;
};

/// Throws ConfigError (with the line number) on unknown or repeated keys
/// and malformed values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical text: every key in declaration order, unset optionals omitted.
std::string serialize(const RunConfig& config);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

}  // namespace geopot::cli
