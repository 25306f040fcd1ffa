#pragma once

// CSV formats of the command-line tool: site data, grids, point lists and
// parameter tables. Floats are written with 17 significant digits; missing
// and masked values are empty fields.

#include <string>
#include <vector>

#include "geopot/core.hpp"

namespace geopot::cli {

/// %.17g through std::to_chars; empty for NaN.
std::string format_double(double v);

/// Local equirectangular frame for longitude/latitude input.
struct GeoFrame {
  bool degrees = false;
  double ref_lon = 0.0;
  double ref_lat = 0.0;

  /// Identity in meters mode.
  Point to_local(double x, double y) const;
  Point from_local(const Point& p) const;
};

/// Min/max rescaling of covariates to [0, 1] over the observed sites.
struct Rescaling {
  std::vector<std::string> names;
  Vector offset;  // subtracted
  Vector scale;   // then divided by; 1 for a constant column

  Matrix apply(const Matrix& X) const;
  Matrix invert(const Matrix& Z) const;
  static Rescaling identity(std::vector<std::string> names);
};

struct DataTable {
  SiteSet sites;  // local coordinates, rescaled covariates
  std::vector<std::string> covariate_names;
  Rescaling rescaling;
  std::vector<Point> input_coords;  // as read
  Matrix input_covariates;
};

/// Header x,y,value,<cov...>; empty value = missing. Throws ParseError with
/// the line number, DimensionMismatch on ragged rows, IoError.
DataTable read_data(const std::string& path, const GeoFrame& frame, bool rescale);

/// Writes `values` in the layout of the table's source file, coordinates
/// and covariates exactly as read.
std::string format_data(const DataTable& table, const Vector& values);

/// Header x,y,value, row-major with y outer. The lattice is recovered from
/// the coordinates and checked. Throws ParseError or DimensionMismatch.
Surface read_grid(const std::string& path, SurfaceKind kind);
std::string format_grid(const Surface& surface);

/// Header x,y.
std::vector<Point> read_points(const std::string& path, const GeoFrame& frame);

/// One row per parameter: label,estimate,lcl,ucl.
struct ParamRow {
  std::string label;
  double estimate = 0.0;
  double lcl = 0.0;
  double ucl = 0.0;
};
std::string format_params(const std::vector<ParamRow>& rows);
std::vector<ParamRow> read_param_rows(const std::string& path);

/// Rebuilds a ParamVector from params.csv rows; the label set must match
/// the free parameters implied by mu_fixed_zero and the covariate count.
ParamVector params_from_rows(const std::vector<ParamRow>& rows, bool mu_fixed_zero, double alpha,
                             Index num_covariates);

/// Labeled square matrix: header ",<labels>", one row per label.
std::string format_matrix(const std::vector<std::string>& labels, const Matrix& m);

/// Reads a parameter sample written by `bootstrap` (kept rows only).
std::vector<ParamVector> read_sample(const std::string& path, const ParamVector& like);

}  // namespace geopot::cli
