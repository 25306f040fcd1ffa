#include "geopot/cli/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "geopot/error.hpp"

namespace geopot::cli {

namespace {

constexpr double kEarthRadius = 6371008.8;  // mean radius, meters
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvFile {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;  // source line of each row
};

CsvFile read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read '" + path + "'");
  CsvFile f;
  f.path = path;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (f.header.empty()) {
      if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      f.header = split(line);
      continue;
    }
    auto row = split(line);
    if (row.size() != f.header.size())
      throw Error(ErrorCode::DimensionMismatch, path + ":" + std::to_string(lineno) + ": expected " +
                                                    std::to_string(f.header.size()) + " fields, found " +
                                                    std::to_string(row.size()));
    f.rows.push_back(std::move(row));
    f.lines.push_back(lineno);
  }
  if (f.header.empty()) throw Error(ErrorCode::ParseError, path + ":1: missing header");
  return f;
}

double to_double(const CsvFile& f, std::size_t r, std::size_t c, bool allow_empty) {
  const std::string& s = f.rows[r][c];
  const std::string where = f.path + ":" + std::to_string(f.lines[r]) + ": ";
  if (s.empty()) {
    if (allow_empty) return kNaN;
    throw Error(ErrorCode::ParseError, where + "empty field '" + f.header[c] + "'");
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::ParseError, where + "cannot parse '" + s + "' in column '" + f.header[c] + "'");
  if (!allow_empty && !std::isfinite(v)) throw Error(ErrorCode::ParseError, where + "non-finite '" + f.header[c] + "'");
  return v;
}

void expect_header(const CsvFile& f, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (i >= f.header.size() || f.header[i] != names[i])
      throw Error(ErrorCode::ParseError, f.path + ":1: column " + std::to_string(i + 1) + " must be '" + names[i] + "'");
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return {};
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Point GeoFrame::to_local(double x, double y) const {
  if (!degrees) return {x, y};
  const double rad = std::numbers::pi / 180.0;
  return {kEarthRadius * (x - ref_lon) * rad * std::cos(ref_lat * rad), kEarthRadius * (y - ref_lat) * rad};
}

Point GeoFrame::from_local(const Point& p) const {
  if (!degrees) return p;
  const double rad = std::numbers::pi / 180.0;
  return {ref_lon + p.x / (kEarthRadius * rad * std::cos(ref_lat * rad)), ref_lat + p.y / (kEarthRadius * rad)};
}

Matrix Rescaling::apply(const Matrix& X) const {
  Matrix Z = X;
  for (Index j = 0; j < Z.cols(); ++j) Z.col(j) = (Z.col(j).array() - offset[j]) / scale[j];
  return Z;
}

Matrix Rescaling::invert(const Matrix& Z) const {
  Matrix X = Z;
  for (Index j = 0; j < X.cols(); ++j) X.col(j) = Z.col(j).array() * scale[j] + offset[j];
  return X;
}

Rescaling Rescaling::identity(std::vector<std::string> names) {
  Rescaling r;
  const auto b = static_cast<Index>(names.size());
  r.names = std::move(names);
  r.offset = Vector::Zero(b);
  r.scale = Vector::Ones(b);
  return r;
}

DataTable read_data(const std::string& path, const GeoFrame& frame, bool rescale) {
  const CsvFile f = read_csv(path);
  expect_header(f, {"x", "y", "value"});
  if (f.rows.empty()) throw Error(ErrorCode::ParseError, path + ": no data rows");
  const auto n = static_cast<Index>(f.rows.size());
  const auto b = static_cast<Index>(f.header.size()) - 3;

  std::vector<Point> input, pts;
  Vector values(n);
  Matrix X(n, b);
  for (Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    input.push_back({to_double(f, r, 0, false), to_double(f, r, 1, false)});
    pts.push_back(frame.to_local(input.back().x, input.back().y));
    values[i] = to_double(f, r, 2, true);
    for (Index j = 0; j < b; ++j) X(i, j) = to_double(f, r, static_cast<std::size_t>(3 + j), false);
  }

  std::vector<std::string> names(f.header.begin() + 3, f.header.end());
  Rescaling rs = Rescaling::identity(names);
  if (rescale) {
    for (Index j = 0; j < b; ++j) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (Index i = 0; i < n; ++i) {
        if (std::isnan(values[i])) continue;
        lo = std::min(lo, X(i, j));
        hi = std::max(hi, X(i, j));
      }
      if (!std::isfinite(lo)) continue;  // no observed site; AllMissing is raised below
      rs.offset[j] = lo;
      rs.scale[j] = hi > lo ? hi - lo : 1.0;
    }
  }
  DataTable t{SiteSet(std::move(pts), values, rs.apply(X)), names, rs, std::move(input), X};
  if (t.sites.num_observed() == 0) throw Error(ErrorCode::AllMissing, path + ": every value is missing");
  return t;
}

std::string format_data(const DataTable& table, const Vector& values) {
  if (values.size() != table.sites.size())
    throw Error(ErrorCode::DimensionMismatch, "value count does not match the site count");
  std::string s = "x,y,value";
  for (const auto& n : table.covariate_names) s += "," + n;
  s += "\n";
  const Matrix& X = table.input_covariates;
  for (Index i = 0; i < values.size(); ++i) {
    const Point& p = table.input_coords[static_cast<std::size_t>(i)];
    s += format_double(p.x) + "," + format_double(p.y) + "," + format_double(values[i]);
    for (Index j = 0; j < X.cols(); ++j) s += "," + format_double(X(i, j));
    s += "\n";
  }
  return s;
}

Surface read_grid(const std::string& path, SurfaceKind kind) {
  const CsvFile f = read_csv(path);
  expect_header(f, {"x", "y", "value"});
  if (f.rows.empty()) throw Error(ErrorCode::ParseError, path + ": no grid rows");
  const auto n = static_cast<Index>(f.rows.size());
  std::vector<Point> pts;
  Vector v(n);
  for (Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    pts.push_back({to_double(f, r, 0, false), to_double(f, r, 1, false)});
    v[i] = to_double(f, r, 2, true);
  }
  GridSpec g;
  g.x0 = pts[0].x;
  g.y0 = pts[0].y;
  g.nx = 1;
  while (g.nx < n && pts[static_cast<std::size_t>(g.nx)].y == g.y0) ++g.nx;
  if (n % g.nx != 0) throw Error(ErrorCode::DimensionMismatch, path + ": rows do not form a full lattice");
  g.ny = n / g.nx;
  if (g.nx > 1) g.cell = pts[1].x - pts[0].x;
  else if (g.ny > 1) g.cell = pts[1].y - pts[0].y;
  if (!(g.cell > 0.0)) throw Error(ErrorCode::DimensionMismatch, path + ": grid must be row-major with y outer");
  for (Index k = 0; k < n; ++k) {
    const Point want = g.node(k);
    const Point got = pts[static_cast<std::size_t>(k)];
    if (std::abs(want.x - got.x) > 1e-6 * g.cell || std::abs(want.y - got.y) > 1e-6 * g.cell)
      throw Error(ErrorCode::DimensionMismatch,
                  path + ":" + std::to_string(f.lines[static_cast<std::size_t>(k)]) + ": node off the regular lattice");
  }
  return Surface(g, v, kind);
}

std::string format_grid(const Surface& surface) {
  std::string s = "x,y,value\n";
  for (Index k = 0; k < surface.grid.num_cells(); ++k) {
    const Point p = surface.grid.node(k);
    s += format_double(p.x) + "," + format_double(p.y) + "," + format_double(surface.values[k]) + "\n";
  }
  return s;
}

std::vector<Point> read_points(const std::string& path, const GeoFrame& frame) {
  const CsvFile f = read_csv(path);
  expect_header(f, {"x", "y"});
  if (f.rows.empty()) throw Error(ErrorCode::ParseError, path + ": no points");
  std::vector<Point> pts;
  for (std::size_t r = 0; r < f.rows.size(); ++r)
    pts.push_back(frame.to_local(to_double(f, r, 0, false), to_double(f, r, 1, false)));
  return pts;
}

std::string format_params(const std::vector<ParamRow>& rows) {
  std::string s = "parameter,estimate,lcl,ucl\n";
  for (const auto& r : rows)
    s += r.label + "," + format_double(r.estimate) + "," + format_double(r.lcl) + "," + format_double(r.ucl) + "\n";
  return s;
}

std::vector<ParamRow> read_param_rows(const std::string& path) {
  const CsvFile f = read_csv(path);
  expect_header(f, {"parameter", "estimate", "lcl", "ucl"});
  std::vector<ParamRow> rows;
  for (std::size_t r = 0; r < f.rows.size(); ++r)
    rows.push_back({f.rows[r][0], to_double(f, r, 1, false), to_double(f, r, 2, true), to_double(f, r, 3, true)});
  return rows;
}

ParamVector params_from_rows(const std::vector<ParamRow>& rows, bool mu_fixed_zero, double alpha,
                             Index num_covariates) {
  ParamVector p;
  p.mu_fixed_zero = mu_fixed_zero;
  p.alpha = alpha;
  p.beta = Vector::Zero(num_covariates);
  const auto labels = p.free_labels();
  if (rows.size() != labels.size())
    throw Error(ErrorCode::DimensionMismatch, "params file has " + std::to_string(rows.size()) + " rows, expected " +
                                                  std::to_string(labels.size()));
  Vector v(static_cast<Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (rows[i].label != labels[i])
      throw Error(ErrorCode::DimensionMismatch, "params file row " + std::to_string(i + 1) + " is '" + rows[i].label +
                                                    "', expected '" + labels[i] + "'");
    v[static_cast<Index>(i)] = rows[i].estimate;
  }
  p = p.with_free_values(v);
  p.validate();
  return p;
}

std::string format_matrix(const std::vector<std::string>& labels, const Matrix& m) {
  std::string s;
  for (const auto& l : labels) s += "," + l;
  s += "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    s += labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) s += "," + format_double(m(i, j));
    s += "\n";
  }
  return s;
}

std::vector<ParamVector> read_sample(const std::string& path, const ParamVector& like) {
  const CsvFile f = read_csv(path);
  const auto labels = like.free_labels();
  std::vector<std::string> want{"replicate", "converged", "kept"};
  want.insert(want.end(), labels.begin(), labels.end());
  expect_header(f, want);
  std::vector<ParamVector> out;
  for (std::size_t r = 0; r < f.rows.size(); ++r) {
    if (f.rows[r][2] != "1") continue;
    Vector v(static_cast<Index>(labels.size()));
    for (std::size_t j = 0; j < labels.size(); ++j) v[static_cast<Index>(j)] = to_double(f, r, 3 + j, false);
    out.push_back(like.with_free_values(v));
  }
  return out;
}

}  // namespace geopot::cli
