#pragma once

// Domain types shared by every geopot module: instrument sites, the model
// parameter vector, observed/missing index bookkeeping and gridded surfaces.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "geopot/error.hpp"

namespace geopot {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Planar location in projected meters.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

double distance(const Point& a, const Point& b) noexcept;

/// Instrument locations, their (possibly missing) readings and covariates.
///
/// Missing readings are stored as NaN and flagged in the mask. At least one
/// reading must be observed. Coincident coordinates are accepted and reported
/// through has_duplicates().
class SiteSet {
 public:
  SiteSet(std::vector<Point> coords, Vector values, std::vector<bool> missing, Matrix covariates);

  /// Convenience constructor: NaN entries of `values` are treated as missing.
  SiteSet(std::vector<Point> coords, Vector values, Matrix covariates);

  Index size() const noexcept { return static_cast<Index>(coords_.size()); }
  Index num_missing() const noexcept { return num_missing_; }
  Index num_observed() const noexcept { return size() - num_missing_; }
  Index num_covariates() const noexcept { return covariates_.cols(); }

  const std::vector<Point>& coords() const noexcept { return coords_; }
  const Vector& values() const noexcept { return values_; }
  const std::vector<bool>& missing_mask() const noexcept { return missing_; }
  bool is_missing(Index i) const { return missing_[static_cast<std::size_t>(i)]; }
  const Matrix& covariates() const noexcept { return covariates_; }
  bool has_duplicates() const noexcept { return has_duplicates_; }

  /// Same sites, mask and covariates with new readings. Entries at masked
  /// positions are ignored and stored as NaN.
  SiteSet with_values(const Vector& values) const;

  /// Sites reordered so that new position i holds old position order[i].
  SiteSet permuted(std::span<const Index> order) const;

 private:
  std::vector<Point> coords_;
  Vector values_;
  std::vector<bool> missing_;
  Matrix covariates_;
  Index num_missing_ = 0;
  bool has_duplicates_ = false;
};

/// Full parameterization (mu, beta, sigma2_eps, gamma, theta, phi, alpha).
///
/// Free-parameter order, used by the information matrix and every report:
/// mu (unless fixed to zero), beta_1..beta_b, sigma2_eps, gamma, theta, phi.
/// alpha is a fixed shape parameter and never estimated.
struct ParamVector {
  double mu = 0.0;
  Vector beta;
  double sigma2_eps = 1.0;
  double gamma = 1.0;
  double theta = 1.0;
  double phi = 1.0;
  double alpha = 1.0;
  bool mu_fixed_zero = false;

  Index num_free() const noexcept;
  std::vector<std::string> free_labels() const;
  Vector free_values() const;
  ParamVector with_free_values(const Vector& values) const;

  /// Throws InvalidArgument unless sigma2_eps >= 0 and theta, phi, alpha > 0.
  void validate() const;
};

/// Observed / missing split of site indices. Both lists are strictly
/// increasing and together cover 0..N-1 exactly once.
class IndexPartition {
 public:
  IndexPartition(std::vector<Index> observed, std::vector<Index> missing);

  const std::vector<Index>& observed() const noexcept { return observed_; }
  const std::vector<Index>& missing() const noexcept { return missing_; }
  Index size() const noexcept { return static_cast<Index>(observed_.size() + missing_.size()); }

  /// v^(1): entries of v at observed positions.
  Vector gather(const Vector& v) const;
  /// B^(1): observed rows and columns of B (extraction, never inversion).
  Matrix gather_block(const Matrix& B) const;
  Matrix gather_rows(const Matrix& B) const;
  Matrix gather_cols(const Matrix& B) const;
  /// Inverse of gather: observed entries from `sub`, the rest set to `fill`.
  Vector scatter(const Vector& sub, double fill) const;

 private:
  std::vector<Index> observed_;
  std::vector<Index> missing_;
};

/// Symmetric matrix of pairwise Euclidean distances.
Matrix distance_matrix(const SiteSet& sites);
Matrix distance_matrix(std::span<const Point> points);

/// Throws AllMissing when no reading is observed.
IndexPartition partition(const SiteSet& sites);

/// Largest and median pairwise distance (0 for a single site).
double max_pairwise_distance(const Matrix& H);
double median_pairwise_distance(const Matrix& H);

/// Regular lattice of nodes (x0 + i*cell, y0 + j*cell), i < nx, j < ny.
struct GridSpec {
  double x0 = 0.0;
  double y0 = 0.0;
  double cell = 1.0;
  Index nx = 1;
  Index ny = 1;

  Index num_cells() const noexcept { return nx * ny; }
  /// Row-major, y-outer: cell k sits at ix = k % nx, iy = k / nx.
  Point node(Index k) const noexcept;
  std::vector<Point> nodes() const;
  void validate() const;

  /// Bounding box of the points inflated by `margin` on each side.
  static GridSpec covering(std::span<const Point> points, double margin, double cell);

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

enum class SurfaceKind { Potential, Conditional, StdDev, Latent, Covariate };

const char* to_string(SurfaceKind kind) noexcept;

/// Gridded field. Masked cells hold NaN.
struct Surface {
  GridSpec grid;
  Vector values;
  SurfaceKind kind = SurfaceKind::Potential;

  Surface() = default;
  Surface(GridSpec g, Vector v, SurfaceKind k);

  Index num_masked() const noexcept;
};

}  // namespace geopot
