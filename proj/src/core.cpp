#include "geopot/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>

namespace geopot {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AllMissing: return "AllMissing";
    case ErrorCode::NonPositiveTheta: return "NonPositiveTheta";
    case ErrorCode::AlphaNotOne: return "AlphaNotOne";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::RankDeficientX: return "RankDeficientX";
    case ErrorCode::OptimizerFailure: return "OptimizerFailure";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::NoUncertaintySource: return "NoUncertaintySource";
    case ErrorCode::EmptyFeasibleSet: return "EmptyFeasibleSet";
    case ErrorCode::CovariateCoverageGap: return "CovariateCoverageGap";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

double distance(const Point& a, const Point& b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

// ---------------------------------------------------------------------------
// SiteSet

SiteSet::SiteSet(std::vector<Point> coords, Vector values, std::vector<bool> missing, Matrix covariates)
    : coords_(std::move(coords)), values_(std::move(values)), missing_(std::move(missing)),
      covariates_(std::move(covariates)) {
  const auto n = static_cast<Index>(coords_.size());
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "a site set needs at least one site");
  if (values_.size() != n || static_cast<Index>(missing_.size()) != n)
    throw Error(ErrorCode::DimensionMismatch, "values and mask must have one entry per site");
  if (covariates_.cols() > 0 && covariates_.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "covariate matrix must have one row per site");
  if (covariates_.cols() == 0) covariates_.resize(n, 0);

  std::set<std::pair<double, double>> seen;
  for (Index i = 0; i < n; ++i) {
    const Point& p = coords_[static_cast<std::size_t>(i)];
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw Error(ErrorCode::InvalidArgument, "site coordinates must be finite");
    if (!seen.emplace(p.x, p.y).second) has_duplicates_ = true;
    if (missing_[static_cast<std::size_t>(i)]) {
      values_[i] = std::numeric_limits<double>::quiet_NaN();
      ++num_missing_;
    } else if (!std::isfinite(values_[i])) {
      throw Error(ErrorCode::InvalidArgument, "observed values must be finite");
    }
  }
  if (!covariates_.allFinite()) throw Error(ErrorCode::InvalidArgument, "covariates must be finite");
  if (num_missing_ == n) throw Error(ErrorCode::AllMissing, "every reading is missing");
}

namespace {
std::vector<bool> nan_mask(const Vector& v) {
  std::vector<bool> mask(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) mask[static_cast<std::size_t>(i)] = std::isnan(v[i]);
  return mask;
}
}  // namespace

SiteSet::SiteSet(std::vector<Point> coords, Vector values, Matrix covariates)
    : SiteSet(std::move(coords), values, nan_mask(values), std::move(covariates)) {}

SiteSet SiteSet::with_values(const Vector& values) const {
  if (values.size() != size()) throw Error(ErrorCode::DimensionMismatch, "value vector length differs from site count");
  return SiteSet(coords_, values, missing_, covariates_);
}

SiteSet SiteSet::permuted(std::span<const Index> order) const {
  const Index n = size();
  if (static_cast<Index>(order.size()) != n) throw Error(ErrorCode::DimensionMismatch, "permutation length");
  std::vector<Point> c(order.size());
  Vector v(n);
  std::vector<bool> m(order.size());
  Matrix X(n, covariates_.cols());
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    c[static_cast<std::size_t>(i)] = coords_[static_cast<std::size_t>(src)];
    v[i] = values_[src];
    m[static_cast<std::size_t>(i)] = missing_[static_cast<std::size_t>(src)];
    X.row(i) = covariates_.row(src);
  }
  return SiteSet(std::move(c), std::move(v), std::move(m), std::move(X));
}

// ---------------------------------------------------------------------------
// ParamVector

Index ParamVector::num_free() const noexcept { return (mu_fixed_zero ? 0 : 1) + beta.size() + 4; }

std::vector<std::string> ParamVector::free_labels() const {
  std::vector<std::string> labels;
  if (!mu_fixed_zero) labels.emplace_back("mu");
  for (Index l = 0; l < beta.size(); ++l) labels.push_back("beta" + std::to_string(l + 1));
  labels.insert(labels.end(), {"sigma2_eps", "gamma", "theta", "phi"});
  return labels;
}

Vector ParamVector::free_values() const {
  Vector v(num_free());
  Index k = 0;
  if (!mu_fixed_zero) v[k++] = mu;
  for (Index l = 0; l < beta.size(); ++l) v[k++] = beta[l];
  v[k++] = sigma2_eps;
  v[k++] = gamma;
  v[k++] = theta;
  v[k++] = phi;
  return v;
}

ParamVector ParamVector::with_free_values(const Vector& values) const {
  if (values.size() != num_free()) throw Error(ErrorCode::DimensionMismatch, "free parameter vector length");
  ParamVector p = *this;
  Index k = 0;
  p.mu = mu_fixed_zero ? 0.0 : values[k++];
  for (Index l = 0; l < beta.size(); ++l) p.beta[l] = values[k++];
  p.sigma2_eps = values[k++];
  p.gamma = values[k++];
  p.theta = values[k++];
  p.phi = values[k++];
  return p;
}

void ParamVector::validate() const {
  if (!(sigma2_eps >= 0.0) || !std::isfinite(sigma2_eps))
    throw Error(ErrorCode::InvalidArgument, "sigma2_eps must be finite and >= 0");
  if (!(theta > 0.0) || !std::isfinite(theta)) throw Error(ErrorCode::NonPositiveTheta, "theta must be > 0");
  if (!(phi > 0.0) || !std::isfinite(phi)) throw Error(ErrorCode::InvalidArgument, "phi must be > 0");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::InvalidArgument, "alpha must be > 0");
  if (!std::isfinite(mu) || !std::isfinite(gamma) || !beta.allFinite())
    throw Error(ErrorCode::InvalidArgument, "mu, beta and gamma must be finite");
  if (mu_fixed_zero && mu != 0.0) throw Error(ErrorCode::InvalidArgument, "mu must be 0 when fixed to zero");
}

// ---------------------------------------------------------------------------
// IndexPartition

IndexPartition::IndexPartition(std::vector<Index> observed, std::vector<Index> missing)
    : observed_(std::move(observed)), missing_(std::move(missing)) {
  const Index n = size();
  std::vector<bool> hit(static_cast<std::size_t>(n), false);
  auto check = [&](const std::vector<Index>& idx) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= n || hit[static_cast<std::size_t>(idx[k])])
        throw Error(ErrorCode::InvalidArgument, "partition indices must cover 0..N-1 exactly once");
      if (k > 0 && idx[k] <= idx[k - 1]) throw Error(ErrorCode::InvalidArgument, "partition indices must increase");
      hit[static_cast<std::size_t>(idx[k])] = true;
    }
  };
  check(observed_);
  check(missing_);
}

Vector IndexPartition::gather(const Vector& v) const {
  Vector out(static_cast<Index>(observed_.size()));
  for (std::size_t k = 0; k < observed_.size(); ++k) out[static_cast<Index>(k)] = v[observed_[k]];
  return out;
}

Matrix IndexPartition::gather_block(const Matrix& B) const { return B(observed_, observed_); }
Matrix IndexPartition::gather_rows(const Matrix& B) const { return B(observed_, Eigen::all); }
Matrix IndexPartition::gather_cols(const Matrix& B) const { return B(Eigen::all, observed_); }

Vector IndexPartition::scatter(const Vector& sub, double fill) const {
  if (sub.size() != static_cast<Index>(observed_.size()))
    throw Error(ErrorCode::DimensionMismatch, "scatter input must have one entry per observed site");
  Vector out = Vector::Constant(size(), fill);
  for (std::size_t k = 0; k < observed_.size(); ++k) out[observed_[k]] = sub[static_cast<Index>(k)];
  return out;
}

IndexPartition partition(const SiteSet& sites) {
  std::vector<Index> obs;
  std::vector<Index> mis;
  for (Index i = 0; i < sites.size(); ++i) (sites.is_missing(i) ? mis : obs).push_back(i);
  if (obs.empty()) throw Error(ErrorCode::AllMissing, "every reading is missing");
  return IndexPartition(std::move(obs), std::move(mis));
}

// ---------------------------------------------------------------------------
// Distances

Matrix distance_matrix(std::span<const Point> points) {
  const auto n = static_cast<Index>(points.size());
  Matrix H = Matrix::Zero(n, n);
  for (Index p = 0; p < n; ++p)
    for (Index q = p + 1; q < n; ++q) {
      const double d = distance(points[static_cast<std::size_t>(p)], points[static_cast<std::size_t>(q)]);
      H(p, q) = d;
      H(q, p) = d;
    }
  return H;
}

Matrix distance_matrix(const SiteSet& sites) { return distance_matrix(std::span<const Point>(sites.coords())); }

double max_pairwise_distance(const Matrix& H) { return H.size() == 0 ? 0.0 : H.maxCoeff(); }

double median_pairwise_distance(const Matrix& H) {
  std::vector<double> d;
  for (Index p = 0; p < H.rows(); ++p)
    for (Index q = p + 1; q < H.cols(); ++q) d.push_back(H(p, q));
  if (d.empty()) return 0.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

// ---------------------------------------------------------------------------
// Grids and surfaces

Point GridSpec::node(Index k) const noexcept {
  const Index ix = k % nx;
  const Index iy = k / nx;
  return {x0 + static_cast<double>(ix) * cell, y0 + static_cast<double>(iy) * cell};
}

std::vector<Point> GridSpec::nodes() const {
  std::vector<Point> out(static_cast<std::size_t>(num_cells()));
  for (Index k = 0; k < num_cells(); ++k) out[static_cast<std::size_t>(k)] = node(k);
  return out;
}

void GridSpec::validate() const {
  if (nx < 1 || ny < 1) throw Error(ErrorCode::InvalidArgument, "grid needs nx, ny >= 1");
  if (!(cell > 0.0) || !std::isfinite(cell)) throw Error(ErrorCode::InvalidArgument, "grid cell size must be > 0");
  if (!std::isfinite(x0) || !std::isfinite(y0)) throw Error(ErrorCode::InvalidArgument, "grid origin must be finite");
}

GridSpec GridSpec::covering(std::span<const Point> points, double margin, double cell) {
  if (points.empty()) throw Error(ErrorCode::InvalidArgument, "cannot cover an empty point set");
  double xmin = points[0].x, xmax = points[0].x, ymin = points[0].y, ymax = points[0].y;
  for (const Point& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  GridSpec g;
  g.cell = cell;
  g.x0 = xmin - margin;
  g.y0 = ymin - margin;
  g.nx = static_cast<Index>(std::ceil((xmax + margin - g.x0) / cell)) + 1;
  g.ny = static_cast<Index>(std::ceil((ymax + margin - g.y0) / cell)) + 1;
  g.validate();
  return g;
}

const char* to_string(SurfaceKind kind) noexcept {
  switch (kind) {
    case SurfaceKind::Potential: return "potential";
    case SurfaceKind::Conditional: return "conditional";
    case SurfaceKind::StdDev: return "stddev";
    case SurfaceKind::Latent: return "latent";
    case SurfaceKind::Covariate: return "covariate";
  }
  return "unknown";
}

Surface::Surface(GridSpec g, Vector v, SurfaceKind k) : grid(g), values(std::move(v)), kind(k) {
  grid.validate();
  if (values.size() != grid.num_cells()) throw Error(ErrorCode::DimensionMismatch, "surface values vs grid size");
}

Index Surface::num_masked() const noexcept {
  Index n = 0;
  for (Index k = 0; k < values.size(); ++k) n += std::isnan(values[k]) ? 1 : 0;
  return n;
}

}  // namespace geopot
