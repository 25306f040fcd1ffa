#include "geopot/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geopot/kernels.hpp"
#include "geopot/model.hpp"
#include "geopot/random.hpp"

namespace geopot {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Kriging

LatentKriger::LatentKriger(const ParamVector& params, const SiteSet& sites) : params_(params) {
  const Matrix H = distance_matrix(sites);
  const IndexPartition part = partition(sites);
  CovarianceBundle bundle = assemble(params, sites, H, part);
  for (Index i : part.observed()) observed_points_.push_back(sites.coords()[static_cast<std::size_t>(i)]);
  g_observed_ = part.gather(bundle.g);
  const Vector r = part.gather(sites.values() - mean_vector(params, sites, bundle.g));
  llt_ = std::move(bundle.observed_llt);
  weights_ = llt_.solve(r);
}

Matrix LatentKriger::cross_covariance(std::span<const Point> targets) const {
  Matrix c = correlation_matrix(correlation_spec(params_), targets, observed_points_);
  return params_.gamma * c * g_observed_.asDiagonal();
}

Vector LatentKriger::mean(std::span<const Point> targets) const { return cross_covariance(targets) * weights_; }

KrigingResult LatentKriger::predict(std::span<const Point> targets) const {
  const Matrix c = cross_covariance(targets);
  KrigingResult out;
  out.w_hat = c * weights_;
  const Matrix half = llt_.matrixL().solve(c.transpose());
  out.variance = (1.0 - half.colwise().squaredNorm().array()).max(0.0).min(1.0).matrix().transpose();
  return out;
}

KrigingResult krige_latent(const ParamVector& params, const SiteSet& sites, std::span<const Point> targets) {
  return LatentKriger(params, sites).predict(targets);
}

KrigingResult krige_latent(const FitResult& fit, const SiteSet& sites, const PredictionTargets& targets, bool force) {
  if (!fit.converged && !force)
    throw Error(ErrorCode::InvalidArgument, "kriging from a non-converged fit must be forced explicitly");
  if (targets.covariates.size() > 0 && targets.covariates.cols() != sites.num_covariates())
    throw Error(ErrorCode::DimensionMismatch, "target covariate count differs from the fitted model");
  return krige_latent(fit.params, sites, targets.locations);
}

// ---------------------------------------------------------------------------
// Surfaces

void check_grid_covariates(const GridSpec& grid, const Matrix& grid_covariates, Index num_covariates) {
  grid.validate();
  if (num_covariates == 0) return;
  if (grid_covariates.rows() != grid.num_cells() || grid_covariates.cols() != num_covariates)
    throw Error(ErrorCode::DimensionMismatch, "grid covariates must be num_cells x b");
  bool any = false;
  for (Index k = 0; k < grid_covariates.rows() && !any; ++k) any = grid_covariates.row(k).allFinite();
  if (!any) throw Error(ErrorCode::CovariateCoverageGap, "covariate rasters leave every grid cell uncovered");
}

namespace {

// Trend mu + x beta per cell; NaN where a covariate is missing.
Vector grid_trend(const ParamVector& params, const GridSpec& grid, const Matrix& grid_covariates) {
  Vector t = Vector::Constant(grid.num_cells(), params.mu_fixed_zero ? 0.0 : params.mu);
  if (params.beta.size() > 0) {
    for (Index k = 0; k < grid.num_cells(); ++k)
      t[k] = grid_covariates.row(k).allFinite() ? t[k] + grid_covariates.row(k).dot(params.beta) : kNaN;
  }
  return t;
}

Vector potential_values(const LatentKriger& kriger, const GridSpec& grid, const std::vector<Point>& nodes,
                        const Matrix& grid_covariates) {
  const ParamVector& p = kriger.params();
  Vector q = grid_trend(p, grid, grid_covariates);
  if (p.gamma != 0.0) q += p.gamma * kriger.mean(nodes);
  return q;
}

}  // namespace

Surface potential_surface(const ParamVector& params, const SiteSet& sites, const GridSpec& grid,
                          const Matrix& grid_covariates) {
  check_grid_covariates(grid, grid_covariates, sites.num_covariates());
  const LatentKriger kriger(params, sites);
  return {grid, potential_values(kriger, grid, grid.nodes(), grid_covariates), SurfaceKind::Potential};
}

Surface potential_surface(const FitResult& fit, const SiteSet& sites, const GridSpec& grid,
                          const Matrix& grid_covariates) {
  return potential_surface(fit.params, sites, grid, grid_covariates);
}

Surface latent_surface(const ParamVector& params, const SiteSet& sites, const GridSpec& grid) {
  grid.validate();
  return {grid, LatentKriger(params, sites).mean(grid.nodes()), SurfaceKind::Latent};
}

Surface g_surface(const GridSpec& grid, std::span<const Point> absorbers, const InteractionSpec& spec) {
  grid.validate();
  Vector g(grid.num_cells());
  for (Index k = 0; k < grid.num_cells(); ++k) g[k] = g_weight(grid.node(k), absorbers, spec);
  return {grid, g, SurfaceKind::Conditional};
}

Surface conditional_from_potential(const Surface& potential, std::span<const Point> absorbers,
                                   const InteractionSpec& spec) {
  const Surface g = g_surface(potential.grid, absorbers, spec);
  return {potential.grid, potential.values.cwiseProduct(g.values), SurfaceKind::Conditional};
}

Surface conditional_surface(const ParamVector& params, const SiteSet& sites, const GridSpec& grid,
                            const Matrix& grid_covariates) {
  return conditional_from_potential(potential_surface(params, sites, grid, grid_covariates), sites.coords(),
                                    interaction_spec(params));
}

Surface conditional_surface(const FitResult& fit, const SiteSet& sites, const GridSpec& grid,
                            const Matrix& grid_covariates) {
  return conditional_surface(fit.params, sites, grid, grid_covariates);
}

// ---------------------------------------------------------------------------
// Uncertainty

UncertaintyResult uncertainty_surfaces(const ParamVector& estimate, const SiteSet& sites, const GridSpec& grid,
                                       const Matrix& grid_covariates, const UncertaintySource& source,
                                       const UncertaintyOptions& opts) {
  const bool use_boot = source.bootstrap_sample.has_value() && !source.bootstrap_sample->empty();
  if (!use_boot && !source.wald_covariance.has_value())
    throw Error(ErrorCode::NoUncertaintySource, "neither a bootstrap sample nor an information matrix is available");
  if (opts.draws < 1) throw Error(ErrorCode::InvalidArgument, "uncertainty surfaces need at least one draw");
  check_grid_covariates(grid, grid_covariates, sites.num_covariates());

  Matrix chol;
  const Vector center = estimate.free_values();
  if (!use_boot) {
    const Matrix& cov = *source.wald_covariance;
    if (cov.rows() != center.size() || cov.cols() != center.size())
      throw Error(ErrorCode::DimensionMismatch, "parameter covariance does not match the estimate");
    Eigen::LDLT<Matrix> ldlt(cov);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < 0.0).any())
      throw Error(ErrorCode::SingularInformation, "parameter covariance is not positive semidefinite");
    chol = ldlt.transpositionsP().transpose() * Matrix(ldlt.matrixL()) *
           ldlt.vectorD().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  const auto draws = static_cast<std::size_t>(opts.draws);
  const std::vector<Point> nodes = grid.nodes();
  const Index cells = grid.num_cells();
  Matrix q_draws(cells, opts.draws);
  Matrix c_draws(cells, opts.draws);
  std::vector<int> redraws(draws, 0);

  parallel_for(draws, opts.threads, [&](std::size_t d) {
    Rng rng = make_stream(opts.seed, d);
    ParamVector p;
    if (use_boot) {
      const auto& sample = *source.bootstrap_sample;
      std::uniform_int_distribution<std::size_t> pick(0, sample.size() - 1);
      p = sample[pick(rng)];
    } else {
      for (int attempt = 0;; ++attempt) {
        if (attempt >= 1000)
          throw Error(ErrorCode::SingularInformation, "parameter draws keep violating positivity bounds");
        p = estimate.with_free_values(center + chol * standard_normal(rng, center.size()));
        if (p.sigma2_eps > 0.0 && p.theta > 0.0 && p.phi > 0.0) break;
        ++redraws[d];
      }
    }
    const LatentKriger kriger(p, sites);
    const Vector q = potential_values(kriger, grid, nodes, grid_covariates);
    q_draws.col(static_cast<Index>(d)) = q;
    const InteractionSpec spec = interaction_spec(p);
    for (Index k = 0; k < cells; ++k)
      c_draws(k, static_cast<Index>(d)) = q[k] * g_weight(nodes[static_cast<std::size_t>(k)], sites.coords(), spec);
  });

  auto row_sd = [&](const Matrix& m) {
    Vector sd(cells);
    for (Index k = 0; k < cells; ++k) {
      if (m.cols() < 2) {
        sd[k] = m.row(k).allFinite() ? 0.0 : kNaN;
        continue;
      }
      const double mean = m.row(k).mean();
      sd[k] = std::sqrt((m.row(k).array() - mean).square().sum() / static_cast<double>(m.cols() - 1));
    }
    return sd;
  };

  UncertaintyResult out;
  out.potential_sd = Surface(grid, row_sd(q_draws), SurfaceKind::StdDev);
  out.conditional_sd = Surface(grid, row_sd(c_draws), SurfaceKind::StdDev);
  out.draws = opts.draws;
  for (int r : redraws) out.redraws += r;
  out.used_bootstrap = use_boot;
  return out;
}

// ---------------------------------------------------------------------------
// Total potential

const char* to_string(StopReason reason) noexcept {
  switch (reason) {
    case StopReason::MaxN: return "max_n";
    case StopReason::Tolerance: return "tolerance";
    case StopReason::NonpositiveGain: return "nonpositive-gain";
    case StopReason::FeasibleSetExhausted: return "feasible-set-exhausted";
  }
  return "unknown";
}

double network_volume(std::span<const Point> sites, std::span<const double> potential, const InteractionSpec& spec) {
  if (sites.size() != potential.size()) throw Error(ErrorCode::DimensionMismatch, "one potential value per site");
  double v = 0.0;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < sites.size(); ++j)
      if (j != i) sum += pair_interaction(distance(sites[i], sites[j]), spec);
    v += potential[i] * weight_from_sum(sum);
  }
  return v;
}

TotalPotentialResult total_potential(const Surface& potential, const InteractionSpec& spec,
                                     const TotalPotentialOptions& opts) {
  if (opts.max_n < 1) throw Error(ErrorCode::InvalidArgument, "max_n must be >= 1");
  if (!(opts.min_distance >= 0.0)) throw Error(ErrorCode::InvalidArgument, "min_distance must be >= 0");
  const GridSpec& grid = potential.grid;
  const Index cells = grid.num_cells();
  const std::vector<Point> nodes = grid.nodes();

  // Sum of pair interactions between each cell and the chosen network,
  // accumulated in insertion order.
  Vector absorbed = Vector::Zero(cells);
  std::vector<bool> blocked(static_cast<std::size_t>(cells), false);
  for (Index k = 0; k < cells; ++k) blocked[static_cast<std::size_t>(k)] = std::isnan(potential.values[k]);

  TotalPotentialResult out;
  std::vector<double> chosen_q;
  double v = 0.0;
  for (;;) {
    Index best = -1;
    double best_val = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < cells; ++k) {
      if (blocked[static_cast<std::size_t>(k)]) continue;
      const double val = potential.values[k] * weight_from_sum(absorbed[k]);
      if (val > best_val) {
        best_val = val;
        best = k;
      }
    }
    if (best < 0) {
      if (out.chosen_cells.empty()) throw Error(ErrorCode::EmptyFeasibleSet, "no grid cell can be chosen");
      out.stopped_reason = StopReason::FeasibleSetExhausted;
      break;
    }
    if (!(best_val > 0.0)) {
      out.stopped_reason = StopReason::NonpositiveGain;
      break;
    }

    const Point s = nodes[static_cast<std::size_t>(best)];
    std::vector<Point> trial_sites = out.chosen_sites;
    trial_sites.push_back(s);
    std::vector<double> trial_q = chosen_q;
    trial_q.push_back(potential.values[best]);
    const double v_new = network_volume(trial_sites, trial_q, spec);
    if (!out.v_curve.empty() && v_new < v) {
      out.stopped_reason = StopReason::Tolerance;
      break;
    }

    out.chosen_sites = std::move(trial_sites);
    chosen_q = std::move(trial_q);
    out.chosen_cells.push_back(best);
    out.gains.push_back(best_val);
    const double v_prev = v;
    v = v_new;
    out.v_curve.push_back(v);
    for (Index k = 0; k < cells; ++k) {
      const double d = distance(nodes[static_cast<std::size_t>(k)], s);
      absorbed[k] += pair_interaction(d, spec);
      if (opts.min_distance > 0.0 && d < opts.min_distance) blocked[static_cast<std::size_t>(k)] = true;
    }

    if (out.v_curve.size() >= 2 && (v - v_prev) / std::abs(v_prev) < opts.rel_tol) {
      out.stopped_reason = StopReason::Tolerance;
      break;
    }
    if (static_cast<int>(out.chosen_cells.size()) >= opts.max_n) {
      out.stopped_reason = StopReason::MaxN;
      break;
    }
  }
  return out;
}

}  // namespace geopot
