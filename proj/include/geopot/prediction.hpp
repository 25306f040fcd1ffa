#pragma once

// Plug-in prediction: kriging of the latent field, potential and
// conditional-potential surfaces, their parameter-uncertainty maps and the
// greedy total-potential network.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>

#include "geopot/core.hpp"
#include "geopot/estimation.hpp"
#include "geopot/inference.hpp"

namespace geopot {

struct PredictionTargets {
  std::vector<Point> locations;
  Matrix covariates;  // one row per location, b columns
};

/// E(w(s) | y^(1)) and Var(w(s) | y^(1)) on the correlation scale.
struct KrigingResult {
  Vector w_hat;
  Vector variance;
};

/// Factorizes the observed covariance once and predicts at any target.
class LatentKriger {
 public:
  LatentKriger(const ParamVector& params, const SiteSet& sites);

  Vector mean(std::span<const Point> targets) const;
  KrigingResult predict(std::span<const Point> targets) const;

  const ParamVector& params() const noexcept { return params_; }

 private:
  // gamma * rho(targets, S^(1)) * G^(1)
  Matrix cross_covariance(std::span<const Point> targets) const;

  ParamVector params_;
  std::vector<Point> observed_points_;
  Vector g_observed_;
  Eigen::LLT<Matrix> llt_;
  Vector weights_;  // (Sigma_y^(1))^-1 (y - G(1 mu + X beta))^(1)
};

/// Throws InvalidArgument when the fit did not converge, unless forced.
KrigingResult krige_latent(const FitResult& fit, const SiteSet& sites, const PredictionTargets& targets,
                           bool force = false);
KrigingResult krige_latent(const ParamVector& params, const SiteSet& sites, std::span<const Point> targets);

/// Covariate values per grid cell (num_cells x b). NaN entries mask a cell.
/// Throws DimensionMismatch on a shape mismatch and CovariateCoverageGap
/// when every cell is masked.
void check_grid_covariates(const GridSpec& grid, const Matrix& grid_covariates, Index num_covariates);

/// q(s) = mu + x(s) beta + gamma w_hat(s) at every unmasked cell.
Surface potential_surface(const ParamVector& params, const SiteSet& sites, const GridSpec& grid,
                          const Matrix& grid_covariates);
Surface potential_surface(const FitResult& fit, const SiteSet& sites, const GridSpec& grid,
                          const Matrix& grid_covariates);

/// w_hat(s) on the grid.
Surface latent_surface(const ParamVector& params, const SiteSet& sites, const GridSpec& grid);

/// g(s; absorbers) at every cell.
Surface g_surface(const GridSpec& grid, std::span<const Point> absorbers, const InteractionSpec& spec);

/// q(s; S) = q(s) g(s; S), cell by cell.
Surface conditional_from_potential(const Surface& potential, std::span<const Point> absorbers,
                                   const InteractionSpec& spec);
/// Conditional surface with every site (observed or not) as an absorber.
Surface conditional_surface(const ParamVector& params, const SiteSet& sites, const GridSpec& grid,
                            const Matrix& grid_covariates);
Surface conditional_surface(const FitResult& fit, const SiteSet& sites, const GridSpec& grid,
                            const Matrix& grid_covariates);

/// Where parameter draws come from: N(estimate, covariance) or a bootstrap
/// sample (preferred when both are present).
struct UncertaintySource {
  std::optional<Matrix> wald_covariance;  // free-parameter covariance, e.g. WaldResult::covariance
  std::optional<std::vector<ParamVector>> bootstrap_sample;
};

struct UncertaintyOptions {
  int draws = 200;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct UncertaintyResult {
  Surface potential_sd;
  Surface conditional_sd;
  int draws = 0;
  int redraws = 0;  // Wald draws rejected for non-positive sigma2_eps, theta or phi
  bool used_bootstrap = false;
};

/// Per-cell standard deviation of q and q(.; S) across parameter draws.
/// Throws NoUncertaintySource when the source is empty.
UncertaintyResult uncertainty_surfaces(const ParamVector& estimate, const SiteSet& sites, const GridSpec& grid,
                                       const Matrix& grid_covariates, const UncertaintySource& source,
                                       const UncertaintyOptions& opts);

struct TotalPotentialOptions {
  int max_n = 500;
  double min_distance = 0.0;  // 0 allows coincident picks
  double rel_tol = 1e-3;
};

enum class StopReason { MaxN, Tolerance, NonpositiveGain, FeasibleSetExhausted };

const char* to_string(StopReason reason) noexcept;

struct TotalPotentialResult {
  std::vector<Point> chosen_sites;
  std::vector<Index> chosen_cells;
  std::vector<double> v_curve;   // total after each accepted insertion
  std::vector<double> gains;     // q(s; S) of each chosen cell when it was picked
  StopReason stopped_reason = StopReason::MaxN;
};

/// sum over s in S of q(s) g(s; S \ s).
double network_volume(std::span<const Point> sites, std::span<const double> potential, const InteractionSpec& spec);

/// Greedy maximization of the network volume over grid cells, starting
/// from the empty network. Ties go to the lowest cell index. An insertion
/// that would lower the total is not kept and ends the run.
/// Throws EmptyFeasibleSet if no cell can be chosen at the first step.
TotalPotentialResult total_potential(const Surface& potential, const InteractionSpec& spec,
                                     const TotalPotentialOptions& opts = {});

}  // namespace geopot
