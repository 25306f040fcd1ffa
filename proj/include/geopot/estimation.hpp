#pragma once

// EM fitting: conditional moments of the latent field, closed-form updates
// of (mu, beta, sigma2_eps, gamma) and a bounded numeric update of
// (theta, phi) that never decreases the expected complete-data likelihood.

#include <optional>
#include <vector>

#include "geopot/core.hpp"
#include "geopot/model.hpp"

namespace geopot {

/// E(w | y^(1)) and Var(w | y^(1)) over all N sites.
struct EStepResult {
  Vector w_hat;
  Matrix A_hat;
};

EStepResult e_step(const ParamVector& params, const SiteSet& sites);
EStepResult e_step(const ParamVector& params, const SiteSet& sites, const CovarianceBundle& bundle,
                   const IndexPartition& part);

struct ClosedFormUpdate {
  double mu = 0.0;
  Vector beta;
  double sigma2_eps = 0.0;
  double gamma = 0.0;
};

/// The four closed-form updates, each computed from the residual
/// e = (G^(1))^-1 y^(1) - mu 1 - X^(1) beta - gamma w_hat^(1) at params_k.
/// Missing sites contribute sigma2_eps^(k) each to the variance update.
/// Throws RankDeficientX when X^(1) lacks full column rank.
ClosedFormUpdate m_step_closed(const ParamVector& params_k, const SiteSet& sites, const EStepResult& e);

/// Box for the (theta, phi) search, in meters.
struct SearchBounds {
  double theta_lo = 0.0;
  double theta_hi = 0.0;
  double phi_lo = 0.0;
  double phi_hi = 0.0;

  /// [1e-3, 10] x the largest pairwise distance (1 m scale for a single site).
  static SearchBounds defaults(const Matrix& H);
};

struct NumericUpdate {
  double theta = 0.0;
  double phi = 0.0;
  bool stalled = false;  // a search failed and the incoming value was kept
};

/// Expected complete-data log-likelihood terms (additive constants dropped).
/// The latent term depends on theta only:
///   -1/2 log|Sigma_w| - 1/2 tr(Sigma_w^-1 (w_hat w_hat' + A_hat)).
double expected_latent_loglik(double theta, const Matrix& H, const Matrix& second_moment);
/// The measurement term over observed sites (mu, beta, sigma2_eps, gamma, phi):
///   sum_i -log g_i - 1/2 log sigma2 - ((y_i/g_i - m_i - gamma w_i)^2 + gamma^2 A_ii) / (2 sigma2).
double expected_measurement_loglik(const ParamVector& params, const SiteSet& sites, const EStepResult& e,
                                   const Matrix& H, const IndexPartition& part);
/// Full Q(params; params_k) including the missing-site error term.
double expected_complete_loglik(const ParamVector& params, double sigma2_eps_k, const SiteSet& sites,
                                const EStepResult& e);

/// Maximizes Q over theta and phi (separately: Q is additive in them) with
/// bounded Brent searches on log scale. A search result is only accepted
/// when Q does not decrease.
NumericUpdate m_step_numeric(const ParamVector& params_k, const SiteSet& sites, const EStepResult& e,
                             const SearchBounds& bounds);

enum class UpdateOrder {
  Sequential,    // each closed-form update sees the ones before it (ECM)
  Simultaneous,  // all four from the same residual, as in m_step_closed
};

struct EmOptions {
  int max_iter = 500;
  double tol = 1e-6;
  std::optional<SearchBounds> bounds;
  UpdateOrder order = UpdateOrder::Sequential;
  bool fix_theta = false;
  bool fix_phi = false;
};

struct FitResult {
  ParamVector params;
  std::vector<double> loglik_trace;  // entry 0 is the initial value
  int iterations = 0;
  bool converged = false;
  int optimizer_stalls = 0;
  EStepResult e_step;
};

/// Deterministic starting point: mu from the mean of G^-1 y^(1) (or 0),
/// beta by least squares, half the residual variance each to sigma2_eps
/// and gamma^2. phi and then theta are picked from the median pairwise
/// distance and its halvings (down to 1/1024) by observed likelihood.
ParamVector initial_params(const SiteSet& sites, bool mu_fixed_zero, double alpha = 1.0);

/// Runs EM from `init`. Every EM step is followed by a Fisher-scoring step
/// on the observed likelihood, kept only when it raises the likelihood.
/// Each accepted iterate appends to loglik_trace and counts towards max_iter.
/// Convergence is tested over each EM + scoring pair.
/// Non-convergence is reported through `converged`.
FitResult fit_em(const SiteSet& sites, const ParamVector& init, const EmOptions& opts = {});

}  // namespace geopot
