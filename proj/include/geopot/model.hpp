#pragma once

// Covariance assembly, observed-data log-likelihood and forward simulation
// for y = G (1 mu + X beta + gamma w + eps).

#include <cstdint>

#include <Eigen/Cholesky>

#include "geopot/core.hpp"
#include "geopot/kernels.hpp"

namespace geopot {

/// Diagonal jitter added to the latent correlation matrix, as a multiple of
/// trace(Sigma_w)/N. Escalated by x10 up to kJitterMax before giving up.
inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-6;

struct CovarianceBundle {
  Matrix sigma_w;      // latent correlation, jitter included
  double sigma2_eps = 0.0;
  Vector g;            // leave-one-out interaction weights
  Matrix sigma_y;      // g g' o (gamma^2 Sigma_w + sigma2_eps I)
  Matrix sigma_wy;     // gamma Sigma_w G'
  double jitter = 0.0; // absolute value added to diag(Sigma_w)
  Eigen::LLT<Matrix> observed_llt;  // factor of the observed block of sigma_y
};

inline CorrelationSpec correlation_spec(const ParamVector& p) { return {p.theta, CorrelationFamily::Exponential}; }
inline InteractionSpec interaction_spec(const ParamVector& p) {
  return {p.phi, p.alpha, InteractionFamily::ExponentialPower};
}

/// Latent correlation with the jitter policy applied; `jitter` receives the
/// absolute diagonal increment. Throws SingularCovariance.
Matrix jittered_correlation(const CorrelationSpec& spec, const Matrix& H, double& jitter,
                            Eigen::LLT<Matrix>* factor = nullptr);

/// Throws SingularCovariance when the observed block cannot be factorized.
CovarianceBundle assemble(const ParamVector& params, const SiteSet& sites);
CovarianceBundle assemble(const ParamVector& params, const SiteSet& sites, const Matrix& H,
                          const IndexPartition& part);

/// G (1 mu + X beta) for weights g.
Vector mean_vector(const ParamVector& params, const SiteSet& sites, const Vector& g);

/// Gaussian log-density of the observed readings.
double log_likelihood(const ParamVector& params, const SiteSet& sites);
double log_likelihood(const ParamVector& params, const SiteSet& sites, const Matrix& H, const IndexPartition& part);
double log_likelihood(const ParamVector& params, const SiteSet& sites, const CovarianceBundle& bundle,
                      const IndexPartition& part);

/// Synthetic readings at the same sites, preserving the missing pattern.
/// w is drawn over all N sites before masking. Deterministic in `seed`.
SiteSet simulate(const ParamVector& params, const SiteSet& sites, std::uint64_t seed);

}  // namespace geopot
