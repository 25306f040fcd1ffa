#pragma once

// Spatial correlation of the latent field and the instrument interaction
// weights g(s; S) = 1 / (1 + sum_{s' in S} f(|s - s'|)), with the analytic
// phi-derivatives used by the information matrix.

#include <span>

#include "geopot/core.hpp"

namespace geopot {

enum class CorrelationFamily { Exponential };

/// rho(d) = exp(-d / theta).
struct CorrelationSpec {
  double theta = 1.0;
  CorrelationFamily family = CorrelationFamily::Exponential;
};

enum class InteractionFamily { ExponentialPower };

/// f(d) = exp(-(d / phi)^alpha). alpha = 1 is the plain exponential.
struct InteractionSpec {
  double phi = 1.0;
  double alpha = 1.0;
  InteractionFamily family = InteractionFamily::ExponentialPower;
};

double correlation(double d, const CorrelationSpec& spec);

/// Throws NonPositiveTheta.
Matrix correlation_matrix(const CorrelationSpec& spec, const Matrix& H);

/// Cross-correlation between `targets` (rows) and `sources` (columns).
Matrix correlation_matrix(const CorrelationSpec& spec, std::span<const Point> targets,
                          std::span<const Point> sources);

double pair_interaction(double d, const InteractionSpec& spec);

/// 1 / (1 + sum). Every g in the library goes through this.
inline double weight_from_sum(double sum) noexcept { return 1.0 / (1.0 + sum); }

/// g(s; others); 1 for an empty set, 0.5 for a single coincident instrument.
double g_weight(const Point& s, std::span<const Point> others, const InteractionSpec& spec);

/// Leave-one-out weights g_i = g(s_i; S \ s_i).
Vector g_vector(const SiteSet& sites, const InteractionSpec& spec);
Vector g_vector(const Matrix& H, const InteractionSpec& spec);

/// d g_i / d phi for alpha = 1; throws AlphaNotOne otherwise.
Vector g_phi_gradient(const SiteSet& sites, const InteractionSpec& spec);
Vector g_phi_gradient(const Matrix& H, const InteractionSpec& spec);

/// d(g g') / d phi, i.e. dg_p g_q + g_p dg_q. Throws AlphaNotOne.
Matrix g_tilde_matrix(const SiteSet& sites, const InteractionSpec& spec);
Matrix g_tilde_matrix(const Matrix& H, const InteractionSpec& spec);

}  // namespace geopot
