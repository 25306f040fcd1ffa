#include "geopot/kernels.hpp"

#include <cmath>

namespace geopot {

namespace {

void require_theta(const CorrelationSpec& spec) {
  if (!(spec.theta > 0.0) || !std::isfinite(spec.theta))
    throw Error(ErrorCode::NonPositiveTheta, "correlation range theta must be > 0");
}

void require_alpha_one(const InteractionSpec& spec) {
  if (spec.alpha != 1.0)
    throw Error(ErrorCode::AlphaNotOne, "analytic phi-derivatives are defined for alpha = 1 only");
}

// Row sums of f(H) excluding the diagonal, accumulated in column order.
Vector leave_one_out_sums(const Matrix& H, const InteractionSpec& spec) {
  const Index n = H.rows();
  Vector sums = Vector::Zero(n);
  for (Index p = 0; p < n; ++p) {
    double s = 0.0;
    for (Index q = 0; q < n; ++q)
      if (q != p) s += pair_interaction(H(p, q), spec);
    sums[p] = s;
  }
  return sums;
}

}  // namespace

double correlation(double d, const CorrelationSpec& spec) {
  require_theta(spec);
  return std::exp(-d / spec.theta);
}

Matrix correlation_matrix(const CorrelationSpec& spec, const Matrix& H) {
  require_theta(spec);
  return (-H.array() / spec.theta).exp().matrix();
}

Matrix correlation_matrix(const CorrelationSpec& spec, std::span<const Point> targets,
                          std::span<const Point> sources) {
  require_theta(spec);
  Matrix C(static_cast<Index>(targets.size()), static_cast<Index>(sources.size()));
  for (std::size_t i = 0; i < targets.size(); ++i)
    for (std::size_t j = 0; j < sources.size(); ++j)
      C(static_cast<Index>(i), static_cast<Index>(j)) = std::exp(-distance(targets[i], sources[j]) / spec.theta);
  return C;
}

double pair_interaction(double d, const InteractionSpec& spec) {
  if (spec.alpha == 1.0) return std::exp(-d / spec.phi);
  return std::exp(-std::pow(d / spec.phi, spec.alpha));
}

double g_weight(const Point& s, std::span<const Point> others, const InteractionSpec& spec) {
  double sum = 0.0;
  for (const Point& o : others) sum += pair_interaction(distance(s, o), spec);
  return weight_from_sum(sum);
}

Vector g_vector(const Matrix& H, const InteractionSpec& spec) {
  Vector g = leave_one_out_sums(H, spec);
  for (Index p = 0; p < g.size(); ++p) g[p] = weight_from_sum(g[p]);
  return g;
}

Vector g_vector(const SiteSet& sites, const InteractionSpec& spec) { return g_vector(distance_matrix(sites), spec); }

Vector g_phi_gradient(const Matrix& H, const InteractionSpec& spec) {
  require_alpha_one(spec);
  const Index n = H.rows();
  const double phi2 = spec.phi * spec.phi;
  Vector grad(n);
  for (Index p = 0; p < n; ++p) {
    double sum_f = 0.0;
    double sum_hf = 0.0;
    for (Index q = 0; q < n; ++q) {
      if (q == p) continue;
      const double f = pair_interaction(H(p, q), spec);
      sum_f += f;
      sum_hf += H(p, q) / phi2 * f;
    }
    const double denom = 1.0 + sum_f;
    grad[p] = -sum_hf / (denom * denom);
  }
  return grad;
}

Vector g_phi_gradient(const SiteSet& sites, const InteractionSpec& spec) {
  return g_phi_gradient(distance_matrix(sites), spec);
}

Matrix g_tilde_matrix(const Matrix& H, const InteractionSpec& spec) {
  const Vector dg = g_phi_gradient(H, spec);
  const Vector g = g_vector(H, spec);
  Matrix gt = dg * g.transpose();
  gt += gt.transpose().eval();
  return gt;
}

Matrix g_tilde_matrix(const SiteSet& sites, const InteractionSpec& spec) {
  return g_tilde_matrix(distance_matrix(sites), spec);
}

}  // namespace geopot
