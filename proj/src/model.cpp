#include "geopot/model.hpp"

#include <cmath>
#include <numbers>

#include "geopot/random.hpp"

namespace geopot {

namespace {

bool factor_ok(const Eigen::LLT<Matrix>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto diag = llt.matrixLLT().diagonal();
  return diag.allFinite() && (diag.array() > 0.0).all();
}

Matrix observed_covariance(const Matrix& sigma_w, const Vector& g, double gamma, double sigma2_eps) {
  Matrix inner = gamma * gamma * sigma_w;
  inner.diagonal().array() += sigma2_eps;
  return (g * g.transpose()).cwiseProduct(inner);
}

}  // namespace

Matrix jittered_correlation(const CorrelationSpec& spec, const Matrix& H, double& jitter, Eigen::LLT<Matrix>* factor) {
  const Matrix base = correlation_matrix(spec, H);
  const double scale = base.trace() / static_cast<double>(base.rows());
  for (double rel = kJitterStart; rel <= kJitterMax * 1.0000001; rel *= 10.0) {
    Matrix s = base;
    s.diagonal().array() += rel * scale;
    Eigen::LLT<Matrix> llt(s);
    if (factor_ok(llt)) {
      jitter = rel * scale;
      if (factor != nullptr) *factor = std::move(llt);
      return s;
    }
  }
  throw Error(ErrorCode::SingularCovariance, "latent correlation is not positive definite even with maximum jitter");
}

CovarianceBundle assemble(const ParamVector& params, const SiteSet& /*sites*/, const Matrix& H,
                          const IndexPartition& part) {
  params.validate();
  const Matrix base = correlation_matrix(correlation_spec(params), H);
  const double scale = base.trace() / static_cast<double>(base.rows());

  CovarianceBundle b;
  b.sigma2_eps = params.sigma2_eps;
  b.g = g_vector(H, interaction_spec(params));
  for (double rel = kJitterStart; rel <= kJitterMax * 1.0000001; rel *= 10.0) {
    b.sigma_w = base;
    b.sigma_w.diagonal().array() += rel * scale;
    b.sigma_y = observed_covariance(b.sigma_w, b.g, params.gamma, params.sigma2_eps);
    b.observed_llt.compute(part.gather_block(b.sigma_y));
    if (factor_ok(b.observed_llt)) {
      b.jitter = rel * scale;
      b.sigma_wy = params.gamma * b.sigma_w * b.g.asDiagonal();
      return b;
    }
  }
  throw Error(ErrorCode::SingularCovariance, "observed covariance is not positive definite even with maximum jitter");
}

CovarianceBundle assemble(const ParamVector& params, const SiteSet& sites) {
  return assemble(params, sites, distance_matrix(sites), partition(sites));
}

Vector mean_vector(const ParamVector& params, const SiteSet& sites, const Vector& g) {
  Vector m = Vector::Constant(sites.size(), params.mu_fixed_zero ? 0.0 : params.mu);
  if (sites.num_covariates() > 0) m += sites.covariates() * params.beta;
  return g.cwiseProduct(m);
}

double log_likelihood(const ParamVector& params, const SiteSet& sites, const CovarianceBundle& bundle,
                      const IndexPartition& part) {
  const Vector r = part.gather(sites.values() - mean_vector(params, sites, bundle.g));
  const auto& L = bundle.observed_llt.matrixL();
  const Vector z = L.solve(r);
  const double logdet = 2.0 * bundle.observed_llt.matrixLLT().diagonal().array().log().sum();
  const auto n = static_cast<double>(r.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet + z.squaredNorm());
}

double log_likelihood(const ParamVector& params, const SiteSet& sites, const Matrix& H, const IndexPartition& part) {
  return log_likelihood(params, sites, assemble(params, sites, H, part), part);
}

double log_likelihood(const ParamVector& params, const SiteSet& sites) {
  const Matrix H = distance_matrix(sites);
  const IndexPartition part = partition(sites);
  return log_likelihood(params, sites, H, part);
}

SiteSet simulate(const ParamVector& params, const SiteSet& sites, std::uint64_t seed) {
  params.validate();
  const Matrix H = distance_matrix(sites);
  double jitter = 0.0;
  Eigen::LLT<Matrix> factor;
  jittered_correlation(correlation_spec(params), H, jitter, &factor);
  const Vector g = g_vector(H, interaction_spec(params));

  Rng rng = make_stream(seed, 0);
  const Index n = sites.size();
  const Vector w = factor.matrixL() * standard_normal(rng, n);
  const Vector eps = std::sqrt(params.sigma2_eps) * standard_normal(rng, n);

  Vector u = Vector::Constant(n, params.mu_fixed_zero ? 0.0 : params.mu);
  if (sites.num_covariates() > 0) u += sites.covariates() * params.beta;
  u += params.gamma * w + eps;
  return sites.with_values(g.cwiseProduct(u));
}

}  // namespace geopot
