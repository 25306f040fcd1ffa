#include "geopot/inference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>

#include "geopot/random.hpp"

namespace geopot {

namespace {

struct InnovationState {
  Vector epsilon;
  Matrix sigma;
};

// Innovation and covariance at p with a fixed latent jitter.
InnovationState innovation_at(const ParamVector& p, const SiteSet& sites, const Matrix& H, double jitter) {
  Matrix sigma_w = correlation_matrix(correlation_spec(p), H);
  sigma_w.diagonal().array() += jitter;
  const Vector g = g_vector(H, interaction_spec(p));
  Matrix inner = p.gamma * p.gamma * sigma_w;
  inner.diagonal().array() += p.sigma2_eps;
  return {sites.values() - mean_vector(p, sites, g), (g * g.transpose()).cwiseProduct(inner)};
}

double fd_step(double x) { return 1e-4 * std::max(std::abs(x), 1.0); }

}  // namespace

InnovationDerivatives epsilon_and_derivatives(const ParamVector& params, const SiteSet& sites, DerivativeMode mode) {
  params.validate();
  if (params.beta.size() != sites.num_covariates())
    throw Error(ErrorCode::DimensionMismatch, "beta length differs from covariate count");
  const Matrix H = distance_matrix(sites);
  const Index n = sites.size();
  double jitter = 0.0;
  const Matrix sigma_w = jittered_correlation(correlation_spec(params), H, jitter);
  const InnovationState base = innovation_at(params, sites, H, jitter);

  InnovationDerivatives out;
  out.labels = params.free_labels();
  out.epsilon = base.epsilon;
  out.sigma = base.sigma;
  const auto k = static_cast<std::size_t>(params.num_free());
  out.d_epsilon.assign(k, Vector::Zero(n));
  out.d_sigma.assign(k, Matrix::Zero(n, n));

  const Vector free = params.free_values();
  auto finite_difference = [&](std::size_t i) {
    const double h = fd_step(free[static_cast<Index>(i)]);
    Vector up = free;
    Vector dn = free;
    up[static_cast<Index>(i)] += h;
    dn[static_cast<Index>(i)] -= h;
    const InnovationState a = innovation_at(params.with_free_values(up), sites, H, jitter);
    const InnovationState b = innovation_at(params.with_free_values(dn), sites, H, jitter);
    out.d_epsilon[i] = (a.epsilon - b.epsilon) / (2.0 * h);
    out.d_sigma[i] = (a.sigma - b.sigma) / (2.0 * h);
    // Missing entries of epsilon are NaN in both evaluations.
    for (Index r = 0; r < n; ++r)
      if (sites.is_missing(r)) out.d_epsilon[i][r] = 0.0;
  };

  if (mode == DerivativeMode::FiniteDifference) {
    for (std::size_t i = 0; i < k; ++i) finite_difference(i);
    return out;
  }

  const InteractionSpec ispec = interaction_spec(params);
  const Vector g = g_vector(H, ispec);
  const Matrix gg = g * g.transpose();
  Vector trend = Vector::Constant(n, params.mu_fixed_zero ? 0.0 : params.mu);
  if (sites.num_covariates() > 0) trend += sites.covariates() * params.beta;

  std::size_t i = 0;
  if (!params.mu_fixed_zero) out.d_epsilon[i++] = -g;
  for (Index l = 0; l < params.beta.size(); ++l) out.d_epsilon[i++] = -g.cwiseProduct(sites.covariates().col(l));
  out.d_sigma[i++] = Matrix(gg.diagonal().asDiagonal());
  out.d_sigma[i++] = 2.0 * params.gamma * gg.cwiseProduct(sigma_w);
  out.d_sigma[i++] = params.gamma * params.gamma *
                     gg.cwiseProduct(H / (params.theta * params.theta)).cwiseProduct(sigma_w);
  const std::size_t phi_index = i;
  if (params.alpha == 1.0) {
    const Vector dg = g_phi_gradient(H, ispec);
    const Matrix gt = dg * g.transpose() + g * dg.transpose();
    Matrix inner = params.gamma * params.gamma * sigma_w;
    inner.diagonal().array() += params.sigma2_eps;
    out.d_epsilon[phi_index] = -dg.cwiseProduct(trend);
    out.d_sigma[phi_index] = gt.cwiseProduct(inner);
  } else {
    finite_difference(phi_index);
    out.phi_finite_difference = true;
  }
  return out;
}

InfoMatrix fisher_information(const ParamVector& params, const SiteSet& sites, DerivativeMode mode) {
  const InnovationDerivatives d = epsilon_and_derivatives(params, sites, mode);
  const IndexPartition part = partition(sites);
  const Eigen::LLT<Matrix> llt(part.gather_block(d.sigma));
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularCovariance, "observed innovation covariance is not positive definite");

  const std::size_t k = d.labels.size();
  std::vector<Vector> a(k);   // S^-1 d_i eps
  std::vector<Vector> de(k);
  std::vector<Matrix> P(k);   // S^-1 d_i S
  Vector t(static_cast<Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    de[i] = part.gather(d.d_epsilon[i]);
    a[i] = llt.solve(de[i]);
    P[i] = llt.solve(part.gather_block(d.d_sigma[i]));
    t[static_cast<Index>(i)] = P[i].trace();
  }

  InfoMatrix info;
  info.labels = d.labels;
  info.phi_finite_difference = d.phi_finite_difference;
  info.I_tilde.resize(static_cast<Index>(k), static_cast<Index>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) {
      const double v = de[i].dot(a[j]) + 0.5 * P[i].cwiseProduct(P[j].transpose()).sum() +
                       0.25 * t[static_cast<Index>(i)] * t[static_cast<Index>(j)];
      info.I_tilde(static_cast<Index>(i), static_cast<Index>(j)) = v;
      info.I_tilde(static_cast<Index>(j), static_cast<Index>(i)) = v;
    }
  return info;
}

// Acklam's rational approximation refined by one Halley step on erfc.
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile probability must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

WaldResult wald_intervals(const ParamVector& estimate, const InfoMatrix& info, double level, Index num_observed) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "confidence level must lie in (0, 1)");
  const Eigen::FullPivLU<Matrix> lu(info.I_tilde);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularInformation, "information matrix is singular");
  WaldResult out;
  out.covariance = lu.inverse();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  out.variance = out.covariance.diagonal();
  if (!out.variance.allFinite() || (out.variance.array() <= 0.0).any())
    throw Error(ErrorCode::SingularInformation, "information matrix inverse has a non-positive variance");

  const Vector values = estimate.free_values();
  if (values.size() != out.variance.size())
    throw Error(ErrorCode::DimensionMismatch, "information matrix does not match the parameter vector");
  const double z = normal_quantile(0.5 + 0.5 * level);
  for (Index i = 0; i < values.size(); ++i) {
    const double half = z * std::sqrt(out.variance[i]);
    out.intervals.push_back({info.labels[static_cast<std::size_t>(i)], values[i], values[i] - half, values[i] + half});
  }
  out.small_sample_caveat = num_observed < 100;
  return out;
}

WaldResult wald_intervals(const FitResult& fit, const InfoMatrix& info, double level, Index num_observed) {
  return wald_intervals(fit.params, info, level, num_observed);
}

// ---------------------------------------------------------------------------
// Bootstrap

bool FilterRule::rejects(const ParamVector& p, double max_distance) const {
  switch (kind) {
    case Kind::None: return false;
    case Kind::PhiAboveMaxDistance: return p.phi > max_distance;
    case Kind::PhiAbove: return p.phi > threshold;
  }
  return false;
}

std::string FilterRule::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::None: os << "converged"; break;
    case Kind::PhiAboveMaxDistance: os << "converged and phi <= max pairwise distance"; break;
    case Kind::PhiAbove: os << "converged and phi <= " << threshold; break;
  }
  return os.str();
}

double empirical_quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(prob, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BootstrapResult bootstrap(const FitResult& fit, const SiteSet& sites, const BootstrapOptions& opts) {
  if (opts.replicates < 1) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least one replicate");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    throw Error(ErrorCode::InvalidArgument, "confidence level must lie in (0, 1)");
  const auto m = static_cast<std::size_t>(opts.replicates);
  const double dmax = max_pairwise_distance(distance_matrix(sites));

  std::vector<std::optional<FitResult>> refits(m);
  parallel_for(m, opts.threads, [&](std::size_t r) {
    try {
      const SiteSet replica = simulate(fit.params, sites, derive_seed(opts.seed, r));
      const ParamVector init = initial_params(replica, fit.params.mu_fixed_zero, fit.params.alpha);
      refits[r] = fit_em(replica, init, opts.em);
    } catch (const Error&) {
      refits[r].reset();
    }
  });

  BootstrapResult out;
  BootstrapSample& s = out.sample;
  s.filter_rule = opts.filter.describe();
  s.seed = opts.seed;
  s.requested = opts.replicates;
  for (auto& r : refits) {
    if (!r) {
      ++s.failed;
      continue;
    }
    s.raw.push_back(r->params);
    s.raw_converged.push_back(r->converged);
    if (!r->converged) {
      ++s.nonconverged;
    } else if (opts.filter.rejects(r->params, dmax)) {
      ++s.filtered;
    } else {
      s.kept.push_back(r->params);
    }
  }

  out.labels = fit.params.free_labels();
  const auto k = static_cast<Index>(out.labels.size());
  const auto kept = static_cast<Index>(s.kept.size());
  if (kept == 0) return out;

  Matrix samples(kept, k);
  for (Index r = 0; r < kept; ++r) samples.row(r) = s.kept[static_cast<std::size_t>(r)].free_values().transpose();
  const Vector estimate = fit.params.free_values();
  const double lo = 0.5 - 0.5 * opts.level;
  const double hi = 0.5 + 0.5 * opts.level;
  for (Index j = 0; j < k; ++j) {
    std::vector<double> col(samples.col(j).data(), samples.col(j).data() + kept);
    out.intervals.push_back({out.labels[static_cast<std::size_t>(j)], estimate[j], empirical_quantile(col, lo),
                             empirical_quantile(col, hi)});
  }
  const Matrix centered = samples.rowwise() - samples.colwise().mean();
  out.covariance = kept > 1 ? Matrix(centered.transpose() * centered / static_cast<double>(kept - 1))
                            : Matrix(Matrix::Zero(k, k));
  return out;
}

std::vector<VarianceComparison> compare_variances(const WaldResult& wald, const BootstrapResult& boot) {
  std::vector<VarianceComparison> out;
  for (std::size_t i = 0; i < boot.labels.size(); ++i) {
    const auto ii = static_cast<Index>(i);
    out.push_back({boot.labels[i], ii < wald.variance.size() ? wald.variance[ii] : std::nan(""),
                   ii < boot.covariance.rows() ? boot.covariance(ii, ii) : std::nan("")});
  }
  return out;
}

}  // namespace geopot
