#include "geopot/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "geopot/inference.hpp"

namespace geopot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kInitScanSteps = 10;
constexpr double kFloorSlack = 1.000001;
constexpr double kInfoFloor = 1e-14;

Eigen::ColPivHouseholderQR<Matrix> checked_qr(const Matrix& X1) {
  Eigen::ColPivHouseholderQR<Matrix> qr(X1);
  if (X1.cols() > 0 && qr.rank() < X1.cols())
    throw Error(ErrorCode::RankDeficientX, "observed covariate matrix does not have full column rank");
  return qr;
}

// e = (G^(1))^-1 y^(1) - mu 1 - X^(1) beta - gamma w_hat^(1)
Vector residual(const ParamVector& p, const SiteSet& sites, const Vector& g, const EStepResult& e,
                const IndexPartition& part) {
  Vector m = Vector::Constant(sites.size(), p.mu_fixed_zero ? 0.0 : p.mu);
  if (sites.num_covariates() > 0) m += sites.covariates() * p.beta;
  const Vector full = sites.values().cwiseQuotient(g) - m - p.gamma * e.w_hat;
  return part.gather(full);
}

double observed_trace(const Matrix& A, const IndexPartition& part) {
  double t = 0.0;
  for (Index i : part.observed()) t += A(i, i);
  return t;
}

// Maximizes f over log-scale [lo, hi], searching a window around `start`
// that widens while the optimum sits on its edge. Returns the accepted
// value, which is `start` unless f improved.
template <class F>
double maximize_log_scale(F&& f, double start, double lo, double hi, bool& stalled) {
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  const double lstart = std::clamp(std::log(start), llo, lhi);
  auto neg = [&](double lx) {
    const double v = f(std::exp(lx));
    return std::isfinite(v) ? -v : std::numeric_limits<double>::max();
  };
  const double f_start = f(start);
  constexpr int kBits = 26;
  constexpr double kEdge = 1e-3;

  double best_x = lstart;
  double best_neg = std::isfinite(f_start) ? -f_start : std::numeric_limits<double>::max();
  for (double half = 0.25;; half *= 4.0) {
    const double wlo = std::max(llo, lstart - half);
    const double whi = std::min(lhi, lstart + half);
    boost::uintmax_t iters = 100;
    const auto [x, v] = boost::math::tools::brent_find_minima(neg, wlo, whi, kBits, iters);
    if (v < best_neg) {
      best_x = x;
      best_neg = v;
    }
    const bool at_edge = (x - wlo < kEdge && wlo > llo) || (whi - x < kEdge && whi < lhi);
    if (!at_edge || (wlo <= llo && whi >= lhi)) break;
  }
  if (best_neg == std::numeric_limits<double>::max()) {
    stalled = true;
    return start;
  }
  if (best_x == lstart) return start;
  return std::exp(best_x);
}

}  // namespace

// ---------------------------------------------------------------------------
// E-step

EStepResult e_step(const ParamVector& params, const SiteSet& sites, const CovarianceBundle& bundle,
                   const IndexPartition& part) {
  const Vector r = part.gather(sites.values() - mean_vector(params, sites, bundle.g));
  const Matrix cross = part.gather_cols(bundle.sigma_wy);  // Sigma_wy L'
  EStepResult e;
  e.w_hat = cross * bundle.observed_llt.solve(r);
  const Matrix half = bundle.observed_llt.matrixL().solve(cross.transpose());
  e.A_hat = bundle.sigma_w - half.transpose() * half;
  e.A_hat = 0.5 * (e.A_hat + e.A_hat.transpose());
  return e;
}

EStepResult e_step(const ParamVector& params, const SiteSet& sites) {
  const IndexPartition part = partition(sites);
  return e_step(params, sites, assemble(params, sites, distance_matrix(sites), part), part);
}

// ---------------------------------------------------------------------------
// Closed-form M-step

ClosedFormUpdate m_step_closed(const ParamVector& params_k, const SiteSet& sites, const EStepResult& e) {
  params_k.validate();
  const IndexPartition part = partition(sites);
  const Vector g = g_vector(distance_matrix(sites), interaction_spec(params_k));
  const Vector r = residual(params_k, sites, g, e, part);
  const Vector w1 = part.gather(e.w_hat);
  const double trA1 = observed_trace(e.A_hat, part);
  const auto n = static_cast<double>(sites.size());
  const auto n_obs = static_cast<double>(sites.num_observed());

  ClosedFormUpdate u;
  u.mu = params_k.mu_fixed_zero ? 0.0 : params_k.mu + r.sum() / n_obs;
  u.beta = params_k.beta;
  if (sites.num_covariates() > 0) {
    const Matrix X1 = part.gather_rows(sites.covariates());
    u.beta += checked_qr(X1).solve(r);
  }
  u.sigma2_eps = (r.squaredNorm() + params_k.gamma * params_k.gamma * trA1 +
                  params_k.sigma2_eps * static_cast<double>(sites.num_missing())) / n;
  u.gamma = (r + params_k.gamma * w1).dot(w1) / (w1.squaredNorm() + trA1);
  return u;
}

// ---------------------------------------------------------------------------
// Q and the numeric M-step

SearchBounds SearchBounds::defaults(const Matrix& H) {
  double dmax = max_pairwise_distance(H);
  if (!(dmax > 0.0)) dmax = 1.0;
  return {1e-3 * dmax, 10.0 * dmax, 1e-3 * dmax, 10.0 * dmax};
}

double expected_latent_loglik(double theta, const Matrix& H, const Matrix& second_moment) {
  double jitter = 0.0;
  Eigen::LLT<Matrix> llt;
  try {
    jittered_correlation(CorrelationSpec{theta}, H, jitter, &llt);
  } catch (const Error&) {
    return kNegInf;
  }
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * logdet - 0.5 * llt.solve(second_moment).trace();
}

double expected_measurement_loglik(const ParamVector& params, const SiteSet& sites, const EStepResult& e,
                                   const Matrix& H, const IndexPartition& part) {
  if (!(params.sigma2_eps > 0.0)) return kNegInf;
  const Vector g = g_vector(H, interaction_spec(params));
  const Vector r = residual(params, sites, g, e, part);
  double q = 0.0;
  const double g2 = params.gamma * params.gamma;
  const double log_s2 = std::log(params.sigma2_eps);
  for (std::size_t k = 0; k < part.observed().size(); ++k) {
    const Index i = part.observed()[k];
    const double ri = r[static_cast<Index>(k)];
    q += -std::log(g[i]) - 0.5 * log_s2 - (ri * ri + g2 * e.A_hat(i, i)) / (2.0 * params.sigma2_eps);
  }
  return q;
}

double expected_complete_loglik(const ParamVector& params, double sigma2_eps_k, const SiteSet& sites,
                                const EStepResult& e) {
  const Matrix H = distance_matrix(sites);
  const IndexPartition part = partition(sites);
  const Matrix M = e.w_hat * e.w_hat.transpose() + e.A_hat;
  double q = expected_latent_loglik(params.theta, H, M) + expected_measurement_loglik(params, sites, e, H, part);
  const auto n_mis = static_cast<double>(sites.num_missing());
  q += -0.5 * n_mis * std::log(params.sigma2_eps) - 0.5 * n_mis * sigma2_eps_k / params.sigma2_eps;
  return q;
}

namespace {

NumericUpdate numeric_update(const ParamVector& p, const SiteSet& sites, const EStepResult& e, const Matrix& H,
                             const IndexPartition& part, const SearchBounds& b, bool fix_theta, bool fix_phi) {
  NumericUpdate u{p.theta, p.phi, false};
  if (!fix_theta) {
    const Matrix M = e.w_hat * e.w_hat.transpose() + e.A_hat;
    auto q_theta = [&](double theta) { return expected_latent_loglik(theta, H, M); };
    u.theta = maximize_log_scale(q_theta, p.theta, b.theta_lo, b.theta_hi, u.stalled);
  }
  // With one site g == 1 for every phi and Q is flat in phi.
  if (!fix_phi && sites.size() > 1) {
    ParamVector trial = p;
    auto q_phi = [&](double phi) {
      trial.phi = phi;
      return expected_measurement_loglik(trial, sites, e, H, part);
    };
    u.phi = maximize_log_scale(q_phi, p.phi, b.phi_lo, b.phi_hi, u.stalled);
  }
  return u;
}

}  // namespace

NumericUpdate m_step_numeric(const ParamVector& params_k, const SiteSet& sites, const EStepResult& e,
                             const SearchBounds& bounds) {
  params_k.validate();
  return numeric_update(params_k, sites, e, distance_matrix(sites), partition(sites), bounds, false, false);
}

// ---------------------------------------------------------------------------
// Driver

namespace {

// Regression start for (mu, beta, sigma2_eps, gamma) given theta and phi.
void regression_start(ParamVector& p, const SiteSet& sites, const Matrix& H, const IndexPartition& part) {
  const Vector g = g_vector(H, interaction_spec(p));
  Vector z = part.gather(sites.values().cwiseQuotient(g));
  p.mu = p.mu_fixed_zero ? 0.0 : z.mean();
  z.array() -= p.mu;
  if (sites.num_covariates() > 0) {
    const Matrix X1 = part.gather_rows(sites.covariates());
    p.beta = checked_qr(X1).solve(z);
    z -= X1 * p.beta;
  }
  double var = z.squaredNorm() / static_cast<double>(z.size());
  if (!(var > 0.0)) var = 1.0;
  p.sigma2_eps = 0.5 * var;
  p.gamma = std::sqrt(0.5 * var);
}

double safe_loglik(const ParamVector& p, const SiteSet& sites, const Matrix& H, const IndexPartition& part) {
  try {
    const double l = log_likelihood(p, sites, H, part);
    return std::isfinite(l) ? l : kNegInf;
  } catch (const Error&) {
    return kNegInf;
  }
}

}  // namespace

ParamVector initial_params(const SiteSet& sites, bool mu_fixed_zero, double alpha) {
  const Matrix H = distance_matrix(sites);
  const IndexPartition part = partition(sites);
  double scale = median_pairwise_distance(H);
  if (!(scale > 0.0)) scale = 1.0;

  ParamVector p;
  p.mu_fixed_zero = mu_fixed_zero;
  p.alpha = alpha;
  p.theta = scale;
  p.phi = scale;
  p.beta = Vector::Zero(sites.num_covariates());
  regression_start(p, sites, H, part);
  if (sites.size() < 2) return p;

  // Halving scan of phi, then theta, keeping the best observed likelihood.
  // A phi near the median distance makes g tiny everywhere and the fit
  // starting there tends to stay in that basin.
  ParamVector best = p;
  double best_ll = safe_loglik(p, sites, H, part);
  for (int k = 1; k <= kInitScanSteps; ++k) {
    ParamVector trial = p;
    trial.phi = scale * std::ldexp(1.0, -k);
    regression_start(trial, sites, H, part);
    const double l = safe_loglik(trial, sites, H, part);
    if (l > best_ll) {
      best = trial;
      best_ll = l;
    }
  }
  const ParamVector by_phi = best;
  for (int k = 1; k <= kInitScanSteps; ++k) {
    ParamVector trial = by_phi;
    trial.theta = scale * std::ldexp(1.0, -k);
    const double l = safe_loglik(trial, sites, H, part);
    if (l > best_ll) {
      best = trial;
      best_ll = l;
    }
  }
  return best;
}

namespace {

struct EmPoint {
  ParamVector params;
  CovarianceBundle bundle;
  double loglik = kNegInf;
};

struct EmContext {
  const SiteSet& sites;
  const Matrix& H;
  const IndexPartition& part;
  const SearchBounds& bounds;
  const EmOptions& opts;
  Matrix X1;
  Eigen::ColPivHouseholderQR<Matrix> qr;
  double sigma2_floor = 0.0;
  int stalls = 0;
};

// One E-step followed by the conditional maximizations.
EmPoint em_map(const EmPoint& at, EmContext& ctx) {
  const SiteSet& sites = ctx.sites;
  const IndexPartition& part = ctx.part;
  const ParamVector& pk = at.params;
  const EStepResult e = e_step(pk, sites, at.bundle, part);
  const Vector w1 = part.gather(e.w_hat);
  const double trA1 = observed_trace(e.A_hat, part);
  const auto n = static_cast<double>(sites.size());
  const auto n_obs = static_cast<double>(sites.num_observed());
  const auto n_mis = static_cast<double>(sites.num_missing());

  ParamVector next = pk;
  if (ctx.opts.order == UpdateOrder::Simultaneous) {
    const ClosedFormUpdate u = m_step_closed(pk, sites, e);
    next.mu = u.mu;
    next.beta = u.beta;
    next.sigma2_eps = u.sigma2_eps;
    next.gamma = u.gamma;
  } else {
    Vector r = residual(pk, sites, at.bundle.g, e, part);
    if (!pk.mu_fixed_zero) {
      const double dmu = r.sum() / n_obs;
      next.mu += dmu;
      r.array() -= dmu;
    }
    if (ctx.X1.cols() > 0) {
      const Vector dbeta = ctx.qr.solve(r);
      next.beta += dbeta;
      r -= ctx.X1 * dbeta;
    }
    next.gamma = (r + pk.gamma * w1).dot(w1) / (w1.squaredNorm() + trA1);
    r += (pk.gamma - next.gamma) * w1;
    next.sigma2_eps = (r.squaredNorm() + next.gamma * next.gamma * trA1 + pk.sigma2_eps * n_mis) / n;
  }
  next.sigma2_eps = std::max(next.sigma2_eps, ctx.sigma2_floor);

  const NumericUpdate nu =
      numeric_update(next, sites, e, ctx.H, part, ctx.bounds, ctx.opts.fix_theta, ctx.opts.fix_phi);
  if (nu.stalled) ++ctx.stalls;
  next.theta = nu.theta;
  next.phi = nu.phi;

  EmPoint out;
  out.bundle = assemble(next, sites, ctx.H, part);
  out.loglik = log_likelihood(next, sites, out.bundle, part);
  out.params = std::move(next);
  return out;
}

// Fisher-scoring direction I^-1 grad l on the observed likelihood, with
// I_ij = d_i eps' S^-1 d_j eps + 1/2 tr(S^-1 d_i S S^-1 d_j S).
// Coordinates in `held` are kept fixed.
std::optional<Vector> scoring_direction(const ParamVector& p, const SiteSet& sites, const IndexPartition& part,
                                        const std::vector<Index>& held) {
  const InnovationDerivatives d = epsilon_and_derivatives(p, sites);
  const Eigen::LLT<Matrix> llt(part.gather_block(d.sigma));
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Index n1 = static_cast<Index>(part.observed().size());
  const Matrix S_inv = llt.solve(Matrix::Identity(n1, n1));
  const Vector alpha = S_inv * part.gather(d.epsilon);

  const auto k = static_cast<Index>(d.labels.size());
  std::vector<Vector> de(static_cast<std::size_t>(k));
  std::vector<Matrix> P(static_cast<std::size_t>(k));
  std::vector<bool> has_sigma(static_cast<std::size_t>(k));
  Vector grad(k);
  for (Index i = 0; i < k; ++i) {
    const auto u = static_cast<std::size_t>(i);
    de[u] = part.gather(d.d_epsilon[u]);
    const Matrix dS = part.gather_block(d.d_sigma[u]);
    has_sigma[u] = !dS.isZero(0.0);
    grad[i] = -alpha.dot(de[u]);
    if (has_sigma[u]) {
      P[u] = S_inv * dS;
      grad[i] += -0.5 * P[u].trace() + 0.5 * alpha.dot(dS * alpha);
    }
  }
  Matrix info(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = i; j < k; ++j) {
      const auto u = static_cast<std::size_t>(i);
      const auto v = static_cast<std::size_t>(j);
      double x = de[u].dot(S_inv * de[v]);
      if (has_sigma[u] && has_sigma[v]) x += 0.5 * P[u].cwiseProduct(P[v].transpose()).sum();
      info(i, j) = x;
      info(j, i) = x;
    }
  // theta and phi move on log scale.
  Vector scale = Vector::Ones(k);
  const Vector x = p.free_values();
  for (Index i : {k - 2, k - 1}) scale[i] = x[i];
  grad = grad.cwiseProduct(scale);
  info = scale.asDiagonal() * info * scale.asDiagonal();
  // A parameter the data carry no information about (e.g. phi when every
  // g is 1) is held as well.
  std::vector<Index> fixed = held;
  const double diag_max = info.diagonal().cwiseAbs().maxCoeff();
  for (Index i = 0; i < k; ++i)
    if (!(info(i, i) > kInfoFloor * diag_max)) fixed.push_back(i);
  for (Index h : fixed) {
    grad[h] = 0.0;
    info.row(h).setZero();
    info.col(h).setZero();
    info(h, h) = 1.0;
  }
  const Eigen::LDLT<Matrix> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  Vector dir = ldlt.solve(grad);
  if (!dir.allFinite()) return std::nullopt;
  return dir;
}

// Tries p + t dir for t = 1, 1/2, ... and returns the first point that
// raises the likelihood.
std::optional<EmPoint> line_search(const EmPoint& at, const Vector& dir, EmContext& ctx) {
  const Vector base = at.params.free_values();
  const Index k = base.size();
  const SearchBounds& b = ctx.bounds;
  for (double t = 1.0; t > 1e-3; t *= 0.5) {
    Vector x = base + t * dir;
    for (Index i : {k - 2, k - 1}) x[i] = base[i] * std::exp(t * dir[i]);
    // Projected onto the floor: the maximum often sits on that boundary,
    // which EM alone approaches very slowly.
    x[k - 4] = std::max(x[k - 4], ctx.sigma2_floor);
    if (x[k - 2] < b.theta_lo || x[k - 2] > b.theta_hi || x[k - 1] < b.phi_lo || x[k - 1] > b.phi_hi) continue;
    try {
      EmPoint trial;
      trial.params = at.params.with_free_values(x);
      trial.bundle = assemble(trial.params, ctx.sites, ctx.H, ctx.part);
      trial.loglik = log_likelihood(trial.params, ctx.sites, trial.bundle, ctx.part);
      if (std::isfinite(trial.loglik) && trial.loglik > at.loglik) return trial;
    } catch (const Error&) {
    }
  }
  return std::nullopt;
}

std::optional<EmPoint> scoring_step(const EmPoint& at, EmContext& ctx) {
  const Vector base = at.params.free_values();
  const Index k = base.size();
  std::vector<Index> held;
  if (ctx.opts.fix_theta) held.push_back(k - 2);
  if (ctx.opts.fix_phi) held.push_back(k - 1);
  try {
    const std::optional<Vector> dir = scoring_direction(at.params, ctx.sites, ctx.part, held);
    if (!dir) return std::nullopt;
    // sigma2_eps on its floor and pushed further down stays there.
    const bool at_floor = base[k - 4] <= kFloorSlack * ctx.sigma2_floor && (*dir)[k - 4] < 0.0;
    if (!at_floor) {
      if (auto next = line_search(at, *dir, ctx)) return next;
    }
    // A full step that crosses the floor moves the other coordinates as if
    // sigma2_eps kept falling; retry with it held.
    if (at_floor || base[k - 4] + (*dir)[k - 4] < ctx.sigma2_floor) {
      held.push_back(k - 4);
      if (const auto held_dir = scoring_direction(at.params, ctx.sites, ctx.part, held))
        return line_search(at, *held_dir, ctx);
    }
  } catch (const Error&) {
  }
  return std::nullopt;
}

double max_relative_change(const ParamVector& a, const ParamVector& b) {
  const Vector va = a.free_values();
  const Vector vb = b.free_values();
  double m = 0.0;
  for (Index i = 0; i < va.size(); ++i) m = std::max(m, std::abs(vb[i] - va[i]) / std::max(std::abs(va[i]), 1.0));
  return m;
}

}  // namespace

FitResult fit_em(const SiteSet& sites, const ParamVector& init, const EmOptions& opts) {
  init.validate();
  if (opts.max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
  if (init.beta.size() != sites.num_covariates())
    throw Error(ErrorCode::DimensionMismatch, "beta length differs from covariate count");

  const Matrix H = distance_matrix(sites);
  const IndexPartition part = partition(sites);
  const SearchBounds bounds = opts.bounds.value_or(SearchBounds::defaults(H));
  EmContext ctx{sites, H, part, bounds, opts, part.gather_rows(sites.covariates()), {}, 0.0, 0};
  ctx.qr = checked_qr(ctx.X1);
  ctx.sigma2_floor = 1e-12 * std::max(1.0, init.sigma2_eps);

  FitResult fit;
  EmPoint cur;
  cur.params = init;
  cur.bundle = assemble(init, sites, H, part);
  cur.loglik = log_likelihood(init, sites, cur.bundle, part);
  fit.loglik_trace.push_back(cur.loglik);

  auto record = [&](EmPoint next) {
    cur = std::move(next);
    fit.loglik_trace.push_back(cur.loglik);
    ++fit.iterations;
  };

  // Each EM step is followed by a Fisher-scoring step on the observed
  // likelihood that is kept only when it raises the likelihood, so the
  // recorded trace stays non-decreasing. Convergence is judged over the
  // pair: with sigma2_eps on its floor the EM step alone barely moves.
  while (fit.iterations < opts.max_iter) {
    const ParamVector start = cur.params;
    const double start_ll = cur.loglik;
    record(em_map(cur, ctx));
    if (fit.iterations < opts.max_iter) {
      if (auto next = scoring_step(cur, ctx)) record(std::move(*next));
    }
    if (std::abs(cur.loglik - start_ll) < opts.tol && max_relative_change(start, cur.params) < opts.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.optimizer_stalls = ctx.stalls;
  fit.params = cur.params;
  fit.e_step = e_step(fit.params, sites, cur.bundle, part);
  // (gamma, w) and (-gamma, -w) describe the same model; report gamma >= 0.
  if (fit.params.gamma < 0.0) {
    fit.params.gamma = -fit.params.gamma;
    fit.e_step.w_hat = -fit.e_step.w_hat;
  }
  return fit;
}

}  // namespace geopot
