#pragma once

// Parameter uncertainty: approximate information matrix with analytic
// derivatives of the innovation y - G(1 mu + X beta) and its covariance,
// Wald intervals and parametric bootstrap intervals.

#include <cstdint>
#include <string>
#include <vector>

#include "geopot/core.hpp"
#include "geopot/estimation.hpp"

namespace geopot {

enum class DerivativeMode { Analytic, FiniteDifference };

/// Innovation, its covariance and their derivatives with respect to every
/// free parameter (ParamVector::free_labels order). Vectors and matrices
/// span all N sites; the innovation is NaN at missing sites.
struct InnovationDerivatives {
  std::vector<std::string> labels;
  Vector epsilon;
  Matrix sigma;
  std::vector<Vector> d_epsilon;
  std::vector<Matrix> d_sigma;
  /// Set when alpha != 1 forced finite differences for the phi derivatives.
  bool phi_finite_difference = false;
};

InnovationDerivatives epsilon_and_derivatives(const ParamVector& params, const SiteSet& sites,
                                              DerivativeMode mode = DerivativeMode::Analytic);

struct InfoMatrix {
  std::vector<std::string> labels;
  Matrix I_tilde;
  bool phi_finite_difference = false;
};

/// I_ij = d_i eps' S^-1 d_j eps + 1/2 tr(S^-1 d_i S S^-1 d_j S)
///        + 1/4 tr(S^-1 d_i S) tr(S^-1 d_j S)
/// on the observed blocks (extracted before inversion). The last term is
/// kept with the + 1/4 weight deliberately; see README.
InfoMatrix fisher_information(const ParamVector& params, const SiteSet& sites,
                              DerivativeMode mode = DerivativeMode::Analytic);

struct Interval {
  std::string label;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct WaldResult {
  std::vector<Interval> intervals;
  Vector variance;  // diag of I^-1
  Matrix covariance;
  /// Normal approximation flagged as unreliable (fewer than 100 observed sites).
  bool small_sample_caveat = false;
};

/// Inverse standard normal CDF.
double normal_quantile(double p);

/// Throws SingularInformation when the matrix cannot be inverted or has a
/// non-positive variance.
WaldResult wald_intervals(const ParamVector& estimate, const InfoMatrix& info, double level, Index num_observed);
WaldResult wald_intervals(const FitResult& fit, const InfoMatrix& info, double level, Index num_observed);

/// Predicate rejecting bootstrap runs with implausible estimates.
struct FilterRule {
  enum class Kind {
    None,
    PhiAboveMaxDistance,  // phi > largest pairwise site distance
    PhiAbove,             // phi > threshold (meters)
  };
  Kind kind = Kind::PhiAboveMaxDistance;
  double threshold = 0.0;

  bool rejects(const ParamVector& p, double max_distance) const;
  std::string describe() const;
};

struct BootstrapSample {
  std::vector<ParamVector> raw;     // every refit that produced estimates, by replicate index
  std::vector<bool> raw_converged;
  std::vector<ParamVector> kept;    // converged and not rejected by the filter
  std::string filter_rule;
  std::uint64_t seed = 0;
  int requested = 0;
  int failed = 0;        // refit threw (e.g. singular covariance)
  int nonconverged = 0;
  int filtered = 0;
};

struct BootstrapOptions {
  int replicates = 200;
  FilterRule filter;
  double level = 0.95;
  std::uint64_t seed = 1;
  EmOptions em;
  unsigned threads = 1;
};

struct BootstrapResult {
  BootstrapSample sample;
  std::vector<std::string> labels;
  std::vector<Interval> intervals;  // empirical percentiles over kept runs
  Matrix covariance;                // empirical covariance over kept runs
};

/// Simulates from the fitted parameters, refits each replicate from the
/// deterministic initializer and summarizes the kept estimates.
BootstrapResult bootstrap(const FitResult& fit, const SiteSet& sites, const BootstrapOptions& opts);

/// Linear-interpolation (type 7) quantile of unsorted data.
double empirical_quantile(std::vector<double> values, double prob);

struct VarianceComparison {
  std::string label;
  double wald = 0.0;
  double bootstrap = 0.0;
};

/// Side-by-side Wald and bootstrap variances for reporting.
std::vector<VarianceComparison> compare_variances(const WaldResult& wald, const BootstrapResult& boot);

}  // namespace geopot
