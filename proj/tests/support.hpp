#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "geopot/core.hpp"
#include "geopot/model.hpp"
#include "oracles.hpp"

namespace testsupport {

inline geopot::SiteSet sites_of(const oracle::Instance& in) {
  return geopot::SiteSet(in.pts, in.y, in.X);
}

inline geopot::ParamVector params_of(const oracle::Instance& in) {
  geopot::ParamVector p;
  p.mu = in.mu;
  p.mu_fixed_zero = in.mu_fixed_zero;
  p.beta = in.beta;
  p.sigma2_eps = in.s2;
  p.gamma = in.gamma;
  p.theta = in.theta;
  p.phi = in.phi;
  return p;
}

// The library's starting jitter on a unit-diagonal correlation matrix.
inline oracle::Instance with_library_jitter(oracle::Instance in) {
  in.jitter = geopot::kJitterStart;
  return in;
}

inline double max_abs(const geopot::Matrix& a) { return a.cwiseAbs().maxCoeff(); }

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// Relative error with an absolute floor scaled by `scale`.
inline double scaled_err(const geopot::Matrix& a, const geopot::Matrix& b) {
  const double scale = std::max(max_abs(a), max_abs(b));
  if (scale == 0.0) return 0.0;
  return max_abs(a - b) / scale;
}

// Uniform sites in a square with two covariates, 10% missing.
struct Scenario {
  geopot::SiteSet base;
  geopot::ParamVector truth;
};

inline Scenario synthetic_scenario(int n = 100, double side = 2000.0, std::uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, side);
  std::vector<geopot::Point> pts;
  geopot::Matrix X(n, 2);
  geopot::Vector y = geopot::Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    pts.push_back({U(rng), U(rng)});
    X(i, 0) = U(rng) / side;
    X(i, 1) = 0.5 + 0.5 * std::sin(pts.back().x / (side / 5.0));
  }
  for (int i = 0; i < n; i += 10) y[i] = std::nan("");
  geopot::ParamVector p;
  p.mu_fixed_zero = true;
  p.beta = geopot::Vector(2);
  p.beta << 20.0, 10.0;
  p.sigma2_eps = 1.0;
  p.gamma = 3.0;
  p.theta = 400.0;
  p.phi = 100.0;
  return {geopot::SiteSet(pts, y, X), p};
}

}  // namespace testsupport
