#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "geopot/inference.hpp"
#include "support.hpp"

using namespace geopot;
using testsupport::max_abs;

TEST_SUITE("inference") {

TEST_CASE("innovation derivative of mu is -g") {
  // Two sites at distance d with g = 1 / (1 + exp(-d / phi)) = 0.8.
  const double phi = 1.0;
  const double d = -phi * std::log(0.25);
  const SiteSet s({{0, 0}, {d, 0}}, Vector::Constant(2, 1.0), Matrix());
  ParamVector p;
  p.beta = Vector();
  p.phi = phi;
  const auto der = epsilon_and_derivatives(p, s);
  CHECK(der.labels.front() == "mu");
  CHECK(der.d_epsilon[0][0] == doctest::Approx(-0.8).epsilon(1e-14));
  CHECK(der.d_epsilon[0][1] == doctest::Approx(-0.8).epsilon(1e-14));
}

TEST_CASE("covariance derivative of gamma vanishes at gamma = 0") {
  std::mt19937_64 rng(51);
  auto in = oracle::random_instance(rng, 5, 1, 1);
  in.gamma = 0.0;
  const auto der = epsilon_and_derivatives(testsupport::params_of(in), testsupport::sites_of(in));
  const auto it = std::find(der.labels.begin(), der.labels.end(), "gamma");
  REQUIRE(it != der.labels.end());
  CHECK(max_abs(der.d_sigma[static_cast<std::size_t>(it - der.labels.begin())]) == 0.0);
}

TEST_CASE("analytic derivatives match the independent table and finite differences") {
  std::mt19937_64 rng(52);
  for (int rep = 0; rep < 10; ++rep) {
    const auto in = testsupport::with_library_jitter(oracle::random_instance(rng, 4 + rep % 3, rep % 3, rep % 2, rep % 4 == 1));
    const auto der = epsilon_and_derivatives(testsupport::params_of(in), testsupport::sites_of(in));
    const auto table = oracle::analytic(in);
    const auto fd = oracle::finite_difference(in);
    REQUIRE(der.d_epsilon.size() == table.de.size());
    const auto obs = in.observed();
    for (std::size_t i = 0; i < table.de.size(); ++i) {
      INFO("parameter ", der.labels[i]);
      const Vector de = oracle::sub(der.d_epsilon[i], obs);
      CHECK(testsupport::scaled_err(de, oracle::sub(table.de[i], obs)) < 1e-12);
      CHECK(testsupport::scaled_err(der.d_sigma[i], table.dS[i]) < 1e-12);
      CHECK(testsupport::scaled_err(de, oracle::sub(fd.de[i], obs)) < 1e-5);
      CHECK(testsupport::scaled_err(der.d_sigma[i], fd.dS[i]) < 1e-5);
    }
  }
}

TEST_CASE("finite-difference mode agrees with the analytic mode") {
  std::mt19937_64 rng(53);
  const auto in = oracle::random_instance(rng, 6, 1, 1);
  const auto a = epsilon_and_derivatives(testsupport::params_of(in), testsupport::sites_of(in));
  const auto f = epsilon_and_derivatives(testsupport::params_of(in), testsupport::sites_of(in),
                                         DerivativeMode::FiniteDifference);
  for (std::size_t i = 0; i < a.d_sigma.size(); ++i) {
    CHECK(testsupport::scaled_err(a.d_sigma[i], f.d_sigma[i]) < 1e-5);
    const auto part = partition(testsupport::sites_of(in));
    CHECK(testsupport::scaled_err(part.gather(a.d_epsilon[i]), part.gather(f.d_epsilon[i])) < 1e-5);
  }
  CHECK_FALSE(a.phi_finite_difference);
}

TEST_CASE("alpha other than 1 falls back to finite differences for phi") {
  std::mt19937_64 rng(54);
  const auto in = oracle::random_instance(rng, 5, 1, 0);
  ParamVector p = testsupport::params_of(in);
  p.alpha = 1.5;
  const auto der = epsilon_and_derivatives(p, testsupport::sites_of(in));
  CHECK(der.phi_finite_difference);
  const auto info = fisher_information(p, testsupport::sites_of(in));
  CHECK(info.phi_finite_difference);
  CHECK(info.I_tilde.allFinite());
}

TEST_CASE("scalar information is 3/4 sigma^-4") {
  ParamVector p;
  p.mu_fixed_zero = true;
  p.beta = Vector();
  p.sigma2_eps = 2.0;
  p.gamma = 0.0;
  const SiteSet s({{0, 0}}, Vector::Constant(1, 0.3), Matrix());
  const InfoMatrix info = fisher_information(p, s);
  REQUIRE(info.labels[0] == "sigma2_eps");
  CHECK(info.I_tilde(0, 0) == doctest::Approx(0.75 / 4.0).epsilon(1e-14));

  // Only sigma2_eps is informative; unit filler keeps the rest invertible.
  InfoMatrix block = info;
  block.I_tilde = Matrix::Identity(4, 4);
  block.I_tilde(0, 0) = info.I_tilde(0, 0);
  const WaldResult w = wald_intervals(p, block, 0.95, 1);
  CHECK(w.variance[0] == doctest::Approx(4.0 / 3.0 * 4.0).epsilon(1e-14));
  CHECK(w.small_sample_caveat);
}

TEST_CASE("information matches the term-by-term oracle") {
  std::mt19937_64 rng(55);
  for (int rep = 0; rep < 10; ++rep) {
    const auto in = testsupport::with_library_jitter(oracle::random_instance(rng, 4 + rep % 3, rep % 2, rep % 3));
    const InfoMatrix info = fisher_information(testsupport::params_of(in), testsupport::sites_of(in));
    const Matrix ref = oracle::information(in, oracle::analytic(in));
    CHECK(max_abs(info.I_tilde - ref) < 1e-10 * std::max(1.0, max_abs(ref)));
    CHECK(max_abs(info.I_tilde - info.I_tilde.transpose()) <= 1e-10 * info.I_tilde.norm());
    CHECK(info.labels == testsupport::params_of(in).free_labels());
  }
}

TEST_CASE("information does not depend on site order") {
  std::mt19937_64 rng(56);
  const auto in = oracle::random_instance(rng, 7, 2, 2);
  const SiteSet s = testsupport::sites_of(in);
  std::vector<Index> order(7);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const ParamVector p = testsupport::params_of(in);
  const Matrix a = fisher_information(p, s).I_tilde;
  const Matrix b = fisher_information(p, s.permuted(order)).I_tilde;
  CHECK(testsupport::scaled_err(a, b) < 1e-10);
}

TEST_CASE("Wald intervals") {
  ParamVector p;
  p.mu = 5.0;
  p.beta = Vector();
  InfoMatrix info;
  info.labels = p.free_labels();
  info.I_tilde = Matrix::Identity(5, 5);
  info.I_tilde(0, 0) = 0.25;
  const WaldResult w95 = wald_intervals(p, info, 0.95, 150);
  CHECK(w95.intervals[0].upper - 5.0 == doctest::Approx(3.92).epsilon(1e-3));
  CHECK(5.0 - w95.intervals[0].lower == doctest::Approx(1.959963985 * 2.0).epsilon(1e-8));
  CHECK_FALSE(w95.small_sample_caveat);
  const WaldResult w50 = wald_intervals(p, info, 0.50, 150);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(w50.intervals[i].upper - w50.intervals[i].lower < w95.intervals[i].upper - w95.intervals[i].lower);
  info.I_tilde(1, 1) = 0.0;
  try {
    wald_intervals(p, info, 0.95, 150);
    FAIL("expected SingularInformation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularInformation);
  }
}

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(normal_quantile(0.001) == doctest::Approx(-3.090232306167813).epsilon(1e-9));
  CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-8));
  for (double q = 0.01; q < 0.5; q += 0.01) CHECK(normal_quantile(q) == doctest::Approx(-normal_quantile(1.0 - q)).epsilon(1e-12));
}

TEST_CASE("empirical quantile") {
  CHECK(empirical_quantile({3.0}, 0.025) == 3.0);
  CHECK(empirical_quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(empirical_quantile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(empirical_quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(empirical_quantile({0, 10}, 0.25) == 2.5);
}

TEST_CASE("filter rules") {
  ParamVector p;
  p.beta = Vector();
  p.phi = 1600.0;
  CHECK(FilterRule{}.rejects(p, 1500.0));
  CHECK_FALSE(FilterRule{}.rejects(p, 1700.0));
  CHECK(FilterRule{FilterRule::Kind::PhiAbove, 1500.0}.rejects(p, 1e9));
  CHECK_FALSE(FilterRule{FilterRule::Kind::None, 0.0}.rejects(p, 1.0));
  CHECK_FALSE(FilterRule{}.describe().empty());
}

TEST_CASE("bootstrap bookkeeping and reproducibility") {
  auto sc = testsupport::synthetic_scenario(40, 2000.0, 57);
  const SiteSet y = simulate(sc.truth, sc.base, 57);
  const FitResult fit = fit_em(y, initial_params(y, true));

  SUBCASE("one replicate gives a degenerate interval") {
    BootstrapOptions opts;
    opts.replicates = 1;
    opts.filter.kind = FilterRule::Kind::None;
    const auto r = bootstrap(fit, y, opts);
    REQUIRE(r.sample.kept.size() == 1);
    const Vector v = r.sample.kept[0].free_values();
    for (std::size_t j = 0; j < r.intervals.size(); ++j) {
      CHECK(r.intervals[j].lower == v[static_cast<Index>(j)]);
      CHECK(r.intervals[j].upper == v[static_cast<Index>(j)]);
    }
    CHECK(max_abs(r.covariance) == 0.0);
  }

  SUBCASE("filter counts add up and runs are reproducible") {
    BootstrapOptions opts;
    opts.replicates = 12;
    opts.seed = 99;
    opts.filter = {FilterRule::Kind::PhiAbove, fit.params.phi};
    const auto a = bootstrap(fit, y, opts);
    CHECK(a.sample.requested == 12);
    CHECK(a.sample.failed + static_cast<int>(a.sample.raw.size()) == 12);
    CHECK(a.sample.nonconverged + a.sample.filtered + static_cast<int>(a.sample.kept.size()) ==
          static_cast<int>(a.sample.raw.size()));
    CHECK(a.sample.filtered > 0);
    CHECK(a.sample.kept.size() < a.sample.raw.size());
    for (const auto& k : a.sample.kept) CHECK(k.phi <= fit.params.phi);

    opts.threads = 3;
    const auto b = bootstrap(fit, y, opts);
    REQUIRE(a.sample.raw.size() == b.sample.raw.size());
    for (std::size_t i = 0; i < a.sample.raw.size(); ++i)
      CHECK(a.sample.raw[i].free_values() == b.sample.raw[i].free_values());
    CHECK(a.covariance == b.covariance);

    opts.seed = 100;
    const auto c = bootstrap(fit, y, opts);
    CHECK(c.sample.raw[0].free_values() != a.sample.raw[0].free_values());
  }

  SUBCASE("variance comparison pairs labels") {
    BootstrapOptions opts;
    opts.replicates = 5;
    const auto boot = bootstrap(fit, y, opts);
    const auto w = wald_intervals(fit, fisher_information(fit.params, y), 0.95, y.num_observed());
    const auto cmp = compare_variances(w, boot);
    REQUIRE(cmp.size() == boot.labels.size());
    for (std::size_t i = 0; i < cmp.size(); ++i) {
      CHECK(cmp[i].label == boot.labels[i]);
      CHECK(cmp[i].wald == doctest::Approx(w.variance[static_cast<Index>(i)]));
    }
  }
}

}  // TEST_SUITE
