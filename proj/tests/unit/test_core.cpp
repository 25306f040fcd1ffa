#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "geopot/core.hpp"
#include "support.hpp"

using namespace geopot;

TEST_SUITE("core") {

TEST_CASE("distance matrix of a 3-4-5 pair") {
  const std::vector<Point> pts{{0, 0}, {3, 4}};
  const Matrix H = distance_matrix(pts);
  CHECK(H(0, 0) == 0.0);
  CHECK(H(0, 1) == 5.0);
  CHECK(H(1, 0) == 5.0);
}

TEST_CASE("distance matrix of the unit-square layout") {
  const std::vector<Point> pts{{0.2, 0.2}, {0.2, 0.8}, {0.8, 0.2}, {0.8, 0.8}};
  const Matrix H = distance_matrix(pts);
  CHECK(H(0, 1) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(H(0, 2) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(H(0, 3) == doctest::Approx(std::sqrt(0.72)).epsilon(1e-14));
  CHECK(H(0, 3) == doctest::Approx(0.84853).epsilon(1e-5));
}

TEST_CASE("single site distance matrix") {
  const std::vector<Point> pts{{1, 1}};
  const Matrix H = distance_matrix(pts);
  CHECK(H.rows() == 1);
  CHECK(H(0, 0) == 0.0);
}

TEST_CASE("distance matrix is symmetric, zero-diagonal and metric") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-50, 50);
  std::vector<Point> pts;
  for (int i = 0; i < 12; ++i) pts.push_back({U(rng), U(rng)});
  const Matrix H = distance_matrix(pts);
  for (int i = 0; i < 12; ++i) {
    CHECK(H(i, i) == 0.0);
    for (int j = 0; j < 12; ++j) {
      CHECK(H(i, j) == H(j, i));
      for (int k = 0; k < 12; ++k) CHECK(H(i, k) <= H(i, j) + H(j, k) + 1e-12);
    }
  }
}

TEST_CASE("distance matrix is invariant under rigid motions") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0, 1000);
  std::vector<Point> pts, moved;
  const double a = 0.7;
  for (int i = 0; i < 10; ++i) {
    const Point p{U(rng), U(rng)};
    pts.push_back(p);
    moved.push_back({std::cos(a) * p.x - std::sin(a) * p.y + 1234.5, std::sin(a) * p.x + std::cos(a) * p.y - 77.0});
  }
  const Matrix H1 = distance_matrix(pts);
  const Matrix H2 = distance_matrix(moved);
  CHECK(testsupport::max_abs(H1 - H2) <= 1e-9 * testsupport::max_abs(H1));
}

TEST_CASE("partition splits observed and missing in order") {
  const SiteSet s({{0, 0}, {1, 0}, {2, 0}}, Vector::Constant(3, 1.0), std::vector<bool>{false, false, true},
                  Matrix());
  const IndexPartition p = partition(s);
  CHECK(p.observed() == std::vector<Index>{0, 1});
  CHECK(p.missing() == std::vector<Index>{2});
}

TEST_CASE("partition without missing data gathers the identity") {
  const Vector v = Vector::LinSpaced(4, 1.0, 4.0);
  const SiteSet s({{0, 0}, {1, 0}, {2, 0}, {3, 0}}, v, Matrix());
  const IndexPartition p = partition(s);
  CHECK(p.missing().empty());
  CHECK(p.gather(v) == v);
}

TEST_CASE("gather then scatter reproduces observed positions") {
  Vector v(3);
  v << 7, 8, 9;
  const SiteSet s({{0, 0}, {1, 0}, {2, 0}}, v, std::vector<bool>{false, true, false}, Matrix());
  const IndexPartition p = partition(s);
  const Vector back = p.scatter(p.gather(v), -1.0);
  CHECK(back[0] == 7.0);
  CHECK(back[1] == -1.0);
  CHECK(back[2] == 9.0);
}

TEST_CASE("scatter(gather(v)) agrees with v on observed entries for random masks") {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution miss(0.3);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 1 + rep % 9;
    std::vector<bool> mask(static_cast<std::size_t>(n));
    for (auto&& m : mask) m = miss(rng);
    mask[0] = false;
    std::vector<Point> pts;
    for (int i = 0; i < n; ++i) pts.push_back({double(i), 0.0});
    const Vector v = Vector::Random(n);
    const SiteSet s(pts, v, mask, Matrix());
    const IndexPartition p = partition(s);
    const Vector back = p.scatter(p.gather(v), 0.0);
    for (Index i : p.observed()) CHECK(back[i] == v[i]);
    CHECK(p.observed().size() + p.missing().size() == static_cast<std::size_t>(n));
  }
}

TEST_CASE("all-missing data is rejected") {
  CHECK_THROWS_AS(SiteSet({{0, 0}}, Vector::Zero(1), std::vector<bool>{true}, Matrix()), Error);
  try {
    SiteSet({{0, 0}, {1, 1}}, Vector::Constant(2, std::nan("")), Matrix());
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllMissing);
  }
}

TEST_CASE("submatrix of the inverse differs from the inverse of the submatrix") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> N01;
  Matrix A(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) A(i, j) = N01(rng);
  const Matrix B = A * A.transpose() + Matrix::Identity(4, 4);
  const SiteSet s({{0, 0}, {1, 0}, {2, 0}, {3, 0}}, Vector::Zero(4), std::vector<bool>{false, true, false, false},
                  Matrix());
  const IndexPartition p = partition(s);
  const Matrix inv_of_sub = p.gather_block(B).inverse();
  const Matrix sub_of_inv = p.gather_block(B.inverse());
  CHECK(testsupport::max_abs(inv_of_sub - sub_of_inv) > 1e-6);
}

TEST_CASE("duplicate coordinates are accepted and flagged") {
  const SiteSet s({{0, 0}, {0, 0}, {1, 1}}, Vector::Ones(3), Matrix());
  CHECK(s.has_duplicates());
  const SiteSet t({{0, 0}, {1, 0}}, Vector::Ones(2), Matrix());
  CHECK_FALSE(t.has_duplicates());
}

TEST_CASE("parameter vector free layout") {
  ParamVector p;
  p.beta = Vector(2);
  p.beta << 1, 2;
  CHECK(p.free_labels() == std::vector<std::string>{"mu", "beta1", "beta2", "sigma2_eps", "gamma", "theta", "phi"});
  p.mu_fixed_zero = true;
  p.mu = 0.0;
  CHECK(p.num_free() == 6);
  const Vector v = p.free_values();
  const ParamVector q = p.with_free_values(v * 2.0);
  CHECK(q.beta[1] == 4.0);
  CHECK(q.mu == 0.0);
  p.theta = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("grid nodes are row-major with y outer") {
  const GridSpec g{10.0, 20.0, 5.0, 3, 2};
  CHECK(g.num_cells() == 6);
  CHECK(g.node(1) == Point{15.0, 20.0});
  CHECK(g.node(3) == Point{10.0, 25.0});
  const std::vector<Point> pts{{0, 0}, {10, 4}};
  const GridSpec c = GridSpec::covering(pts, 1.0, 2.0);
  CHECK(c.x0 == -1.0);
  CHECK(c.node(c.num_cells() - 1).x >= 11.0);
  CHECK(c.node(c.num_cells() - 1).y >= 5.0);
}

}  // TEST_SUITE
