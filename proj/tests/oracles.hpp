#pragma once

// Brute-force reference implementations used only by the tests. Everything
// here is written with explicit loops and a naive Gauss-Jordan inverse so
// that it shares no linear-algebra path with the library.

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "geopot/core.hpp"

namespace oracle {

using geopot::Index;
using geopot::Matrix;
using geopot::Point;
using geopot::Vector;

inline Matrix inverse(const Matrix& A) {
  const Index n = A.rows();
  Matrix a = A;
  Matrix inv = Matrix::Identity(n, n);
  for (Index c = 0; c < n; ++c) {
    Index piv = c;
    for (Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    a.row(c).swap(a.row(piv));
    inv.row(c).swap(inv.row(piv));
    const double d = a(c, c);
    for (Index j = 0; j < n; ++j) {
      a(c, j) /= d;
      inv(c, j) /= d;
    }
    for (Index r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      for (Index j = 0; j < n; ++j) {
        a(r, j) -= f * a(c, j);
        inv(r, j) -= f * inv(c, j);
      }
    }
  }
  return inv;
}

inline double log_det(const Matrix& A) {
  const Index n = A.rows();
  Matrix a = A;
  double ld = 0.0;
  for (Index c = 0; c < n; ++c) {
    Index piv = c;
    for (Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    a.row(c).swap(a.row(piv));
    ld += std::log(std::abs(a(c, c)));
    for (Index r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (Index j = c; j < n; ++j) a(r, j) -= f * a(c, j);
    }
  }
  return ld;
}

inline Matrix mul(const Matrix& A, const Matrix& B) {
  Matrix C = Matrix::Zero(A.rows(), B.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < B.cols(); ++j)
      for (Index k = 0; k < A.cols(); ++k) C(i, j) += A(i, k) * B(k, j);
  return C;
}

inline double trace(const Matrix& A) {
  double t = 0.0;
  for (Index i = 0; i < A.rows(); ++i) t += A(i, i);
  return t;
}

inline double quad(const Vector& a, const Matrix& M, const Vector& b) {
  double s = 0.0;
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < M.cols(); ++j) s += a[i] * M(i, j) * b[j];
  return s;
}

inline Matrix sub(const Matrix& A, const std::vector<Index>& rows, const std::vector<Index>& cols) {
  Matrix S(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) S(static_cast<Index>(i), static_cast<Index>(j)) = A(rows[i], cols[j]);
  return S;
}

inline Vector sub(const Vector& v, const std::vector<Index>& idx) {
  Vector s(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) s[static_cast<Index>(i)] = v[idx[i]];
  return s;
}

struct Instance {
  std::vector<Point> pts;
  Vector y;  // NaN = missing
  Matrix X;
  double mu = 0.0;
  bool mu_fixed_zero = false;
  Vector beta;
  double s2 = 1.0;
  double gamma = 1.0;
  double theta = 1.0;
  double phi = 1.0;
  double jitter = 0.0;  // added to the diagonal of the latent correlation

  Index n() const { return static_cast<Index>(pts.size()); }

  std::vector<Index> observed() const {
    std::vector<Index> o;
    for (Index i = 0; i < n(); ++i)
      if (!std::isnan(y[i])) o.push_back(i);
    return o;
  }
  std::vector<Index> missing() const {
    std::vector<Index> m;
    for (Index i = 0; i < n(); ++i)
      if (std::isnan(y[i])) m.push_back(i);
    return m;
  }

  double dist(Index i, Index j) const {
    const double dx = pts[static_cast<std::size_t>(i)].x - pts[static_cast<std::size_t>(j)].x;
    const double dy = pts[static_cast<std::size_t>(i)].y - pts[static_cast<std::size_t>(j)].y;
    return std::sqrt(dx * dx + dy * dy);
  }

  Matrix sigma_w() const {
    Matrix S(n(), n());
    for (Index i = 0; i < n(); ++i)
      for (Index j = 0; j < n(); ++j) S(i, j) = std::exp(-dist(i, j) / theta) + (i == j ? jitter : 0.0);
    return S;
  }

  Vector g() const {
    Vector v(n());
    for (Index i = 0; i < n(); ++i) {
      double s = 0.0;
      for (Index j = 0; j < n(); ++j)
        if (j != i) s += std::exp(-dist(i, j) / phi);
      v[i] = 1.0 / (1.0 + s);
    }
    return v;
  }

  Vector trend() const {
    Vector t(n());
    for (Index i = 0; i < n(); ++i) {
      t[i] = mu_fixed_zero ? 0.0 : mu;
      for (Index l = 0; l < beta.size(); ++l) t[i] += X(i, l) * beta[l];
    }
    return t;
  }

  // G (gamma^2 Sigma_w + s2 I) G' with an explicit diagonal G.
  Matrix sigma_y() const {
    const Vector gv = g();
    Matrix G = Matrix::Zero(n(), n());
    for (Index i = 0; i < n(); ++i) G(i, i) = gv[i];
    Matrix inner = gamma * gamma * sigma_w();
    for (Index i = 0; i < n(); ++i) inner(i, i) += s2;
    return mul(mul(G, inner), G.transpose());
  }

  Vector epsilon() const {
    const Vector gv = g();
    const Vector t = trend();
    Vector e(n());
    for (Index i = 0; i < n(); ++i) e[i] = y[i] - gv[i] * t[i];
    return e;
  }

  // Free-parameter vector in library order.
  Vector free() const {
    std::vector<double> v;
    if (!mu_fixed_zero) v.push_back(mu);
    for (Index l = 0; l < beta.size(); ++l) v.push_back(beta[l]);
    v.push_back(s2);
    v.push_back(gamma);
    v.push_back(theta);
    v.push_back(phi);
    return Eigen::Map<Vector>(v.data(), static_cast<Index>(v.size()));
  }
  Instance with_free(const Vector& v) const {
    Instance c = *this;
    Index k = 0;
    if (!mu_fixed_zero) c.mu = v[k++];
    for (Index l = 0; l < beta.size(); ++l) c.beta[l] = v[k++];
    c.s2 = v[k++];
    c.gamma = v[k++];
    c.theta = v[k++];
    c.phi = v[k++];
    return c;
  }
};

inline double gaussian_loglik(const Instance& in) {
  const auto o = in.observed();
  const Matrix S = sub(in.sigma_y(), o, o);
  const Vector e = sub(in.epsilon(), o);
  const double n = static_cast<double>(o.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det(S) + quad(e, inverse(S), e));
}

// Conditional moments of w given y^(1) from the joint covariance of (w, y).
struct Conditional {
  Vector w_hat;
  Matrix A_hat;
};

inline Conditional conditional_w(const Instance& in) {
  const auto o = in.observed();
  const Vector gv = in.g();
  const Matrix Sw = in.sigma_w();
  // Cov(w, y_j) = gamma Sigma_w(., j) g_j
  Matrix C(in.n(), static_cast<Index>(o.size()));
  for (Index i = 0; i < in.n(); ++i)
    for (std::size_t j = 0; j < o.size(); ++j) C(i, static_cast<Index>(j)) = in.gamma * Sw(i, o[j]) * gv[o[j]];
  const Matrix Sinv = inverse(sub(in.sigma_y(), o, o));
  const Vector e = sub(in.epsilon(), o);
  Conditional out;
  out.w_hat = mul(mul(C, Sinv), e);
  out.A_hat = Sw - mul(mul(C, Sinv), C.transpose());
  return out;
}

// Innovation and covariance derivatives by central differences of the
// explicit-loop forms.
struct Derivs {
  std::vector<Vector> de;
  std::vector<Matrix> dS;
};

inline Derivs finite_difference(const Instance& in, double rel_step = 1e-5) {
  const Vector p = in.free();
  Derivs d;
  for (Index i = 0; i < p.size(); ++i) {
    const double h = rel_step * std::max(std::abs(p[i]), 1.0);
    Vector up = p, dn = p;
    up[i] += h;
    dn[i] -= h;
    const Instance a = in.with_free(up);
    const Instance b = in.with_free(dn);
    Vector de = (a.epsilon() - b.epsilon()) / (2.0 * h);
    for (Index r = 0; r < in.n(); ++r)
      if (std::isnan(in.y[r])) de[r] = 0.0;
    d.de.push_back(de);
    d.dS.push_back((a.sigma_y() - b.sigma_y()) / (2.0 * h));
  }
  return d;
}

// Information matrix, term by term, with caller-supplied derivatives over
// all N sites (observed blocks taken here).
inline Matrix information(const Instance& in, const Derivs& d) {
  const auto o = in.observed();
  const Matrix Sinv = inverse(sub(in.sigma_y(), o, o));
  const auto k = static_cast<Index>(d.de.size());
  Matrix I(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      const auto ui = static_cast<std::size_t>(i);
      const auto uj = static_cast<std::size_t>(j);
      const Vector ei = sub(d.de[ui], o);
      const Vector ej = sub(d.de[uj], o);
      const Matrix Pi = mul(Sinv, sub(d.dS[ui], o, o));
      const Matrix Pj = mul(Sinv, sub(d.dS[uj], o, o));
      I(i, j) = quad(ei, Sinv, ej) + 0.5 * trace(mul(Pi, Pj)) + 0.25 * trace(Pi) * trace(Pj);
    }
  return I;
}

// Analytic derivatives written out independently of the library.
inline Derivs analytic(const Instance& in) {
  const Index n = in.n();
  const Vector gv = in.g();
  const Matrix Sw = in.sigma_w();
  Vector dg(n);
  for (Index p = 0; p < n; ++p) {
    double s = 0.0, num = 0.0;
    for (Index q = 0; q < n; ++q) {
      if (q == p) continue;
      const double h = in.dist(p, q);
      s += std::exp(-h / in.phi);
      num += h / (in.phi * in.phi) * std::exp(-h / in.phi);
    }
    dg[p] = -num / ((1.0 + s) * (1.0 + s));
  }
  const Vector t = in.trend();
  Derivs d;
  auto zero_v = Vector::Zero(n);
  auto zero_m = Matrix::Zero(n, n);
  if (!in.mu_fixed_zero) {
    d.de.push_back(-gv);
    d.dS.push_back(zero_m);
  }
  for (Index l = 0; l < in.beta.size(); ++l) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = -gv[i] * in.X(i, l);
    d.de.push_back(v);
    d.dS.push_back(zero_m);
  }
  Matrix ds2(n, n), dgam(n, n), dth(n, n), dphi(n, n);
  for (Index p = 0; p < n; ++p)
    for (Index q = 0; q < n; ++q) {
      const double gg = gv[p] * gv[q];
      ds2(p, q) = p == q ? gg : 0.0;
      dgam(p, q) = 2.0 * in.gamma * gg * Sw(p, q);
      dth(p, q) = in.gamma * in.gamma * gg * in.dist(p, q) / (in.theta * in.theta) * Sw(p, q);
      const double gt = dg[p] * gv[q] + gv[p] * dg[q];
      dphi(p, q) = gt * (in.gamma * in.gamma * Sw(p, q) + (p == q ? in.s2 : 0.0));
    }
  d.de.push_back(zero_v);
  d.dS.push_back(ds2);
  d.de.push_back(zero_v);
  d.dS.push_back(dgam);
  d.de.push_back(zero_v);
  d.dS.push_back(dth);
  Vector dephi(n);
  for (Index i = 0; i < n; ++i) dephi[i] = std::isnan(in.y[i]) ? 0.0 : -dg[i] * t[i];
  d.de.push_back(dephi);
  d.dS.push_back(dphi);
  return d;
}

// Golden-section maximization of a unimodal function on [a, b].
inline double golden_max(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (std::abs(b - a) > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Expected complete-data log-likelihood Q(params; moments), explicit loops,
// complete data (y^(1), w, eps^(2)), additive constants dropped.
inline double q_function(const Instance& in, const Conditional& c, double s2_prev) {
  const auto o = in.observed();
  const Index n = in.n();
  const Matrix Sw = in.sigma_w();
  Matrix M(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) M(i, j) = c.w_hat[i] * c.w_hat[j] + c.A_hat(i, j);
  double q = -0.5 * log_det(Sw) - 0.5 * trace(mul(inverse(Sw), M));
  const Vector gv = in.g();
  const Vector t = in.trend();
  for (Index i : o) {
    const double r = in.y[i] / gv[i] - t[i] - in.gamma * c.w_hat[i];
    q += -std::log(gv[i]) - 0.5 * std::log(in.s2) - (r * r + in.gamma * in.gamma * c.A_hat(i, i)) / (2.0 * in.s2);
  }
  const auto nm = static_cast<double>(n) - static_cast<double>(o.size());
  q += -0.5 * nm * std::log(in.s2) - 0.5 * nm * s2_prev / in.s2;
  return q;
}

inline Instance random_instance(std::mt19937_64& rng, Index n, Index b, int n_missing, bool mu_fixed_zero = false) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Instance in;
  for (Index i = 0; i < n; ++i) in.pts.push_back({3.0 * U(rng), 3.0 * U(rng)});
  in.X = Matrix(n, b);
  for (Index i = 0; i < n; ++i)
    for (Index l = 0; l < b; ++l) in.X(i, l) = U(rng);
  in.y = Vector(n);
  for (Index i = 0; i < n; ++i) in.y[i] = 1.0 + 4.0 * U(rng);
  for (int m = 0; m < n_missing; ++m) in.y[(2 * m + 1) % n] = std::nan("");
  in.mu_fixed_zero = mu_fixed_zero;
  in.mu = mu_fixed_zero ? 0.0 : 0.5 + U(rng);
  in.beta = Vector(b);
  for (Index l = 0; l < b; ++l) in.beta[l] = -1.0 + 2.0 * U(rng);
  in.s2 = 0.2 + U(rng);
  in.gamma = 0.5 + U(rng);
  in.theta = 0.5 + U(rng);
  in.phi = 0.2 + 0.6 * U(rng);
  return in;
}

}  // namespace oracle
