#pragma once

// Naive reference computations for the tests. Plain loops over the textbook
// definitions; nothing here calls into the library beyond its data types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double joint(const Vector& mu, const Matrix& p, int x, int a) { return mu(x) * p(x, a); }

// Sum_a max_b Sum_x mu(x) p(a|x) u(x,b)
inline double J(const Vector& mu, const Matrix& p, const Matrix& u) {
  double total = 0.0;
  for (int a = 0; a < p.cols(); ++a) {
    double best = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < u.cols(); ++b) {
      double s = 0.0;
      for (int x = 0; x < p.rows(); ++x) s += joint(mu, p, x, a) * u(x, b);
      best = std::max(best, s);
    }
    total += best;
  }
  return total;
}

inline double F(const Vector& mu, const Matrix& p, const Matrix& u) {
  double total = 0.0;
  for (int x = 0; x < p.rows(); ++x)
    for (int a = 0; a < p.cols(); ++a) total += joint(mu, p, x, a) * u(x, a);
  return total;
}

// Largest Sum_x p(x|a) (u(x,b) - u(x,a)) over used a and b != a, for one agent.
inline double worst_nias(const Vector& mu, const Matrix& p, const Matrix& u) {
  double worst = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < p.cols(); ++a) {
    double mass = 0.0;
    for (int x = 0; x < p.rows(); ++x) mass += joint(mu, p, x, a);
    if (mass <= 0.0) continue;
    for (int b = 0; b < u.cols(); ++b) {
      if (b == a) continue;
      double s = 0.0;
      for (int x = 0; x < p.rows(); ++x) s += joint(mu, p, x, a) / mass * (u(x, b) - u(x, a));
      worst = std::max(worst, s);
    }
  }
  return worst;
}

// Largest G(j,k) - c_j - F(k) + c_k over j != k.
inline double worst_niac(const Vector& mu, const std::vector<Matrix>& p, const std::vector<Matrix>& u,
                         const std::vector<double>& c) {
  double worst = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < p.size(); ++j)
    for (size_t k = 0; k < p.size(); ++k)
      if (j != k) worst = std::max(worst, J(mu, p[j], u[k]) - c[j] - F(mu, p[k], u[k]) + c[k]);
  return worst;
}

// Exact reconstructed cost: max_k c_k + J(p, u_k) - F(p_k, u_k).
inline double cost(const Vector& mu, const std::vector<Matrix>& p, const std::vector<Matrix>& u,
                   const std::vector<double>& c, const Matrix& q) {
  double best = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < p.size(); ++k) best = std::max(best, c[k] + J(mu, q, u[k]) - F(mu, p[k], u[k]));
  return best;
}

inline double kl(const Matrix& truth, const Matrix& pred, const Vector& mu) {
  double total = 0.0;
  for (int x = 0; x < truth.rows(); ++x)
    for (int a = 0; a < truth.cols(); ++a)
      if (truth(x, a) > 0.0) total += mu(x) * truth(x, a) * std::log(truth(x, a) / std::max(pred(x, a), 1e-12));
  return total;
}

// max c'z s.t. A z <= b, lo <= z <= hi, by enumerating every vertex. Tiny
// programs only. Returns -inf when infeasible.
struct VertexResult {
  double value = -std::numeric_limits<double>::infinity();
  Vector point;
};

inline VertexResult enumerate_vertices(const Vector& c, const Matrix& A, const Vector& b, const Vector& lo,
                                       const Vector& hi) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(A.rows());
  // All hyperplanes: constraint rows, then lower and upper bounds.
  Matrix H(m + 2 * n, n);
  Vector r(m + 2 * n);
  H.setZero();
  for (int i = 0; i < m; ++i) {
    H.row(i) = A.row(i);
    r(i) = b(i);
  }
  for (int v = 0; v < n; ++v) {
    H(m + v, v) = 1.0;
    r(m + v) = lo(v);
    H(m + n + v, v) = 1.0;
    r(m + n + v) = hi(v);
  }
  const int total = m + 2 * n;
  VertexResult best;
  std::vector<int> pick(n);
  for (int i = 0; i < n; ++i) pick[i] = i;
  while (true) {
    Matrix S(n, n);
    Vector rhs(n);
    for (int i = 0; i < n; ++i) {
      S.row(i) = H.row(pick[i]);
      rhs(i) = r(pick[i]);
    }
    Eigen::FullPivLU<Matrix> lu(S);
    if (lu.rank() == n) {
      const Vector z = lu.solve(rhs);
      bool ok = true;
      for (int i = 0; i < m && ok; ++i) ok = A.row(i).dot(z) <= b(i) + 1e-9;
      for (int v = 0; v < n && ok; ++v) ok = z(v) >= lo(v) - 1e-9 && z(v) <= hi(v) + 1e-9;
      if (ok && c.dot(z) > best.value) {
        best.value = c.dot(z);
        best.point = z;
      }
    }
    int i = n - 1;
    while (i >= 0 && pick[i] == total - n + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int t = i + 1; t < n; ++t) pick[t] = pick[t - 1] + 1;
  }
  return best;
}

}  // namespace oracle
