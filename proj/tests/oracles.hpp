// Test-only oracles, independent of the library code paths they check.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace oracles {

// Convex-hull membership as an exact linear feasibility problem: does some
// lambda >= 0 satisfy X' lambda = p and sum(lambda) = 1? Solved with a
// phase-1 simplex (Bland's rule), independent of any facet enumeration.
inline bool hull_member_lp(const Eigen::MatrixXd& points,
                           const Eigen::VectorXd& p, double tol = 1e-9) {
  const Eigen::Index n = points.rows();
  const Eigen::Index m = points.cols() + 1;  // equality constraints

  // Tableau columns: n lambda variables, m artificials, then the rhs.
  Eigen::MatrixXd T(m + 1, n + m + 1);
  T.setZero();
  for (Eigen::Index r = 0; r < m - 1; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) T(r, c) = points(c, r);
    T(r, n + m) = p(r);
  }
  for (Eigen::Index c = 0; c < n; ++c) T(m - 1, c) = 1.0;
  T(m - 1, n + m) = 1.0;
  // Flip rows so every rhs is nonnegative, then add artificial columns.
  for (Eigen::Index r = 0; r < m; ++r) {
    if (T(r, n + m) < 0) T.row(r) = -T.row(r);
    T(r, n + r) = 1.0;
  }
  // Objective: minimize the sum of artificials. Set their unit costs, then
  // reduce against the (artificial) starting basis.
  for (Eigen::Index r = 0; r < m; ++r) T(m, n + r) = 1.0;
  for (Eigen::Index r = 0; r < m; ++r) T.row(m) -= T.row(r);

  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index r = 0; r < m; ++r) basis[static_cast<std::size_t>(r)] = n + r;

  for (int iter = 0; iter < 10000; ++iter) {
    Eigen::Index pivot_col = -1;
    for (Eigen::Index c = 0; c < n + m; ++c)
      if (T(m, c) < -tol) {
        pivot_col = c;  // Bland: lowest eligible index
        break;
      }
    if (pivot_col < 0) break;
    Eigen::Index pivot_row = -1;
    double best_ratio = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      if (T(r, pivot_col) > tol) {
        const double ratio = T(r, n + m) / T(r, pivot_col);
        if (pivot_row < 0 || ratio < best_ratio - 1e-15 ||
            (std::abs(ratio - best_ratio) <= 1e-15 &&
             basis[static_cast<std::size_t>(r)] <
                 basis[static_cast<std::size_t>(pivot_row)])) {
          pivot_row = r;
          best_ratio = ratio;
        }
      }
    }
    if (pivot_row < 0) break;  // unbounded (cannot happen for phase 1)
    T.row(pivot_row) /= T(pivot_row, pivot_col);
    for (Eigen::Index r = 0; r <= m; ++r) {
      if (r == pivot_row) continue;
      T.row(r) -= T(r, pivot_col) * T.row(pivot_row);
    }
    basis[static_cast<std::size_t>(pivot_row)] = pivot_col;
  }
  return -T(m, n + m) < tol;  // artificial objective reached ~0
}

// Leave-one-out GP residuals by explicit refits: for each fold, rebuild the
// correlation matrix on the remaining points with the SAME lengthscales and
// nugget, re-estimate the constant mean by GLS, and predict the held-out
// standardized output. Returns residuals in standardized units.
inline Eigen::VectorXd brute_force_loo_residuals(const Eigen::MatrixXd& train_u,
                                                 const Eigen::VectorXd& train_z,
                                                 const Eigen::VectorXd& lengthscales,
                                                 double nugget_rel) {
  const Eigen::Index n = train_u.rows();
  auto corr = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double arg = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      const double d = (a(k) - b(k)) / lengthscales(k);
      arg += d * d;
    }
    return std::exp(-0.5 * arg);
  };

  Eigen::VectorXd residuals(n);
  for (Eigen::Index hold = 0; hold < n; ++hold) {
    const Eigen::Index nf = n - 1;
    Eigen::MatrixXd R(nf, nf);
    Eigen::VectorXd z(nf), k(nf);
    Eigen::Index a = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == hold) continue;
      z(a) = train_z(i);
      k(a) = corr(train_u.row(i), train_u.row(hold));
      Eigen::Index b = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == hold) continue;
        R(a, b) = corr(train_u.row(i), train_u.row(j));
        if (a == b) R(a, b) += nugget_rel;
        ++b;
      }
      ++a;
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(R);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(nf);
    const Eigen::VectorXd rinv_one = llt.solve(ones);
    const double beta = z.dot(rinv_one) / ones.dot(rinv_one);
    const Eigen::VectorXd alpha = llt.solve(Eigen::VectorXd(z.array() - beta));
    const double zhat = beta + k.dot(alpha);
    residuals(hold) = train_z(hold) - zhat;
  }
  return residuals;
}

}  // namespace oracles
