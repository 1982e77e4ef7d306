// xvec/linalg.hpp

// Copyright 2026  xvec authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Dense symmetric factorizations for the scoring back-end. Dimensions stay
// small (<= a few hundred), so cyclic Jacobi and unblocked Cholesky are
// plenty and keep the library dependency-free.

#ifndef XVEC_LINALG_HPP_
#define XVEC_LINALG_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "xvec/error.hpp"
#include "xvec/matrix.hpp"

namespace xvec {

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
inline Matrix cholesky(const Matrix &a) {
  if (a.rows() != a.cols())
    throw DimensionError("cholesky: matrix not square (" + a.shape_str() + ")");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0 || !std::isfinite(s))
          throw NumericError("cholesky: matrix not positive definite at pivot " +
                             std::to_string(i));
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

// Solve L x = b for lower-triangular L.
inline std::vector<double> solve_lower(const Matrix &l, const std::vector<double> &b) {
  const std::size_t n = l.rows();
  std::vector<double> x(b);
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

// Solve L^T x = b for lower-triangular L.
inline std::vector<double> solve_lower_transposed(const Matrix &l,
                                                  const std::vector<double> &b) {
  const std::size_t n = l.rows();
  std::vector<double> x(b);
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

// Solve (L L^T) x = b.
inline std::vector<double> cholesky_solve(const Matrix &l, const std::vector<double> &b) {
  return solve_lower_transposed(l, solve_lower(l, b));
}

inline double logdet_from_cholesky(const Matrix &l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

// Inverse of an SPD matrix through its Cholesky factor.
inline Matrix spd_inverse(const Matrix &a) {
  const Matrix l = cholesky(a);
  const std::size_t n = a.rows();
  Matrix inv(n, n);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const std::vector<double> col = cholesky_solve(l, e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    e[j] = 0.0;
  }
  // Resymmetrize to kill roundoff skew.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = inv(j, i) = v;
    }
  return inv;
}

struct EigResult {
  std::vector<double> values;  // descending
  Matrix vectors;              // columns, orthonormal, aligned with values
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Deterministic:
// fixed sweep order, eigenpairs sorted by descending value, each vector's
// sign fixed so its largest-magnitude component is positive.
inline EigResult sym_eig(const Matrix &a, int max_sweeps = 100) {
  if (a.rows() != a.cols())
    throw DimensionError("sym_eig: matrix not square (" + a.shape_str() + ")");
  const std::size_t n = a.rows();
  Matrix m = a;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(m(i, i)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) scale = std::max(scale, std::abs(m(i, j)));
  const double tol = std::max(scale, 1.0) * 1e-14;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
    if (std::sqrt(off) <= tol * n) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (std::abs(apq) <= tol * 1e-2) continue;
        const double app = m(p, p), aqq = m(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = m(i, i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });

  EigResult res;
  res.values.resize(n);
  res.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    res.values[j] = diag[src];
    std::size_t imax = 0;
    double amax = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(v(i, src)) > amax) {
        amax = std::abs(v(i, src));
        imax = i;
      }
    }
    const double sign = v(imax, src) >= 0.0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) res.vectors(i, j) = sign * v(i, src);
  }
  return res;
}

// Generalized symmetric-definite eigenproblem a x = lambda b x with b SPD:
// reduce through b = L L^T, solve the ordinary problem for L^-1 a L^-T, and
// map vectors back as x = L^-T u. Returned vectors satisfy x^T b x = I.
inline EigResult generalized_sym_eig(const Matrix &a, const Matrix &b) {
  const Matrix l = cholesky(b);
  const std::size_t n = a.rows();
  // c = L^-1 a L^-T, built column by column.
  Matrix c(n, n);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = a(i, j);
    col = solve_lower(l, col);
    for (std::size_t i = 0; i < n; ++i) c(i, j) = col[i];
  }
  // Right-multiply by L^-T: row i of (c L^-T) equals L^-1 applied to row i.
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(c.row(i), c.row(i) + n);
    r = solve_lower(l, r);
    for (std::size_t j = 0; j < n; ++j) c(i, j) = r[j];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (c(i, j) + c(j, i));
      c(i, j) = c(j, i) = v;
    }
  EigResult inner = sym_eig(c);
  EigResult res;
  res.values = inner.values;
  res.vectors = Matrix(n, n);
  std::vector<double> u(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) u[i] = inner.vectors(i, j);
    const std::vector<double> x = solve_lower_transposed(l, u);
    for (std::size_t i = 0; i < n; ++i) res.vectors(i, j) = x[i];
  }
  return res;
}

}  // namespace xvec

#endif  // XVEC_LINALG_HPP_
