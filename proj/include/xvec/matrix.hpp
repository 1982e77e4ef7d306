// xvec/matrix.hpp

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

#ifndef XVEC_MATRIX_HPP_
#define XVEC_MATRIX_HPP_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xvec/error.hpp"

namespace xvec {

inline constexpr double kPi = 3.14159265358979323846264338327950288;

// Dense row-major matrix of doubles. Internal precision is 64-bit even
// though features on disk are 32-bit; conversion happens at the I/O
// boundary.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto &r : rows) {
      if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double *data() { return data_.data(); }
  const double *data() const { return data_.data(); }
  double *row(std::size_t r) { return data_.data() + r * cols_; }
  const double *row(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double> &storage() { return data_; }
  const std::vector<double> &storage() const { return data_; }

  void fill(double v) { data_.assign(data_.size(), v); }

  bool operator==(const Matrix &o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << rows_ << "x" << cols_;
    return os.str();
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline bool has_nonfinite(const Matrix &a) {
  for (double v : a.storage())
    if (!std::isfinite(v)) return true;
  return false;
}

inline bool has_nonfinite(const std::vector<double> &v) {
  for (double x : v)
    if (!std::isfinite(x)) return true;
  return false;
}

// NaN/Inf is an error state, never silently propagated: the public kernels
// below call this on their results.
inline void check_finite(const Matrix &a, const char *where) {
  if (has_nonfinite(a))
    throw NumericError(std::string(where) + ": non-finite entry in result");
}

inline Matrix matmul(const Matrix &a, const Matrix &b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: dimension mismatch (" + a.shape_str() +
                         ")*(" + b.shape_str() + ")");
  Matrix c(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double *ci = c.row(i);
    const double *ai = a.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double *bp = b.row(p);
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
  check_finite(c, "matmul");
  return c;
}

// a^T * b without forming the transpose.
inline Matrix matmul_tn(const Matrix &a, const Matrix &b) {
  if (a.rows() != b.rows())
    throw DimensionError("matmul_tn: dimension mismatch (" + a.shape_str() +
                         ")^T*(" + b.shape_str() + ")");
  Matrix c(a.cols(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t p = 0; p < n; ++p) {
    const double *ap = a.row(p);
    const double *bp = b.row(p);
    for (std::size_t i = 0; i < k; ++i) {
      double *ci = c.row(i);
      const double api = ap[i];
      for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
    }
  }
  check_finite(c, "matmul_tn");
  return c;
}

// a * b^T.
inline Matrix matmul_nt(const Matrix &a, const Matrix &b) {
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: dimension mismatch (" + a.shape_str() +
                         ")*(" + b.shape_str() + ")^T");
  Matrix c(a.rows(), b.rows());
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double *ai = a.row(i);
    double *ci = c.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const double *bj = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
  check_finite(c, "matmul_nt");
  return c;
}

inline Matrix transpose(const Matrix &a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// Each row divided by max(||row||_2, eps).
inline Matrix row_l2_normalize(const Matrix &a, double eps = 1e-12) {
  if (eps <= 0.0) throw ConfigError("row_l2_normalize: eps must be > 0");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double *src = a.row(i);
    double sq = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) sq += src[j] * src[j];
    const double inv = 1.0 / std::max(std::sqrt(sq), eps);
    double *dst = out.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) dst[j] = src[j] * inv;
  }
  check_finite(out, "row_l2_normalize");
  return out;
}

// Column analogue of row_l2_normalize.
inline Matrix col_l2_normalize(const Matrix &w, double eps = 1e-12) {
  if (eps <= 0.0) throw ConfigError("col_l2_normalize: eps must be > 0");
  Matrix out(w.rows(), w.cols());
  std::vector<double> inv(w.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double sq = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) sq += w(i, j) * w(i, j);
    inv[j] = 1.0 / std::max(std::sqrt(sq), eps);
  }
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = w(i, j) * inv[j];
  check_finite(out, "col_l2_normalize");
  return out;
}

// Per-column mean and std over rows. Population (divide-by-T) variance:
// the reduction runs over the full segment, not a sample of it.
// std = sqrt(variance + eps).
inline std::pair<std::vector<double>, std::vector<double>> reduce_rows_mean_std(
    const Matrix &x, double eps) {
  if (x.rows() == 0) throw DataError("reduce_rows_mean_std: empty matrix");
  if (eps < 0.0) throw ConfigError("reduce_rows_mean_std: eps must be >= 0");
  const std::size_t t = x.rows(), d = x.cols();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  std::vector<double> lo(x.row(0), x.row(0) + d), hi(lo);
  for (std::size_t i = 0; i < t; ++i) {
    const double *xi = x.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] += xi[j];
      lo[j] = std::min(lo[j], xi[j]);
      hi[j] = std::max(hi[j], xi[j]);
    }
  }
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(t);
  // A constant column has exactly zero variance; the summed mean can be a
  // few ulp off the repeated value, so pin it.
  for (std::size_t j = 0; j < d; ++j)
    if (lo[j] == hi[j]) mean[j] = lo[j];
  for (std::size_t i = 0; i < t; ++i) {
    const double *xi = x.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dlt = xi[j] - mean[j];
      var[j] += dlt * dlt;
    }
  }
  std::vector<double> sd(d);
  for (std::size_t j = 0; j < d; ++j)
    sd[j] = std::sqrt(var[j] / static_cast<double>(t) + eps);
  if (has_nonfinite(mean) || has_nonfinite(sd))
    throw NumericError("reduce_rows_mean_std: non-finite result");
  return {std::move(mean), std::move(sd)};
}

// Deterministic seedable generator: xoshiro256++ seeded through splitmix64.
// Identical seed gives an identical sample stream on every platform; the
// gaussian draw is Box-Muller so no implementation-defined distribution
// code is involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (int i = 0; i < 4; ++i) s_[i] = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller.
  double gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T> &v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t &x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
};

// Small vector helpers shared by the layer and backend code.

inline double dot(const std::vector<double> &a, const std::vector<double> &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const std::vector<double> &a) { return std::sqrt(dot(a, a)); }

inline Matrix gaussian_matrix(Rng &rng, std::size_t rows, std::size_t cols,
                              double scale = 1.0) {
  Matrix m(rows, cols);
  for (double &v : m.storage()) v = scale * rng.gaussian();
  return m;
}

}  // namespace xvec

#endif  // XVEC_MATRIX_HPP_
