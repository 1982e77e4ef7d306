// xvec/losses.hpp

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

#ifndef XVEC_LOSSES_HPP_
#define XVEC_LOSSES_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "xvec/error.hpp"
#include "xvec/matrix.hpp"

namespace xvec {

enum class LossKind { kSoftmax, kASoftmax, kAmSoftmax, kAamSoftmax };

inline LossKind loss_kind_from_string(const std::string &name) {
  if (name == "softmax") return LossKind::kSoftmax;
  if (name == "a_softmax" || name == "a") return LossKind::kASoftmax;
  if (name == "am_softmax" || name == "am") return LossKind::kAmSoftmax;
  if (name == "aam_softmax" || name == "aam") return LossKind::kAamSoftmax;
  throw ConfigError("unknown loss kind: " + name +
                    " (expected softmax, a_softmax, am_softmax or aam_softmax)");
}

inline std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSoftmax: return "softmax";
    case LossKind::kASoftmax: return "a_softmax";
    case LossKind::kAmSoftmax: return "am_softmax";
    case LossKind::kAamSoftmax: return "aam_softmax";
  }
  throw ConfigError("invalid loss kind");
}

// m is the margin; its meaning depends on the kind. s scales the cosine
// logits of the normalized kinds and is ignored by softmax and a_softmax.
struct LossConfig {
  LossKind kind = LossKind::kSoftmax;
  double m = 0.0;
  double s = 32.0;

  void validate() const {
    switch (kind) {
      case LossKind::kSoftmax:
        return;
      case LossKind::kASoftmax: {
        const double r = std::round(m);
        if (std::abs(m - r) > 1e-12 || r < 1.0)
          throw ConfigError("a_softmax margin must be an integer >= 1, got " +
                            std::to_string(m));
        return;
      }
      case LossKind::kAmSoftmax:
        if (m < 0.0) throw ConfigError("am_softmax margin must be >= 0");
        if (s <= 0.0) throw ConfigError("scale s must be > 0");
        return;
      case LossKind::kAamSoftmax:
        if (m < 0.0 || m >= kPi)
          throw ConfigError("aam_softmax margin must lie in [0, pi)");
        if (s <= 0.0) throw ConfigError("scale s must be > 0");
        return;
    }
    throw ConfigError("invalid loss kind");
  }

  // The better-performing margins: a_softmax 2, am_softmax 0.2,
  // aam_softmax 0.3, scale 32.
  static LossConfig make(LossKind kind) {
    LossConfig cfg;
    cfg.kind = kind;
    switch (kind) {
      case LossKind::kSoftmax: cfg.m = 0.0; break;
      case LossKind::kASoftmax: cfg.m = 2.0; break;
      case LossKind::kAmSoftmax: cfg.m = 0.2; break;
      case LossKind::kAamSoftmax: cfg.m = 0.3; break;
    }
    return cfg;
  }
};

// Class projection. The margin kinds normalize the columns on the fly and
// carry no bias; plain softmax keeps the bias.
struct ProjectionLayer {
  Matrix w;  // embed_dim x classes
  std::vector<double> b;
  Matrix w_grad;
  std::vector<double> b_grad;

  std::size_t embed_dim() const { return w.rows(); }
  std::size_t classes() const { return w.cols(); }

  static ProjectionLayer create(std::size_t embed_dim, std::size_t classes,
                                bool with_bias, Rng &rng) {
    if (embed_dim == 0 || classes < 2)
      throw ConfigError("projection: need embed_dim > 0 and >= 2 classes");
    ProjectionLayer p;
    p.w = gaussian_matrix(rng, embed_dim, classes,
                          std::sqrt(1.0 / static_cast<double>(embed_dim)));
    p.w_grad = Matrix(embed_dim, classes);
    if (with_bias) {
      p.b.assign(classes, 0.0);
      p.b_grad.assign(classes, 0.0);
    }
    return p;
  }
};

struct LossOutput {
  double loss = 0.0;
  Matrix dx;  // batch x embed_dim
  double mean_target_theta = 0.0;
  double mean_target_cos = 0.0;
  bool zero_norm_flagged = false;
};

// Piecewise angular margin profile: (-1)^k cos(m theta) - 2k on
// [k pi/m, (k+1) pi/m]. Continuous and monotone nonincreasing on [0, pi],
// with derivative zero at every piece boundary.
inline double phi_a_softmax(double theta, int m) {
  if (m < 1) throw ConfigError("phi: margin must be an integer >= 1");
  if (theta < 0.0 || theta > kPi) {
    const double overshoot = theta < 0.0 ? -theta : theta - kPi;
    if (overshoot >= 1e-9)
      throw NumericError("phi: theta " + std::to_string(theta) +
                         " outside [0, pi]");
    theta = theta < 0.0 ? 0.0 : kPi;
  }
  int k = static_cast<int>(std::floor(m * theta / kPi));
  if (k > m - 1) k = m - 1;
  if (k < 0) k = 0;
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * std::cos(m * theta) - 2.0 * k;
}

inline double phi_a_softmax_derivative(double theta, int m) {
  if (m < 1) throw ConfigError("phi: margin must be an integer >= 1");
  if (theta < 0.0) theta = 0.0;
  if (theta > kPi) theta = kPi;
  int k = static_cast<int>(std::floor(m * theta / kPi));
  if (k > m - 1) k = m - 1;
  if (k < 0) k = 0;
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return -sign * static_cast<double>(m) * std::sin(m * theta);
}

namespace detail {

inline constexpr double kNormEps = 1e-12;
inline constexpr double kCosClamp = 1e-7;

inline double clamp_cos(double c) {
  if (c > 1.0 - kCosClamp) return 1.0 - kCosClamp;
  if (c < -1.0 + kCosClamp) return -1.0 + kCosClamp;
  return c;
}

inline void check_labels(const Matrix &x, const std::vector<int> &y,
                         const ProjectionLayer &layer) {
  if (x.rows() == 0) throw ConfigError("loss: empty batch");
  if (x.cols() != layer.embed_dim())
    throw DimensionError("loss: input dim " + std::to_string(x.cols()) +
                         " does not match projection dim " +
                         std::to_string(layer.embed_dim()));
  if (y.size() != x.rows())
    throw DimensionError("loss: label count does not match batch size");
  for (int label : y)
    if (label < 0 || static_cast<std::size_t>(label) >= layer.classes())
      throw ConfigError("loss: label " + std::to_string(label) +
                        " out of range for " +
                        std::to_string(layer.classes()) + " classes");
}

// Mean cross-entropy of a row-wise softmax, and its logit gradient,
// computed through the shifted log-sum-exp.
inline double softmax_xent(const Matrix &logits, const std::vector<int> &y,
                           Matrix *dlogits) {
  const std::size_t n = logits.rows(), c = logits.cols();
  *dlogits = Matrix(n, c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double *zi = logits.row(i);
    double mx = zi[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(zi[j] - mx);
    const double lse = mx + std::log(sum);
    loss += lse - zi[y[i]];
    double *di = dlogits->row(i);
    for (std::size_t j = 0; j < c; ++j)
      di[j] = std::exp(zi[j] - lse) / static_cast<double>(n);
    di[y[i]] -= 1.0 / static_cast<double>(n);
  }
  if (!std::isfinite(loss)) throw NumericError("loss: non-finite cross-entropy");
  return loss / static_cast<double>(n);
}

struct RowNorms {
  Matrix unit;  // rows scaled to unit length
  std::vector<double> norms;
  bool flagged = false;
};

inline RowNorms normalize_rows(const Matrix &x) {
  RowNorms r;
  r.unit = Matrix(x.rows(), x.cols());
  r.norms.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    const double *xi = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) sq += xi[j] * xi[j];
    double nrm = std::sqrt(sq);
    if (nrm < kNormEps) {
      nrm = kNormEps;
      r.flagged = true;
    }
    r.norms[i] = nrm;
    double *ui = r.unit.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) ui[j] = xi[j] / nrm;
  }
  return r;
}

struct ColNorms {
  Matrix unit;  // columns scaled to unit length
  std::vector<double> norms;
};

inline ColNorms normalize_cols(const Matrix &w) {
  ColNorms r;
  r.unit = Matrix(w.rows(), w.cols());
  r.norms.resize(w.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double sq = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) sq += w(i, j) * w(i, j);
    double nrm = std::sqrt(sq);
    if (nrm < kNormEps) nrm = kNormEps;
    r.norms[j] = nrm;
    for (std::size_t i = 0; i < w.rows(); ++i) r.unit(i, j) = w(i, j) / nrm;
  }
  return r;
}

// Pulls a gradient on the unit columns back through the normalization:
// dW(:,j) = (dV(:,j) - (dV(:,j) . v_j) v_j) / ||w_j||.
inline void col_normalize_backward(const Matrix &dv, const ColNorms &cols,
                                   Matrix *w_grad) {
  const std::size_t d = dv.rows(), c = dv.cols();
  for (std::size_t j = 0; j < c; ++j) {
    double proj = 0.0;
    for (std::size_t i = 0; i < d; ++i) proj += dv(i, j) * cols.unit(i, j);
    for (std::size_t i = 0; i < d; ++i)
      (*w_grad)(i, j) = (dv(i, j) - proj * cols.unit(i, j)) / cols.norms[j];
  }
}

inline void target_diagnostics(const Matrix &cmat, const std::vector<int> &y,
                               LossOutput *out) {
  double sum_theta = 0.0, sum_cos = 0.0;
  for (std::size_t i = 0; i < cmat.rows(); ++i) {
    const double c = clamp_cos(cmat(i, y[i]));
    sum_cos += c;
    sum_theta += std::acos(c);
  }
  out->mean_target_theta = sum_theta / static_cast<double>(cmat.rows());
  out->mean_target_cos = sum_cos / static_cast<double>(cmat.rows());
}

}  // namespace detail

// Plain cross-entropy over W^T x + b.
inline LossOutput softmax_loss(const Matrix &x, const std::vector<int> &y,
                               ProjectionLayer &layer) {
  detail::check_labels(x, y, layer);
  if (layer.b.size() != layer.classes())
    throw ConfigError("softmax loss requires a projection bias");
  Matrix logits = matmul(x, layer.w);
  for (std::size_t i = 0; i < logits.rows(); ++i)
    for (std::size_t j = 0; j < logits.cols(); ++j) logits(i, j) += layer.b[j];

  LossOutput out;
  Matrix dlogits;
  out.loss = detail::softmax_xent(logits, y, &dlogits);
  out.dx = matmul_nt(dlogits, layer.w);
  layer.w_grad = matmul_tn(x, dlogits);
  layer.b_grad.assign(layer.classes(), 0.0);
  for (std::size_t i = 0; i < dlogits.rows(); ++i)
    for (std::size_t j = 0; j < dlogits.cols(); ++j)
      layer.b_grad[j] += dlogits(i, j);

  detail::RowNorms rows = detail::normalize_rows(x);
  detail::ColNorms cols = detail::normalize_cols(layer.w);
  Matrix cmat = matmul(rows.unit, cols.unit);
  detail::target_diagnostics(cmat, y, &out);
  out.zero_norm_flagged = rows.flagged;
  return out;
}

// Target logit ||x|| phi(theta); every other logit ||x|| cos(theta), which
// equals x . w_hat directly. The input length is left unconstrained.
inline LossOutput a_softmax_loss(const Matrix &x, const std::vector<int> &y,
                                 ProjectionLayer &layer, int m) {
  detail::check_labels(x, y, layer);
  if (m < 1) throw ConfigError("a_softmax margin must be an integer >= 1");
  if (!layer.b.empty())
    throw ConfigError("a_softmax projection carries no bias");
  const std::size_t n = x.rows(), d = x.cols();

  detail::RowNorms rows = detail::normalize_rows(x);
  detail::ColNorms cols = detail::normalize_cols(layer.w);

  Matrix logits = matmul(x, cols.unit);
  std::vector<double> cos_t(n), sin_t(n), theta_t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = detail::clamp_cos(logits(i, y[i]) / rows.norms[i]);
    cos_t[i] = c;
    sin_t[i] = std::sqrt(1.0 - c * c);
    theta_t[i] = std::acos(c);
    logits(i, y[i]) = rows.norms[i] * phi_a_softmax(theta_t[i], m);
  }

  LossOutput out;
  Matrix dlogits;
  out.loss = detail::softmax_xent(logits, y, &dlogits);

  // Non-target part flows through z_ij = x_i . v_j.
  Matrix dz_nt = dlogits;
  std::vector<double> dz_t(n);
  for (std::size_t i = 0; i < n; ++i) {
    dz_t[i] = dlogits(i, y[i]);
    dz_nt(i, y[i]) = 0.0;
  }
  out.dx = matmul_nt(dz_nt, cols.unit);
  Matrix dv = matmul_tn(x, dz_nt);

  // Target part: z = ||x|| phi(acos(u . v)).
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = phi_a_softmax(theta_t[i], m);
    const double dphi = phi_a_softmax_derivative(theta_t[i], m);
    const double dtheta_dc = -1.0 / sin_t[i];
    const double *ui = rows.unit.row(i);
    const double *xi = x.row(i);
    double *di = out.dx.row(i);
    const int j = y[i];
    for (std::size_t k = 0; k < d; ++k) {
      const double vk = cols.unit(k, j);
      di[k] += dz_t[i] * (phi * ui[k] +
                          dphi * dtheta_dc * (vk - cos_t[i] * ui[k]));
      dv(k, j) += dz_t[i] * dphi * dtheta_dc * xi[k];
    }
  }
  detail::col_normalize_backward(dv, cols, &layer.w_grad);

  double sum_theta = 0.0, sum_cos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_theta += theta_t[i];
    sum_cos += cos_t[i];
  }
  out.mean_target_theta = sum_theta / static_cast<double>(n);
  out.mean_target_cos = sum_cos / static_cast<double>(n);
  out.zero_norm_flagged = rows.flagged;
  return out;
}

// Rows of x and columns of W normalized; target logit s (cos theta - m).
inline LossOutput am_softmax_loss(const Matrix &x, const std::vector<int> &y,
                                  ProjectionLayer &layer, double m, double s) {
  detail::check_labels(x, y, layer);
  if (m < 0.0) throw ConfigError("am_softmax margin must be >= 0");
  if (s <= 0.0) throw ConfigError("scale s must be > 0");
  if (!layer.b.empty())
    throw ConfigError("am_softmax projection carries no bias");
  const std::size_t n = x.rows(), d = x.cols();

  detail::RowNorms rows = detail::normalize_rows(x);
  detail::ColNorms cols = detail::normalize_cols(layer.w);
  Matrix cmat = matmul(rows.unit, cols.unit);

  Matrix logits(n, cmat.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < cmat.cols(); ++j)
      logits(i, j) = s * (cmat(i, j) -
                          (static_cast<int>(j) == y[i] ? m : 0.0));

  LossOutput out;
  Matrix dlogits;
  out.loss = detail::softmax_xent(logits, y, &dlogits);

  // dc = s dz everywhere; the margin shift has unit slope.
  Matrix dc = dlogits;
  for (double &v : dc.storage()) v *= s;

  Matrix du = matmul_nt(dc, cols.unit);
  Matrix dv = matmul_tn(rows.unit, dc);
  out.dx = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double *ui = rows.unit.row(i), *gi = du.row(i);
    double proj = 0.0;
    for (std::size_t k = 0; k < d; ++k) proj += gi[k] * ui[k];
    double *di = out.dx.row(i);
    for (std::size_t k = 0; k < d; ++k)
      di[k] = (gi[k] - proj * ui[k]) / rows.norms[i];
  }
  detail::col_normalize_backward(dv, cols, &layer.w_grad);
  detail::target_diagnostics(cmat, y, &out);
  out.zero_norm_flagged = rows.flagged;
  return out;
}

// Target logit s cos(theta + m), expanded as s (cos theta cos m -
// sin theta sin m) with sin theta = sqrt(1 - cos^2 theta); acos is never
// called in the forward pass.
inline LossOutput aam_softmax_loss(const Matrix &x, const std::vector<int> &y,
                                   ProjectionLayer &layer, double m, double s) {
  detail::check_labels(x, y, layer);
  if (m < 0.0 || m >= kPi)
    throw ConfigError("aam_softmax margin must lie in [0, pi)");
  if (s <= 0.0) throw ConfigError("scale s must be > 0");
  if (!layer.b.empty())
    throw ConfigError("aam_softmax projection carries no bias");
  const std::size_t n = x.rows(), d = x.cols();
  const double cos_m = std::cos(m), sin_m = std::sin(m);

  detail::RowNorms rows = detail::normalize_rows(x);
  detail::ColNorms cols = detail::normalize_cols(layer.w);
  Matrix cmat = matmul(rows.unit, cols.unit);

  Matrix logits(n, cmat.cols());
  std::vector<double> sin_t(n), ccl(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cmat.cols(); ++j) logits(i, j) = s * cmat(i, j);
    const double raw = cmat(i, y[i]);
    if (std::abs(raw) > 1.0 + 1e-9)
      throw NumericError("aam: cosine " + std::to_string(raw) +
                         " outside [-1, 1]");
    ccl[i] = detail::clamp_cos(raw);
    sin_t[i] = std::sqrt(1.0 - ccl[i] * ccl[i]);
    logits(i, y[i]) = s * (raw * cos_m - sin_t[i] * sin_m);
  }

  LossOutput out;
  Matrix dlogits;
  out.loss = detail::softmax_xent(logits, y, &dlogits);

  Matrix dc = dlogits;
  for (double &v : dc.storage()) v *= s;
  for (std::size_t i = 0; i < n; ++i)
    dc(i, y[i]) *= cos_m + (ccl[i] / sin_t[i]) * sin_m;

  Matrix du = matmul_nt(dc, cols.unit);
  Matrix dv = matmul_tn(rows.unit, dc);
  out.dx = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double *ui = rows.unit.row(i), *gi = du.row(i);
    double proj = 0.0;
    for (std::size_t k = 0; k < d; ++k) proj += gi[k] * ui[k];
    double *di = out.dx.row(i);
    for (std::size_t k = 0; k < d; ++k)
      di[k] = (gi[k] - proj * ui[k]) / rows.norms[i];
  }
  detail::col_normalize_backward(dv, cols, &layer.w_grad);
  detail::target_diagnostics(cmat, y, &out);
  out.zero_norm_flagged = rows.flagged;
  return out;
}

inline LossOutput loss_dispatch(const LossConfig &cfg, const Matrix &x,
                                const std::vector<int> &y,
                                ProjectionLayer &layer) {
  cfg.validate();
  switch (cfg.kind) {
    case LossKind::kSoftmax:
      return softmax_loss(x, y, layer);
    case LossKind::kASoftmax:
      return a_softmax_loss(x, y, layer,
                            static_cast<int>(std::llround(cfg.m)));
    case LossKind::kAmSoftmax:
      return am_softmax_loss(x, y, layer, cfg.m, cfg.s);
    case LossKind::kAamSoftmax:
      return aam_softmax_loss(x, y, layer, cfg.m, cfg.s);
  }
  throw ConfigError("invalid loss kind");
}

}  // namespace xvec

#endif  // XVEC_LOSSES_HPP_
