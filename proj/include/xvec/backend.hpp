// xvec/backend.hpp

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

#ifndef XVEC_BACKEND_HPP_
#define XVEC_BACKEND_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "xvec/archive.hpp"
#include "xvec/error.hpp"
#include "xvec/linalg.hpp"
#include "xvec/matrix.hpp"
#include "xvec/serial.hpp"

namespace xvec {

struct EmbeddingSet {
  std::vector<std::string> ids;
  std::vector<std::string> labels;  // empty when unlabeled, else one per row
  Matrix vectors;                   // n x d

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return vectors.cols(); }
  bool has_labels() const { return !labels.empty(); }

  void validate() const {
    if (ids.size() != vectors.rows())
      throw DataError("embedding set: " + std::to_string(ids.size()) +
                      " ids for " + std::to_string(vectors.rows()) + " rows");
    if (!labels.empty() && labels.size() != ids.size())
      throw DataError("embedding set: label count does not match rows");
    std::unordered_map<std::string, std::size_t> seen;
    for (const std::string &id : ids)
      if (!seen.emplace(id, 0).second)
        throw DataError("embedding set: duplicate id '" + id + "'");
  }

  // Dense class indices by first appearance of each label.
  std::vector<int> label_indices() const {
    if (!has_labels())
      throw ConfigError("embedding set: labels required but absent");
    std::unordered_map<std::string, int> index;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto it = index.find(labels[i]);
      if (it == index.end())
        it = index.emplace(labels[i], static_cast<int>(index.size())).first;
      out[i] = it->second;
    }
    return out;
  }

  std::size_t num_classes() const {
    std::vector<int> idx = label_indices();
    int hi = -1;
    for (int v : idx) hi = std::max(hi, v);
    return static_cast<std::size_t>(hi + 1);
  }
};

// Embeddings travel in the feature container with one frame per utterance.
inline FeatureArchive embeddings_to_archive(const EmbeddingSet &embs) {
  embs.validate();
  FeatureArchive a(embs.dim());
  for (std::size_t i = 0; i < embs.size(); ++i) {
    Utterance u;
    u.utt_id = embs.ids[i];
    u.speaker_id = embs.has_labels() ? embs.labels[i] : embs.ids[i];
    u.frames = Matrix(1, embs.dim());
    for (std::size_t j = 0; j < embs.dim(); ++j)
      u.frames(0, j) = embs.vectors(i, j);
    a.add(u);
  }
  return a;
}

inline EmbeddingSet archive_to_embeddings(const FeatureArchive &a) {
  EmbeddingSet out;
  out.vectors = Matrix(a.size(), a.dim());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Utterance &u = a[i];
    if (u.frames.rows() != 1)
      throw DataError("embedding archive: utterance '" + u.utt_id + "' has " +
                      std::to_string(u.frames.rows()) +
                      " frames, expected exactly 1");
    out.ids.push_back(u.utt_id);
    out.labels.push_back(u.speaker_id);
    for (std::size_t j = 0; j < a.dim(); ++j)
      out.vectors(i, j) = u.frames(0, j);
  }
  out.validate();
  return out;
}

struct PldaModel {
  std::vector<double> mu;
  Matrix between_cov;  // PSD
  Matrix within_cov;   // PD

  std::size_t dim() const { return mu.size(); }

  void validate() const {
    const std::size_t d = mu.size();
    if (d == 0) throw DataError("plda model: empty mean");
    if (between_cov.rows() != d || between_cov.cols() != d ||
        within_cov.rows() != d || within_cov.cols() != d)
      throw DataError("plda model: covariance shape does not match mean dim " +
                      std::to_string(d));
    try {
      cholesky(within_cov);
    } catch (const NumericError &) {
      throw DataError("plda model: within covariance not positive definite");
    }
    EigResult eig = sym_eig(between_cov);
    double scale = 1.0;
    for (double v : eig.values) scale = std::max(scale, std::fabs(v));
    for (double v : eig.values)
      if (v < -1e-8 * scale)
        throw DataError("plda model: between covariance not PSD (eigenvalue " +
                        std::to_string(v) + ")");
  }
};

struct BackendModel {
  std::vector<double> center;  // raw-embedding mean, length d
  Matrix lda;                  // d x p
  PldaModel plda;

  std::size_t input_dim() const { return center.size(); }
  std::size_t output_dim() const { return lda.cols(); }

  void validate() const {
    if (center.empty()) throw DataError("backend model: empty center");
    if (lda.rows() != center.size())
      throw DataError("backend model: lda rows " +
                      std::to_string(lda.rows()) + " do not match center dim " +
                      std::to_string(center.size()));
    if (lda.cols() == 0 || lda.cols() > lda.rows())
      throw DataError("backend model: lda output dim out of range");
    if (plda.dim() != lda.cols())
      throw DataError("backend model: plda dim does not match lda output");
    // Column independence via the Gram matrix; a rank-deficient projection
    // has a singular (non-PD) Gram.
    Matrix gram = matmul_tn(lda, lda);
    try {
      cholesky(gram);
    } catch (const NumericError &) {
      throw DataError("backend model: lda columns are linearly dependent");
    }
    plda.validate();
  }
};

namespace detail {

struct ClassStats {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> counts;
  Matrix means;                    // k x d
  std::vector<double> global_mean;  // d
  Matrix within_sum;               // sum_k S_k, unnormalized, d x d
};

inline ClassStats class_stats(const Matrix &x, const std::vector<int> &labels) {
  if (x.rows() == 0) throw DataError("class stats: no rows");
  if (labels.size() != x.rows())
    throw DataError("class stats: " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(x.rows()) + " rows");
  int hi = -1;
  for (int v : labels) {
    if (v < 0) throw ConfigError("class stats: negative label");
    hi = std::max(hi, v);
  }
  ClassStats s;
  s.n = x.rows();
  s.k = static_cast<std::size_t>(hi + 1);
  const std::size_t d = x.cols();
  s.counts.assign(s.k, 0);
  s.means = Matrix(s.k, d);
  s.global_mean.assign(d, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t c = static_cast<std::size_t>(labels[i]);
    s.counts[c]++;
    for (std::size_t j = 0; j < d; ++j) {
      s.means(c, j) += x(i, j);
      s.global_mean[j] += x(i, j);
    }
  }
  for (std::size_t c = 0; c < s.k; ++c) {
    if (s.counts[c] == 0)
      throw ConfigError("class stats: class " + std::to_string(c) + " empty");
    for (std::size_t j = 0; j < d; ++j)
      s.means(c, j) /= static_cast<double>(s.counts[c]);
  }
  for (std::size_t j = 0; j < d; ++j)
    s.global_mean[j] /= static_cast<double>(s.n);
  s.within_sum = Matrix(d, d);
  std::vector<double> r(d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t c = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < d; ++j) r[j] = x(i, j) - s.means(c, j);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) s.within_sum(a, b) += r[a] * r[b];
  }
  return s;
}

inline void add_outer(Matrix &acc, const std::vector<double> &v, double w) {
  const std::size_t d = v.size();
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) acc(a, b) += w * v[a] * v[b];
}

inline void symmetrize(Matrix &m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = m(j, i) = v;
    }
}

// Cholesky with one trace-scaled ridge retry. Reports whether the ridge
// was needed; mutates a on the retry path only.
inline Matrix cholesky_with_ridge(Matrix &a, bool *ridged) {
  try {
    return cholesky(a);
  } catch (const NumericError &) {
  }
  double tr = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) tr += a(i, i);
  const double ridge =
      1e-6 * std::max(tr / static_cast<double>(a.rows()), 1e-12);
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += ridge;
  if (ridged) *ridged = true;
  try {
    return cholesky(a);
  } catch (const NumericError &) {
    throw NumericError(
        "within covariance singular even after ridge regularization");
  }
}

}  // namespace detail

struct LdaResult {
  std::vector<double> center;      // global mean, length d
  Matrix projection;               // d x p
  std::vector<double> eigenvalues;  // full Fisher spectrum, length d, descending
};

// Fisher LDA via the generalized symmetric eigenproblem between-class vs
// within-class scatter. Within-class scatter carries a trace-scaled ridge.
inline LdaResult fit_lda(const Matrix &x, const std::vector<int> &labels,
                         std::size_t p) {
  detail::ClassStats st = detail::class_stats(x, labels);
  const std::size_t d = x.cols();
  if (st.k < 2) throw ConfigError("fit_lda: need at least 2 classes");
  const std::size_t max_p = std::min(d, st.k - 1);
  if (p == 0 || p > max_p)
    throw ConfigError("fit_lda: p=" + std::to_string(p) +
                      " out of range, achievable maximum is " +
                      std::to_string(max_p));

  Matrix sb(d, d);
  std::vector<double> diff(d);
  for (std::size_t c = 0; c < st.k; ++c) {
    for (std::size_t j = 0; j < d; ++j)
      diff[j] = st.means(c, j) - st.global_mean[j];
    detail::add_outer(sb, diff, static_cast<double>(st.counts[c]));
  }
  const double inv_n = 1.0 / static_cast<double>(st.n);
  Matrix sw(d, d);
  double tr = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      sb(a, b) *= inv_n;
      sw(a, b) = st.within_sum(a, b) * inv_n;
    }
    tr += sw(a, a);
  }
  const double ridge = 1e-6 * (tr / static_cast<double>(d));
  for (std::size_t a = 0; a < d; ++a) sw(a, a) += ridge;

  EigResult eig = generalized_sym_eig(sb, sw);
  LdaResult out;
  out.center = st.global_mean;
  out.eigenvalues = eig.values;
  out.projection = Matrix(d, p);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < p; ++j) out.projection(i, j) = eig.vectors(i, j);
  return out;
}

// Exact projection to the unit sphere; zero vectors stay zero and are
// counted rather than divided.
inline bool length_normalize(std::vector<double> &v) {
  const double norm = l2_norm(v);
  if (norm == 0.0) return true;
  for (double &e : v) e /= norm;
  return false;
}

inline std::size_t length_normalize(Matrix &x) {
  std::size_t zero_rows = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) sq += x(i, j) * x(i, j);
    const double norm = std::sqrt(sq);
    if (norm == 0.0) {
      zero_rows++;
      continue;
    }
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) /= norm;
  }
  return zero_rows;
}

struct PldaFit {
  PldaModel model;
  std::vector<double> ll_history;  // iters+1 entries: init, then per update
  bool ridged = false;
};

// EM for x = mu + u + e with u ~ N(0, between_cov), e ~ N(0, within_cov).
// Posteriors use the inverse-free form M_k = B + W/n_k so a singular B is
// harmless; the within covariance must stay positive definite.
inline PldaFit fit_plda(const Matrix &x, const std::vector<int> &labels,
                        std::size_t iters = 10,
                        const PldaModel *init = nullptr) {
  detail::ClassStats st = detail::class_stats(x, labels);
  if (st.k < 2) throw ConfigError("fit_plda: need at least 2 classes");
  const std::size_t d = x.cols();
  const double n = static_cast<double>(st.n);
  const double k = static_cast<double>(st.k);

  PldaFit fit;
  PldaModel &m = fit.model;
  std::vector<double> diff(d);
  if (init) {
    if (init->dim() != d)
      throw DimensionError("fit_plda: init model dim " +
                           std::to_string(init->dim()) + " vs data dim " +
                           std::to_string(d));
    m = *init;
  } else {
    // Moment initialization: class-mean scatter and pooled within scatter.
    m.mu = st.global_mean;
    m.between_cov = Matrix(d, d);
    for (std::size_t c = 0; c < st.k; ++c) {
      for (std::size_t j = 0; j < d; ++j)
        diff[j] = st.means(c, j) - st.global_mean[j];
      detail::add_outer(m.between_cov, diff, 1.0 / k);
    }
    m.within_cov = Matrix(d, d);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        m.within_cov(a, b) = st.within_sum(a, b) / n;
  }

  const auto log_likelihood = [&](const Matrix &w_chol) {
    const Matrix w_inv = spd_inverse(m.within_cov);
    const double logdet_w = logdet_from_cholesky(w_chol);
    double tr_ws = 0.0;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        tr_ws += w_inv(a, b) * st.within_sum(b, a);
    double ll = n * d * std::log(2.0 * kPi) + (n - k) * logdet_w + tr_ws;
    std::map<std::size_t, Matrix> chol_by_count;
    for (std::size_t c = 0; c < st.k; ++c) {
      const double nc = static_cast<double>(st.counts[c]);
      auto it = chol_by_count.find(st.counts[c]);
      if (it == chol_by_count.end()) {
        Matrix t(d, d);
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b)
            t(a, b) = m.within_cov(a, b) + nc * m.between_cov(a, b);
        it = chol_by_count.emplace(st.counts[c], cholesky(t)).first;
      }
      for (std::size_t j = 0; j < d; ++j)
        diff[j] = st.means(c, j) - m.mu[j];
      const std::vector<double> sol = cholesky_solve(it->second, diff);
      double quad = 0.0;
      for (std::size_t j = 0; j < d; ++j) quad += diff[j] * sol[j];
      ll += logdet_from_cholesky(it->second) + nc * quad;
    }
    return -0.5 * ll;
  };

  bool ridged = false;
  Matrix w_chol = detail::cholesky_with_ridge(m.within_cov, &ridged);

  Matrix yhat(st.k, d);  // posterior means of u per class
  for (std::size_t iter = 0; iter < iters; ++iter) {
    fit.ll_history.push_back(log_likelihood(w_chol));

    // E-step. Classes sharing a count share M = B + W/n_c, its posterior
    // covariance B - B M^-1 B, and the gain matrix (M^-1 B)^T.
    struct CountBlock {
      Matrix chol;  // chol(M)
      Matrix cov;   // posterior covariance of u
    };
    std::map<std::size_t, CountBlock> blocks;
    Matrix b_acc(d, d);
    std::vector<double> ny_sum(d, 0.0);
    for (std::size_t c = 0; c < st.k; ++c) {
      const double nc = static_cast<double>(st.counts[c]);
      auto it = blocks.find(st.counts[c]);
      if (it == blocks.end()) {
        Matrix mm(d, d);
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b)
            mm(a, b) = m.between_cov(a, b) + m.within_cov(a, b) / nc;
        CountBlock blk;
        blk.chol = cholesky(mm);
        // G = M^-1 B, cov = B - B G
        Matrix g(d, d);
        std::vector<double> col(d);
        for (std::size_t j = 0; j < d; ++j) {
          for (std::size_t i = 0; i < d; ++i) col[i] = m.between_cov(i, j);
          col = cholesky_solve(blk.chol, col);
          for (std::size_t i = 0; i < d; ++i) g(i, j) = col[i];
        }
        blk.cov = m.between_cov;
        const Matrix bg = matmul(m.between_cov, g);
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b) blk.cov(a, b) -= bg(a, b);
        detail::symmetrize(blk.cov);
        it = blocks.emplace(st.counts[c], std::move(blk)).first;
      }
      for (std::size_t j = 0; j < d; ++j)
        diff[j] = st.means(c, j) - m.mu[j];
      const std::vector<double> sol = cholesky_solve(it->second.chol, diff);
      for (std::size_t a = 0; a < d; ++a) {
        double y = 0.0;
        for (std::size_t b = 0; b < d; ++b) y += m.between_cov(a, b) * sol[b];
        yhat(c, a) = y;
        ny_sum[a] += nc * y;
      }
    }

    // M-step: mu from the observation term, B from the posterior second
    // moments, W from the residuals plus posterior covariance.
    std::vector<double> new_mu(d);
    for (std::size_t j = 0; j < d; ++j)
      new_mu[j] = st.global_mean[j] - ny_sum[j] / n;

    Matrix new_w = st.within_sum;
    std::vector<double> y(d), r(d);
    for (std::size_t c = 0; c < st.k; ++c) {
      const double nc = static_cast<double>(st.counts[c]);
      const Matrix &cov = blocks.at(st.counts[c]).cov;
      for (std::size_t j = 0; j < d; ++j) {
        y[j] = yhat(c, j);
        r[j] = st.means(c, j) - new_mu[j] - y[j];
      }
      detail::add_outer(b_acc, y, 1.0);
      detail::add_outer(new_w, r, nc);
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
          b_acc(a, b) += cov(a, b);
          new_w(a, b) += nc * cov(a, b);
        }
    }
    m.mu = new_mu;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) {
        m.between_cov(a, b) = b_acc(a, b) / k;
        m.within_cov(a, b) = new_w(a, b) / n;
      }
    detail::symmetrize(m.between_cov);
    detail::symmetrize(m.within_cov);
    w_chol = detail::cholesky_with_ridge(m.within_cov, &ridged);
  }
  fit.ll_history.push_back(log_likelihood(w_chol));
  fit.ridged = ridged;
  return fit;
}

// Simultaneous diagonalization: within whitened to I, between to diag(psi).
// Per dimension the verification likelihood ratio is closed-form Gaussian.
class PldaScorer {
 public:
  explicit PldaScorer(const PldaModel &model) {
    model.validate();
    d_ = model.dim();
    mu_ = model.mu;
    const Matrix l = cholesky(model.within_cov);
    Matrix c(d_, d_);
    std::vector<double> col(d_);
    for (std::size_t j = 0; j < d_; ++j) {
      for (std::size_t i = 0; i < d_; ++i) col[i] = model.between_cov(i, j);
      col = solve_lower(l, col);
      for (std::size_t i = 0; i < d_; ++i) c(i, j) = col[i];
    }
    for (std::size_t i = 0; i < d_; ++i) {
      std::vector<double> row(c.row(i), c.row(i) + d_);
      row = solve_lower(l, row);
      for (std::size_t j = 0; j < d_; ++j) c(i, j) = row[j];
    }
    detail::symmetrize(c);
    EigResult eig = sym_eig(c);
    transform_ = Matrix(d_, d_);
    for (std::size_t j = 0; j < d_; ++j) {
      for (std::size_t i = 0; i < d_; ++i) col[i] = eig.vectors(i, j);
      col = solve_lower_transposed(l, col);
      for (std::size_t i = 0; i < d_; ++i) transform_(j, i) = col[i];
    }
    psi_.resize(d_);
    gain_.resize(d_);
    var_same_.resize(d_);
    var_diff_.resize(d_);
    log_same_.resize(d_);
    log_diff_.resize(d_);
    for (std::size_t j = 0; j < d_; ++j) {
      const double psi = std::max(eig.values[j], 0.0);
      psi_[j] = psi;
      gain_[j] = psi / (psi + 1.0);
      var_same_[j] = 1.0 + gain_[j];
      var_diff_[j] = 1.0 + psi;
      log_same_[j] = std::log(2.0 * kPi * var_same_[j]);
      log_diff_[j] = std::log(2.0 * kPi * var_diff_[j]);
    }
  }

  std::size_t dim() const { return d_; }

  std::vector<double> project(const std::vector<double> &x) const {
    if (x.size() != d_)
      throw DimensionError("plda score: vector dim " +
                           std::to_string(x.size()) + " vs model dim " +
                           std::to_string(d_));
    std::vector<double> z(d_, 0.0);
    for (std::size_t i = 0; i < d_; ++i) {
      const double *row = transform_.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < d_; ++j) s += row[j] * (x[j] - mu_[j]);
      z[i] = s;
    }
    return z;
  }

  double score_projected(const std::vector<double> &ze,
                         const std::vector<double> &zt) const {
    double s = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      const double m = gain_[j] * ze[j];
      const double dt = zt[j] - m;
      s += -0.5 * (log_same_[j] + dt * dt / var_same_[j]) +
           0.5 * (log_diff_[j] + zt[j] * zt[j] / var_diff_[j]);
    }
    return s;
  }

  double score(const std::vector<double> &enroll,
               const std::vector<double> &test) const {
    return score_projected(project(enroll), project(test));
  }

 private:
  std::size_t d_ = 0;
  std::vector<double> mu_;
  Matrix transform_;  // rows map centered input to the diagonal basis
  std::vector<double> psi_, gain_, var_same_, var_diff_, log_same_, log_diff_;
};

inline double plda_score(const PldaModel &model,
                         const std::vector<double> &enroll,
                         const std::vector<double> &test) {
  return PldaScorer(model).score(enroll, test);
}

// Pipeline order per vector: subtract center, project by LDA, length
// normalize. Output dim is the LDA dim, so a processed set cannot be
// processed twice unless p == d.
inline EmbeddingSet apply_backend(const BackendModel &model,
                                  const EmbeddingSet &embs) {
  embs.validate();
  if (embs.dim() != model.input_dim())
    throw DimensionError("apply_backend: embedding dim " +
                         std::to_string(embs.dim()) + " vs model input dim " +
                         std::to_string(model.input_dim()));
  const std::size_t d = model.input_dim();
  const std::size_t p = model.output_dim();
  EmbeddingSet out;
  out.ids = embs.ids;
  out.labels = embs.labels;
  out.vectors = Matrix(embs.size(), p);
  std::vector<double> y(p);
  for (std::size_t i = 0; i < embs.size(); ++i) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t a = 0; a < d; ++a) {
      const double v = embs.vectors(i, a) - model.center[a];
      const double *row = model.lda.row(a);
      for (std::size_t j = 0; j < p; ++j) y[j] += v * row[j];
    }
    length_normalize(y);
    for (std::size_t j = 0; j < p; ++j) out.vectors(i, j) = y[j];
  }
  return out;
}

struct BackendFit {
  BackendModel model;
  std::vector<double> lda_eigenvalues;
  std::vector<double> ll_history;
  std::size_t zero_norm_rows = 0;
  bool ridged = false;
};

inline BackendFit fit_backend(const EmbeddingSet &embs, std::size_t p,
                              std::size_t iters = 10) {
  embs.validate();
  const std::vector<int> labels = embs.label_indices();
  LdaResult lda = fit_lda(embs.vectors, labels, p);

  Matrix y(embs.size(), p);
  const std::size_t d = embs.dim();
  for (std::size_t i = 0; i < embs.size(); ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double v = embs.vectors(i, a) - lda.center[a];
      const double *row = lda.projection.row(a);
      for (std::size_t j = 0; j < p; ++j) y(i, j) += v * row[j];
    }
  BackendFit fit;
  fit.zero_norm_rows = length_normalize(y);
  PldaFit plda = fit_plda(y, labels, iters);
  fit.model.center = lda.center;
  fit.model.lda = lda.projection;
  fit.model.plda = plda.model;
  fit.lda_eigenvalues = lda.eigenvalues;
  fit.ll_history = plda.ll_history;
  fit.ridged = plda.ridged;
  fit.model.validate();
  return fit;
}

// Backend checkpoint, format XBKD v1:
//   magic "XBKD", u32 version, u32 d, u32 p,
//   f64 center[d], f64 lda[d*p], f64 mu[p], f64 between[p*p], f64 within[p*p]
inline void save_backend(const std::string &path, const BackendModel &model) {
  model.validate();
  BinaryWriter w(path);
  w.bytes("XBKD", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(model.input_dim()));
  w.u32(static_cast<std::uint32_t>(model.output_dim()));
  for (double v : model.center) w.f64(v);
  for (double v : model.lda.storage()) w.f64(v);
  for (double v : model.plda.mu) w.f64(v);
  for (double v : model.plda.between_cov.storage()) w.f64(v);
  for (double v : model.plda.within_cov.storage()) w.f64(v);
  w.close();
}

inline BackendModel load_backend(const std::string &path) {
  BinaryReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "XBKD") r.fail("bad magic, expected XBKD");
  const std::uint32_t version = r.u32();
  if (version != 1)
    r.fail("unsupported version " + std::to_string(version));
  const std::size_t d = r.u32();
  const std::size_t p = r.u32();
  if (d == 0 || p == 0 || p > d) r.fail("dims out of range");
  BackendModel m;
  m.center.resize(d);
  for (double &v : m.center) v = r.f64();
  m.lda = Matrix(d, p);
  for (double &v : m.lda.storage()) v = r.f64();
  m.plda.mu.resize(p);
  for (double &v : m.plda.mu) v = r.f64();
  m.plda.between_cov = Matrix(p, p);
  for (double &v : m.plda.between_cov.storage()) v = r.f64();
  m.plda.within_cov = Matrix(p, p);
  for (double &v : m.plda.within_cov.storage()) v = r.f64();
  if (!r.at_eof()) r.fail("trailing bytes after model");
  for (double v : m.center)
    if (!std::isfinite(v)) r.fail("non-finite value in model");
  check_finite(m.lda, "backend lda");
  check_finite(m.plda.between_cov, "plda between covariance");
  check_finite(m.plda.within_cov, "plda within covariance");
  m.validate();
  return m;
}

}  // namespace xvec

#endif  // XVEC_BACKEND_HPP_
