// xvec/network.hpp

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

#ifndef XVEC_NETWORK_HPP_
#define XVEC_NETWORK_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xvec/error.hpp"
#include "xvec/matrix.hpp"
#include "xvec/serial.hpp"

namespace xvec {

enum class Mode { kTrain, kEval };

inline Matrix affine(const Matrix &x, const Matrix &w,
                     const std::vector<double> &b) {
  Matrix y = matmul(x, w);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double *yi = y.row(i);
    for (std::size_t j = 0; j < y.cols(); ++j) yi[j] += b[j];
  }
  return y;
}

// Normalizes each column over the rows of the incoming batch. For
// frame-level layers the rows are (batch x frames); for segment-level
// layers they are the batch. Training uses batch statistics and refreshes
// the running estimates with momentum; eval uses the running estimates
// only, so eval output never depends on batch composition.
class BatchNorm {
 public:
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
  std::vector<double> gamma_grad, beta_grad;
  double momentum = 0.1;
  double eps = 1e-5;

  struct Cache {
    Matrix xhat;
    std::vector<double> inv_std;
  };

  void init(std::size_t width) {
    gamma.assign(width, 1.0);
    beta.assign(width, 0.0);
    running_mean.assign(width, 0.0);
    running_var.assign(width, 1.0);
    gamma_grad.assign(width, 0.0);
    beta_grad.assign(width, 0.0);
  }

  std::size_t width() const { return gamma.size(); }

  Matrix forward_train(const Matrix &x, Cache *cache) {
    const std::size_t n = x.rows(), d = x.cols();
    if (d != width()) throw DimensionError("batchnorm: width mismatch");
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double *xi = x.row(i);
      for (std::size_t j = 0; j < d; ++j) mean[j] += xi[j];
    }
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double *xi = x.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        const double dlt = xi[j] - mean[j];
        var[j] += dlt * dlt;
      }
    }
    for (std::size_t j = 0; j < d; ++j) var[j] /= static_cast<double>(n);

    std::vector<double> inv_std(d);
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    Matrix xhat(n, d), y(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const double *xi = x.row(i);
      double *hi = xhat.row(i), *yi = y.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        hi[j] = (xi[j] - mean[j]) * inv_std[j];
        yi[j] = gamma[j] * hi[j] + beta[j];
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mean[j];
      running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j];
    }
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
      check_finite(y, "batchnorm forward");
      return y;
    }
    check_finite(y, "batchnorm forward");
    return y;
  }

  Matrix forward_eval(const Matrix &x) const {
    const std::size_t n = x.rows(), d = x.cols();
    if (d != width()) throw DimensionError("batchnorm: width mismatch");
    Matrix y(n, d);
    std::vector<double> inv_std(d);
    for (std::size_t j = 0; j < d; ++j)
      inv_std[j] = 1.0 / std::sqrt(running_var[j] + eps);
    for (std::size_t i = 0; i < n; ++i) {
      const double *xi = x.row(i);
      double *yi = y.row(i);
      for (std::size_t j = 0; j < d; ++j)
        yi[j] = gamma[j] * (xi[j] - running_mean[j]) * inv_std[j] + beta[j];
    }
    check_finite(y, "batchnorm eval");
    return y;
  }

  Matrix backward(const Cache &cache, const Matrix &dy) {
    const std::size_t n = dy.rows(), d = dy.cols();
    std::vector<double> sum_dy(d, 0.0), sum_dy_xhat(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double *gi = dy.row(i), *hi = cache.xhat.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        sum_dy[j] += gi[j];
        sum_dy_xhat[j] += gi[j] * hi[j];
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      gamma_grad[j] += sum_dy_xhat[j];
      beta_grad[j] += sum_dy[j];
    }
    Matrix dx(n, d);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double *gi = dy.row(i), *hi = cache.xhat.row(i);
      double *di = dx.row(i);
      for (std::size_t j = 0; j < d; ++j)
        di[j] = gamma[j] * cache.inv_std[j] * inv_n *
                (static_cast<double>(n) * gi[j] - sum_dy[j] -
                 hi[j] * sum_dy_xhat[j]);
    }
    return dx;
  }
};

// Time-delay layer: each output frame is an affine map of the input rows
// gathered at the context offsets, valid positions only, so the frame axis
// shrinks by (max offset - min offset) per layer.
struct TdnnLayer {
  std::vector<int> offsets;
  Matrix weight;  // (in_dim * offsets.size()) x out_dim
  std::vector<double> bias;
  bool has_relu = true;
  bool has_batchnorm = true;
  BatchNorm bn;
  Matrix weight_grad;
  std::vector<double> bias_grad;

  std::size_t in_dim() const { return weight.rows() / offsets.size(); }
  std::size_t out_dim() const { return weight.cols(); }
  int span() const { return offsets.back() - offsets.front(); }

  void validate() const {
    if (offsets.empty()) throw ConfigError("tdnn: empty offset list");
    for (std::size_t i = 1; i < offsets.size(); ++i)
      if (offsets[i] <= offsets[i - 1])
        throw ConfigError("tdnn: offsets must be strictly increasing");
    if (weight.rows() % offsets.size() != 0)
      throw ConfigError("tdnn: weight rows not a multiple of offset count");
    if (bias.size() != weight.cols())
      throw ConfigError("tdnn: bias size mismatch");
    if (has_batchnorm && bn.width() != weight.cols())
      throw ConfigError("tdnn: batchnorm width mismatch");
  }
};

struct DenseLayer {
  Matrix weight;  // in x out
  std::vector<double> bias;
  bool has_relu = true;
  bool has_batchnorm = true;
  BatchNorm bn;
  Matrix weight_grad;
  std::vector<double> bias_grad;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  void validate() const {
    if (bias.size() != weight.cols())
      throw ConfigError("dense: bias size mismatch");
    if (has_batchnorm && bn.width() != weight.cols())
      throw ConfigError("dense: batchnorm width mismatch");
  }
};

// Mean and standard deviation of each column over an utterance's frames,
// concatenated; eps keeps the std differentiable at zero variance, so a
// constant input yields a std component of exactly sqrt(eps).
struct StatsPool {
  double eps = 1e-10;
};

struct ForwardCache {
  struct Tdnn {
    Matrix gathered;
    Matrix preact;
    BatchNorm::Cache bn;
    std::size_t t_in = 0, t_out = 0;
  };
  struct Pool {
    Matrix input;
    Matrix mean;
    Matrix stdev;
    std::size_t t = 0;
  };
  struct Dense {
    Matrix input;
    Matrix preact;
    BatchNorm::Cache bn;
  };

  std::vector<Tdnn> tdnn;
  Pool pool;
  std::vector<Dense> dense;
  std::size_t batch = 0;
  bool train = false;
  bool valid = false;
};

struct XVectorNetConfig {
  std::size_t feature_dim = 30;
  std::vector<std::size_t> frame_widths{64, 64, 64, 64, 128};
  std::size_t segment_width_a = 64;  // embedding layer
  std::size_t segment_width_b = 64;
  double pool_eps = 1e-10;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const {
    if (feature_dim == 0) throw ConfigError("net config: feature_dim must be > 0");
    if (frame_widths.size() != 5)
      throw ConfigError("net config: exactly 5 frame-layer widths required");
    for (std::size_t w : frame_widths)
      if (w == 0) throw ConfigError("net config: frame width must be > 0");
    if (segment_width_a == 0 || segment_width_b == 0)
      throw ConfigError("net config: segment widths must be > 0");
    if (pool_eps < 0.0) throw ConfigError("net config: pool_eps must be >= 0");
  }

  static XVectorNetConfig desk_scale() { return XVectorNetConfig{}; }

  static XVectorNetConfig full_scale() {
    XVectorNetConfig cfg;
    cfg.feature_dim = 30;
    cfg.frame_widths = {512, 512, 512, 512, 1500};
    cfg.segment_width_a = 512;
    cfg.segment_width_b = 512;
    return cfg;
  }
};

// Frame-level TDNN stack, statistics pooling, and segment-level dense
// stack. The embedding is the first dense layer's affine output before its
// ReLU and batch norm. The class-projection layer lives with the losses.
class XVectorNet {
 public:
  std::size_t feature_dim = 0;
  std::vector<TdnnLayer> tdnn;
  StatsPool pool;
  std::vector<DenseLayer> dense;

  void validate() const {
    if (feature_dim == 0) throw ConfigError("net: feature_dim unset");
    if (dense.empty()) throw ConfigError("net: at least one dense layer required");
    std::size_t d = feature_dim;
    for (const TdnnLayer &l : tdnn) {
      l.validate();
      if (l.in_dim() != d)
        throw ConfigError("net: tdnn input dim chain broken at width " +
                          std::to_string(l.in_dim()) + ", expected " +
                          std::to_string(d));
      d = l.out_dim();
    }
    d = 2 * d;  // stats pooling
    for (const DenseLayer &l : dense) {
      l.validate();
      if (l.in_dim() != d)
        throw ConfigError("net: dense input dim chain broken at width " +
                          std::to_string(l.in_dim()) + ", expected " +
                          std::to_string(d));
      d = l.out_dim();
    }
  }

  // Cumulative temporal context after each frame layer, 1 for no layers.
  std::vector<std::size_t> total_context() const {
    std::vector<std::size_t> ctx;
    std::size_t field = 1;
    for (const TdnnLayer &l : tdnn) {
      field += static_cast<std::size_t>(l.span());
      ctx.push_back(field);
    }
    return ctx;
  }

  std::size_t receptive_field() const {
    std::size_t field = 1;
    for (const TdnnLayer &l : tdnn) field += static_cast<std::size_t>(l.span());
    return field;
  }

  std::size_t embedding_dim() const { return dense.front().out_dim(); }
  std::size_t output_dim() const { return dense.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const TdnnLayer &l : tdnn) {
      n += l.weight.size() + l.bias.size();
      if (l.has_batchnorm) n += 2 * l.bn.width();
    }
    for (const DenseLayer &l : dense) {
      n += l.weight.size() + l.bias.size();
      if (l.has_batchnorm) n += 2 * l.bn.width();
    }
    return n;
  }

  // frames holds `batch` utterance blocks of equal length T stacked along
  // the rows. Returns one output row per batch element.
  Matrix forward(const Matrix &frames, std::size_t batch, Mode mode,
                 ForwardCache *cache = nullptr) {
    check_input(frames, batch);
    if (mode == Mode::kEval) {
      if (cache) throw ConfigError("forward: caches require train mode");
      Matrix x = pooled_eval(frames, batch);
      for (const DenseLayer &l : dense) {
        x = affine(x, l.weight, l.bias);
        if (l.has_relu) relu_inplace(x);
        if (l.has_batchnorm) x = l.bn.forward_eval(x);
      }
      return x;
    }

    if (cache) {
      cache->tdnn.assign(tdnn.size(), {});
      cache->dense.assign(dense.size(), {});
      cache->pool = {};
      cache->batch = batch;
      cache->train = true;
      cache->valid = true;
    }
    Matrix x = frames;
    std::size_t t = frames.rows() / batch;
    for (std::size_t li = 0; li < tdnn.size(); ++li) {
      TdnnLayer &l = tdnn[li];
      const std::size_t t_out = t - static_cast<std::size_t>(l.span());
      Matrix gathered = gather(x, batch, t, l.offsets, l.in_dim());
      Matrix z = affine(gathered, l.weight, l.bias);
      if (cache) {
        cache->tdnn[li].gathered = std::move(gathered);
        cache->tdnn[li].preact = z;
        cache->tdnn[li].t_in = t;
        cache->tdnn[li].t_out = t_out;
      }
      if (l.has_relu) relu_inplace(z);
      if (l.has_batchnorm)
        z = l.bn.forward_train(z, cache ? &cache->tdnn[li].bn : nullptr);
      x = std::move(z);
      t = t_out;
    }

    if (cache) {
      cache->pool.input = x;
      cache->pool.t = t;
    }
    Matrix pooled = pool_forward(x, batch, t, cache ? &cache->pool : nullptr);
    x = std::move(pooled);

    for (std::size_t li = 0; li < dense.size(); ++li) {
      DenseLayer &l = dense[li];
      if (cache) cache->dense[li].input = x;
      Matrix z = affine(x, l.weight, l.bias);
      if (cache) cache->dense[li].preact = z;
      if (l.has_relu) relu_inplace(z);
      if (l.has_batchnorm)
        z = l.bn.forward_train(z, cache ? &cache->dense[li].bn : nullptr);
      x = std::move(z);
    }
    return x;
  }

  // Overwrites every parameter gradient and returns the gradient with
  // respect to the input frames. Consumes the cache.
  Matrix backward(ForwardCache &cache, const Matrix &grad_output) {
    if (!cache.valid || !cache.train)
      throw ConfigError("backward: requires a live cache from a train-mode forward");
    if (grad_output.rows() != cache.batch ||
        grad_output.cols() != output_dim())
      throw DimensionError("backward: grad_output shape mismatch");
    zero_grads();

    Matrix g = grad_output;
    for (std::size_t li = dense.size(); li-- > 0;) {
      DenseLayer &l = dense[li];
      ForwardCache::Dense &c = cache.dense[li];
      if (l.has_batchnorm) g = l.bn.backward(c.bn, g);
      if (l.has_relu) relu_backward_inplace(g, c.preact);
      accumulate(l.weight_grad, matmul_tn(c.input, g));
      add_col_sums(l.bias_grad, g);
      g = matmul_nt(g, l.weight);
    }

    g = pool_backward(cache.pool, g, cache.batch);

    for (std::size_t li = tdnn.size(); li-- > 0;) {
      TdnnLayer &l = tdnn[li];
      ForwardCache::Tdnn &c = cache.tdnn[li];
      if (l.has_batchnorm) g = l.bn.backward(c.bn, g);
      if (l.has_relu) relu_backward_inplace(g, c.preact);
      accumulate(l.weight_grad, matmul_tn(c.gathered, g));
      add_col_sums(l.bias_grad, g);
      Matrix dg = matmul_nt(g, l.weight);
      g = scatter(dg, cache.batch, c.t_in, c.t_out, l.offsets, l.in_dim());
    }
    cache.valid = false;
    return g;
  }

  // Eval-mode embedding: first dense layer's affine output, before its
  // ReLU and batch norm.
  std::vector<double> extract_embedding(const Matrix &frames) const {
    check_input(frames, 1);
    Matrix pooled = pooled_eval(frames, 1);
    Matrix z = affine(pooled, dense.front().weight, dense.front().bias);
    return std::vector<double>(z.row(0), z.row(0) + z.cols());
  }

  void zero_grads() {
    for (TdnnLayer &l : tdnn) {
      l.weight_grad.fill(0.0);
      l.bias_grad.assign(l.bias.size(), 0.0);
      if (l.has_batchnorm) {
        l.bn.gamma_grad.assign(l.bn.width(), 0.0);
        l.bn.beta_grad.assign(l.bn.width(), 0.0);
      }
    }
    for (DenseLayer &l : dense) {
      l.weight_grad.fill(0.0);
      l.bias_grad.assign(l.bias.size(), 0.0);
      if (l.has_batchnorm) {
        l.bn.gamma_grad.assign(l.bn.width(), 0.0);
        l.bn.beta_grad.assign(l.bn.width(), 0.0);
      }
    }
  }

 private:
  void check_input(const Matrix &frames, std::size_t batch) const {
    if (batch == 0) throw ConfigError("forward: batch must be > 0");
    if (frames.cols() != feature_dim)
      throw DimensionError("forward: expected " + std::to_string(feature_dim) +
                           " feature columns, got " +
                           std::to_string(frames.cols()));
    if (frames.rows() == 0 || frames.rows() % batch != 0)
      throw DimensionError("forward: frame rows not divisible into " +
                           std::to_string(batch) + " equal-length blocks");
    const std::size_t t = frames.rows() / batch;
    const std::size_t need = receptive_field();
    if (t < need)
      throw DataError("forward: input has " + std::to_string(t) +
                      " frames, receptive field needs at least " +
                      std::to_string(need));
  }

  static void relu_inplace(Matrix &x) {
    for (double &v : x.storage())
      if (v < 0.0) v = 0.0;
  }

  static void relu_backward_inplace(Matrix &g, const Matrix &preact) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (preact.storage()[i] <= 0.0) g.storage()[i] = 0.0;
  }

  static void accumulate(Matrix &dst, const Matrix &src) {
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst.storage()[i] += src.storage()[i];
  }

  static void add_col_sums(std::vector<double> &dst, const Matrix &g) {
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const double *gi = g.row(i);
      for (std::size_t j = 0; j < g.cols(); ++j) dst[j] += gi[j];
    }
  }

  static Matrix gather(const Matrix &x, std::size_t batch, std::size_t t_in,
                       const std::vector<int> &offsets, std::size_t in_dim) {
    const std::size_t k = offsets.size();
    const std::size_t span = static_cast<std::size_t>(offsets.back() - offsets.front());
    const std::size_t t_out = t_in - span;
    Matrix out(batch * t_out, in_dim * k);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < t_out; ++t) {
        double *dst = out.row(b * t_out + t);
        for (std::size_t c = 0; c < k; ++c) {
          const std::size_t src_row =
              b * t_in + t + static_cast<std::size_t>(offsets[c] - offsets.front());
          const double *src = x.row(src_row);
          for (std::size_t j = 0; j < in_dim; ++j) dst[c * in_dim + j] = src[j];
        }
      }
    return out;
  }

  static Matrix scatter(const Matrix &dgathered, std::size_t batch,
                        std::size_t t_in, std::size_t t_out,
                        const std::vector<int> &offsets, std::size_t in_dim) {
    const std::size_t k = offsets.size();
    Matrix dx(batch * t_in, in_dim);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < t_out; ++t) {
        const double *src = dgathered.row(b * t_out + t);
        for (std::size_t c = 0; c < k; ++c) {
          const std::size_t dst_row =
              b * t_in + t + static_cast<std::size_t>(offsets[c] - offsets.front());
          double *dst = dx.row(dst_row);
          for (std::size_t j = 0; j < in_dim; ++j) dst[j] += src[c * in_dim + j];
        }
      }
    return dx;
  }

  Matrix pool_forward(const Matrix &x, std::size_t batch, std::size_t t,
                      ForwardCache::Pool *cache) const {
    const std::size_t d = x.cols();
    Matrix out(batch, 2 * d);
    Matrix means(batch, d), stds(batch, d);
    Matrix block(t, d);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) block(i, j) = x(b * t + i, j);
      auto [mean, sd] = reduce_rows_mean_std(block, pool.eps);
      for (std::size_t j = 0; j < d; ++j) {
        out(b, j) = mean[j];
        out(b, d + j) = sd[j];
        means(b, j) = mean[j];
        stds(b, j) = sd[j];
      }
    }
    if (cache) {
      cache->mean = std::move(means);
      cache->stdev = std::move(stds);
    }
    return out;
  }

  Matrix pool_backward(const ForwardCache::Pool &cache, const Matrix &g,
                       std::size_t batch) const {
    const std::size_t t = cache.t, d = cache.input.cols();
    Matrix dx(batch * t, d);
    const double inv_t = 1.0 / static_cast<double>(t);
    for (std::size_t b = 0; b < batch; ++b) {
      const double *gb = g.row(b);
      for (std::size_t i = 0; i < t; ++i) {
        double *di = dx.row(b * t + i);
        const double *xi = cache.input.row(b * t + i);
        for (std::size_t j = 0; j < d; ++j) {
          const double dmean = gb[j];
          const double dstd = gb[d + j];
          di[j] = dmean * inv_t +
                  dstd * (xi[j] - cache.mean(b, j)) * inv_t / cache.stdev(b, j);
        }
      }
    }
    return dx;
  }

  Matrix pooled_eval(const Matrix &frames, std::size_t batch) const {
    Matrix x = frames;
    std::size_t t = frames.rows() / batch;
    for (const TdnnLayer &l : tdnn) {
      const std::size_t t_out = t - static_cast<std::size_t>(l.span());
      Matrix z = affine(gather(x, batch, t, l.offsets, l.in_dim()), l.weight, l.bias);
      if (l.has_relu) relu_inplace(z);
      if (l.has_batchnorm) z = l.bn.forward_eval(z);
      x = std::move(z);
      t = t_out;
    }
    return pool_forward(x, batch, t, nullptr);
  }
};

// Weights are zero-mean gaussian with variance 2/fan_in; biases zero.
inline XVectorNet build_xvector(const XVectorNetConfig &cfg, Rng &rng) {
  cfg.validate();
  const std::vector<std::vector<int>> kOffsets = {
      {-2, -1, 0, 1, 2}, {-2, 0, 2}, {-3, 0, 3}, {0}, {0}};
  XVectorNet net;
  net.feature_dim = cfg.feature_dim;
  net.pool.eps = cfg.pool_eps;
  std::size_t in = cfg.feature_dim;
  for (std::size_t li = 0; li < kOffsets.size(); ++li) {
    TdnnLayer l;
    l.offsets = kOffsets[li];
    const std::size_t rows = in * l.offsets.size();
    const std::size_t out = cfg.frame_widths[li];
    l.weight = gaussian_matrix(rng, rows, out, std::sqrt(2.0 / static_cast<double>(rows)));
    l.bias.assign(out, 0.0);
    l.has_relu = true;
    l.has_batchnorm = true;
    l.bn.init(out);
    l.bn.momentum = cfg.bn_momentum;
    l.bn.eps = cfg.bn_eps;
    l.weight_grad = Matrix(rows, out);
    l.bias_grad.assign(out, 0.0);
    net.tdnn.push_back(std::move(l));
    in = out;
  }
  in = 2 * in;
  for (std::size_t out : {cfg.segment_width_a, cfg.segment_width_b}) {
    DenseLayer l;
    l.weight = gaussian_matrix(rng, in, out, std::sqrt(2.0 / static_cast<double>(in)));
    l.bias.assign(out, 0.0);
    l.has_relu = true;
    l.has_batchnorm = true;
    l.bn.init(out);
    l.bn.momentum = cfg.bn_momentum;
    l.bn.eps = cfg.bn_eps;
    l.weight_grad = Matrix(in, out);
    l.bias_grad.assign(out, 0.0);
    net.dense.push_back(std::move(l));
    in = out;
  }
  net.validate();
  return net;
}

// Checkpoint container: versioned manifest followed by little-endian f64
// parameter blobs, including batch-norm running statistics, so a reloaded
// net is bit-identical to the saved one.
inline void save_net(const std::string &path, const XVectorNet &net) {
  net.validate();
  BinaryWriter w(path);
  w.bytes("XVCK", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(net.feature_dim));
  w.f64(net.pool.eps);
  w.u32(static_cast<std::uint32_t>(net.tdnn.size()));
  for (const TdnnLayer &l : net.tdnn) {
    w.u32(static_cast<std::uint32_t>(l.offsets.size()));
    for (int o : l.offsets) w.i32(o);
    w.u32(static_cast<std::uint32_t>(l.out_dim()));
    w.u8(l.has_relu ? 1 : 0);
    w.u8(l.has_batchnorm ? 1 : 0);
  }
  w.u32(static_cast<std::uint32_t>(net.dense.size()));
  for (const DenseLayer &l : net.dense) {
    w.u32(static_cast<std::uint32_t>(l.out_dim()));
    w.u8(l.has_relu ? 1 : 0);
    w.u8(l.has_batchnorm ? 1 : 0);
  }
  auto write_bn = [&w](const BatchNorm &bn) {
    w.f64(bn.momentum);
    w.f64(bn.eps);
    for (double v : bn.gamma) w.f64(v);
    for (double v : bn.beta) w.f64(v);
    for (double v : bn.running_mean) w.f64(v);
    for (double v : bn.running_var) w.f64(v);
  };
  for (const TdnnLayer &l : net.tdnn) {
    for (double v : l.weight.storage()) w.f64(v);
    for (double v : l.bias) w.f64(v);
    if (l.has_batchnorm) write_bn(l.bn);
  }
  for (const DenseLayer &l : net.dense) {
    for (double v : l.weight.storage()) w.f64(v);
    for (double v : l.bias) w.f64(v);
    if (l.has_batchnorm) write_bn(l.bn);
  }
  w.close();
}

inline XVectorNet load_net(const std::string &path) {
  BinaryReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "XVCK")
    r.fail("bad checkpoint magic, expected XVCK");
  const std::uint32_t version = r.u32();
  if (version != 1)
    r.fail("unsupported checkpoint version " + std::to_string(version));
  XVectorNet net;
  net.feature_dim = r.u32();
  net.pool.eps = r.f64();
  const std::uint32_t n_tdnn = r.u32();
  std::size_t in = net.feature_dim;
  for (std::uint32_t i = 0; i < n_tdnn; ++i) {
    TdnnLayer l;
    const std::uint32_t n_off = r.u32();
    if (n_off == 0) r.fail("tdnn layer with zero offsets");
    for (std::uint32_t c = 0; c < n_off; ++c) l.offsets.push_back(r.i32());
    const std::uint32_t out = r.u32();
    l.has_relu = r.u8() != 0;
    l.has_batchnorm = r.u8() != 0;
    l.weight = Matrix(in * n_off, out);
    l.bias.assign(out, 0.0);
    l.weight_grad = Matrix(in * n_off, out);
    l.bias_grad.assign(out, 0.0);
    if (l.has_batchnorm) l.bn.init(out);
    net.tdnn.push_back(std::move(l));
    in = out;
  }
  const std::uint32_t n_dense = r.u32();
  if (n_dense == 0) r.fail("checkpoint has no dense layers");
  in = 2 * in;
  for (std::uint32_t i = 0; i < n_dense; ++i) {
    DenseLayer l;
    const std::uint32_t out = r.u32();
    l.has_relu = r.u8() != 0;
    l.has_batchnorm = r.u8() != 0;
    l.weight = Matrix(in, out);
    l.bias.assign(out, 0.0);
    l.weight_grad = Matrix(in, out);
    l.bias_grad.assign(out, 0.0);
    if (l.has_batchnorm) l.bn.init(out);
    net.dense.push_back(std::move(l));
    in = out;
  }
  auto read_bn = [&r](BatchNorm &bn) {
    bn.momentum = r.f64();
    bn.eps = r.f64();
    for (double &v : bn.gamma) v = r.f64();
    for (double &v : bn.beta) v = r.f64();
    for (double &v : bn.running_mean) v = r.f64();
    for (double &v : bn.running_var) v = r.f64();
  };
  for (TdnnLayer &l : net.tdnn) {
    for (double &v : l.weight.storage()) v = r.f64();
    for (double &v : l.bias) v = r.f64();
    if (l.has_batchnorm) read_bn(l.bn);
  }
  for (DenseLayer &l : net.dense) {
    for (double &v : l.weight.storage()) v = r.f64();
    for (double &v : l.bias) v = r.f64();
    if (l.has_batchnorm) read_bn(l.bn);
  }
  if (!r.at_eof()) r.fail("trailing bytes after checkpoint payload");
  net.validate();
  return net;
}

}  // namespace xvec

#endif  // XVEC_NETWORK_HPP_
