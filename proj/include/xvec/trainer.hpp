// xvec/trainer.hpp

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

#ifndef XVEC_TRAINER_HPP_
#define XVEC_TRAINER_HPP_

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "xvec/archive.hpp"
#include "xvec/error.hpp"
#include "xvec/losses.hpp"
#include "xvec/matrix.hpp"
#include "xvec/network.hpp"

namespace xvec {

struct TrainConfig {
  std::size_t epochs = 3;
  double lr_peak = 1e-4;
  double momentum = 0.7;
  double weight_decay = 1e-5;
  double max_grad_norm = 1e3;
  std::size_t warmup_batches = 500;
  std::size_t batch_size = 32;
  std::size_t segment_frames_min = 50;
  std::size_t segment_frames_max = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (lr_peak <= 0.0) throw ConfigError("train config: lr_peak must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ConfigError("train config: momentum must lie in [0, 1)");
    if (weight_decay < 0.0)
      throw ConfigError("train config: weight_decay must be >= 0");
    if (max_grad_norm <= 0.0)
      throw ConfigError("train config: max_grad_norm must be > 0");
    if (batch_size == 0) throw ConfigError("train config: batch_size must be > 0");
    if (segment_frames_min == 0)
      throw ConfigError("train config: segment_frames_min must be > 0");
    if (segment_frames_min > segment_frames_max)
      throw ConfigError("train config: segment frame range is inverted");
  }
};

// One trainable buffer and its gradient buffer. Weight matrices decay;
// biases and batch-norm gamma/beta do not.
struct ParamRef {
  std::vector<double> *value;
  std::vector<double> *grad;
  bool decay;
};

inline std::vector<ParamRef> collect_params(XVectorNet &net,
                                            ProjectionLayer *proj) {
  std::vector<ParamRef> out;
  for (TdnnLayer &l : net.tdnn) {
    out.push_back({&l.weight.storage(), &l.weight_grad.storage(), true});
    out.push_back({&l.bias, &l.bias_grad, false});
    if (l.has_batchnorm) {
      out.push_back({&l.bn.gamma, &l.bn.gamma_grad, false});
      out.push_back({&l.bn.beta, &l.bn.beta_grad, false});
    }
  }
  for (DenseLayer &l : net.dense) {
    out.push_back({&l.weight.storage(), &l.weight_grad.storage(), true});
    out.push_back({&l.bias, &l.bias_grad, false});
    if (l.has_batchnorm) {
      out.push_back({&l.bn.gamma, &l.bn.gamma_grad, false});
      out.push_back({&l.bn.beta, &l.bn.beta_grad, false});
    }
  }
  if (proj) {
    out.push_back({&proj->w.storage(), &proj->w_grad.storage(), true});
    if (!proj->b.empty()) out.push_back({&proj->b, &proj->b_grad, false});
  }
  return out;
}

struct OptimizerState {
  std::vector<std::vector<double>> velocity;
  std::size_t step = 0;
};

// Linear ramp from 0 to lr_peak over the first warmup_batches steps,
// constant afterwards.
inline double lr_at(std::size_t step, const TrainConfig &cfg) {
  if (cfg.warmup_batches == 0 || step >= cfg.warmup_batches) return cfg.lr_peak;
  return cfg.lr_peak * static_cast<double>(step) /
         static_cast<double>(cfg.warmup_batches);
}

// Order per step: decayed gradients first, then one global clip, then the
// momentum update. Returns the pre-clip global gradient norm.
inline double sgd_step(const std::vector<ParamRef> &params,
                       OptimizerState &state, const TrainConfig &cfg,
                       double lr) {
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const ParamRef &p : params)
      state.velocity.emplace_back(p.value->size(), 0.0);
  }
  if (state.velocity.size() != params.size())
    throw ConfigError("sgd_step: parameter list changed under the optimizer");

  for (const ParamRef &p : params) {
    if (p.value->size() != p.grad->size())
      throw ConfigError("sgd_step: gradient shape mismatch");
    if (p.decay && cfg.weight_decay != 0.0)
      for (std::size_t i = 0; i < p.value->size(); ++i)
        (*p.grad)[i] += cfg.weight_decay * (*p.value)[i];
  }

  double sq = 0.0;
  for (const ParamRef &p : params)
    for (double g : *p.grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm))
    throw NumericError("sgd_step: non-finite gradient at step " +
                       std::to_string(state.step));
  const double scale = norm > cfg.max_grad_norm ? cfg.max_grad_norm / norm : 1.0;

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const ParamRef &p = params[pi];
    std::vector<double> &v = state.velocity[pi];
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      v[i] = cfg.momentum * v[i] + scale * (*p.grad)[i];
      (*p.value)[i] -= lr * v[i];
    }
  }
  state.step++;
  return norm;
}

struct Batch {
  Matrix frames;  // (size * seg_len) x dim
  std::vector<int> labels;
  std::size_t size = 0;
  std::size_t seg_len = 0;
};

// One equal-length batch: a single segment length is drawn uniformly from
// the configured range, then each utterance contributes one contiguous
// random crop of that length. Utterances shorter than the crop are read
// cyclically from a random phase. Draw order: length first, then one start
// position per utterance.
inline Batch sample_segments(const FeatureArchive &archive,
                             const std::vector<std::size_t> &utts,
                             const TrainConfig &cfg, Rng &rng) {
  if (archive.size() == 0) throw DataError("sample_segments: empty archive");
  if (utts.empty()) throw ConfigError("sample_segments: empty batch");
  const std::size_t span = cfg.segment_frames_max - cfg.segment_frames_min + 1;
  const std::size_t len = cfg.segment_frames_min +
                          static_cast<std::size_t>(rng.uniform_int(span));
  Batch batch;
  batch.size = utts.size();
  batch.seg_len = len;
  batch.frames = Matrix(utts.size() * len, archive.dim());
  batch.labels.resize(utts.size());
  for (std::size_t bi = 0; bi < utts.size(); ++bi) {
    const Utterance &u = archive[utts[bi]];
    batch.labels[bi] = archive.label_of(utts[bi]);
    const std::size_t t = u.frames.rows();
    std::size_t start;
    if (t >= len) {
      start = static_cast<std::size_t>(rng.uniform_int(t - len + 1));
      for (std::size_t i = 0; i < len; ++i) {
        const double *src = u.frames.row(start + i);
        double *dst = batch.frames.row(bi * len + i);
        for (std::size_t j = 0; j < archive.dim(); ++j) dst[j] = src[j];
      }
    } else {
      start = static_cast<std::size_t>(rng.uniform_int(t));
      for (std::size_t i = 0; i < len; ++i) {
        const double *src = u.frames.row((start + i) % t);
        double *dst = batch.frames.row(bi * len + i);
        for (std::size_t j = 0; j < archive.dim(); ++j) dst[j] = src[j];
      }
    }
  }
  return batch;
}

struct BatchRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double mean_target_theta = 0.0;
};

inline std::string batch_record_json(const BatchRecord &r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"step\":%zu,\"loss\":%.17g,\"lr\":%.17g,"
                "\"grad_norm\":%.17g,\"mean_target_theta\":%.17g}",
                r.step, r.loss, r.lr, r.grad_norm, r.mean_target_theta);
  return buf;
}

struct TrainResult {
  std::vector<BatchRecord> log;
  std::vector<double> epoch_mean_loss;
};

// Everything train() checks before touching the optimizer or any output
// stream, callable up front by drivers that must not create files for a
// doomed setup.
inline void validate_training(const FeatureArchive &archive,
                              const XVectorNet &net,
                              const ProjectionLayer &proj,
                              const LossConfig &loss_cfg,
                              const TrainConfig &cfg) {
  cfg.validate();
  loss_cfg.validate();
  if (archive.size() == 0) throw DataError("train: empty archive");
  if (archive.dim() != net.feature_dim)
    throw ConfigError("train: archive dim " + std::to_string(archive.dim()) +
                      " does not match net feature dim " +
                      std::to_string(net.feature_dim));
  if (archive.num_speakers() != proj.classes())
    throw ConfigError("train: archive has " +
                      std::to_string(archive.num_speakers()) +
                      " speakers but the projection has " +
                      std::to_string(proj.classes()) + " classes");
  if (cfg.segment_frames_min < net.receptive_field())
    throw ConfigError("train: segment_frames_min " +
                      std::to_string(cfg.segment_frames_min) +
                      " is below the receptive field " +
                      std::to_string(net.receptive_field()));
}

// One epoch is one shuffled pass over the archive with one segment per
// utterance. Deterministic for a given config: the only randomness comes
// from the seeded generator, consumed in a fixed order (per epoch the
// shuffle, then per batch the segment draws).
inline TrainResult train(const FeatureArchive &archive, XVectorNet &net,
                         ProjectionLayer &proj, const LossConfig &loss_cfg,
                         const TrainConfig &cfg, std::ostream *jsonl = nullptr,
                         const std::function<void(std::size_t)> &on_epoch_end =
                             nullptr) {
  validate_training(archive, net, proj, loss_cfg, cfg);

  Rng rng(cfg.seed);
  std::vector<ParamRef> params = collect_params(net, &proj);
  OptimizerState state;
  TrainResult result;

  std::vector<std::size_t> order(archive.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      const std::vector<std::size_t> utts(order.begin() + begin,
                                          order.begin() + end);
      const std::size_t step = state.step;
      try {
        Batch batch = sample_segments(archive, utts, cfg, rng);
        ForwardCache cache;
        Matrix out = net.forward(batch.frames, batch.size, Mode::kTrain, &cache);
        LossOutput lo = loss_dispatch(loss_cfg, out, batch.labels, proj);
        net.backward(cache, lo.dx);

        const double lr = lr_at(step, cfg);
        const double grad_norm = sgd_step(params, state, cfg, lr);

        BatchRecord rec{step, lo.loss, lr, grad_norm, lo.mean_target_theta};
        if (jsonl) (*jsonl) << batch_record_json(rec) << "\n";
        result.log.push_back(rec);
        epoch_loss += lo.loss;
        epoch_batches++;
      } catch (const NumericError &e) {
        throw NumericError("training aborted at batch index " +
                           std::to_string(step) + " (epoch " +
                           std::to_string(epoch) + "): " + e.what());
      }
    }
    result.epoch_mean_loss.push_back(epoch_loss /
                                     static_cast<double>(epoch_batches));
    if (on_epoch_end) on_epoch_end(epoch);
  }
  return result;
}

}  // namespace xvec

#endif  // XVEC_TRAINER_HPP_
