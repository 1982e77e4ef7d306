// tests/network_test.cpp

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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "xvec/network.hpp"

using xvec::build_xvector;
using xvec::DenseLayer;
using xvec::ForwardCache;
using xvec::Matrix;
using xvec::Mode;
using xvec::Rng;
using xvec::TdnnLayer;
using xvec::XVectorNet;
using xvec::XVectorNetConfig;

namespace {

// One TDNN layer over {-1,0,1}, stats pool with eps 0, one plain dense
// layer. Weights are hand-set; expected values are worked out by hand in
// the assertions below.
XVectorNet hand_net() {
  XVectorNet net;
  net.feature_dim = 1;
  net.pool.eps = 0.0;
  TdnnLayer l;
  l.offsets = {-1, 0, 1};
  l.weight = Matrix{{1, 0, 0.5}, {0, 1, 0.5}, {-1, 1, 0}};
  l.bias = {0.25, -1, 0};
  l.has_relu = false;
  l.has_batchnorm = false;
  l.weight_grad = Matrix(3, 3);
  l.bias_grad.assign(3, 0.0);
  net.tdnn.push_back(std::move(l));
  DenseLayer d;
  d.weight = Matrix{{1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}, {1, -1}};
  d.bias = {0.5, -0.5};
  d.has_relu = false;
  d.has_batchnorm = false;
  d.weight_grad = Matrix(6, 2);
  d.bias_grad.assign(2, 0.0);
  net.dense.push_back(std::move(d));
  net.validate();
  return net;
}

XVectorNetConfig tiny_config() {
  XVectorNetConfig cfg;
  cfg.feature_dim = 3;
  cfg.frame_widths = {4, 4, 4, 4, 5};
  cfg.segment_width_a = 4;
  cfg.segment_width_b = 3;
  return cfg;
}

std::string tmp_path(const std::string &name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Collects every trainable parameter buffer with its gradient buffer.
std::vector<std::pair<std::vector<double> *, std::vector<double> *>>
param_grad_pairs(XVectorNet &net) {
  std::vector<std::pair<std::vector<double> *, std::vector<double> *>> out;
  for (TdnnLayer &l : net.tdnn) {
    out.push_back({&l.weight.storage(), &l.weight_grad.storage()});
    out.push_back({&l.bias, &l.bias_grad});
    if (l.has_batchnorm) {
      out.push_back({&l.bn.gamma, &l.bn.gamma_grad});
      out.push_back({&l.bn.beta, &l.bn.beta_grad});
    }
  }
  for (DenseLayer &l : net.dense) {
    out.push_back({&l.weight.storage(), &l.weight_grad.storage()});
    out.push_back({&l.bias, &l.bias_grad});
    if (l.has_batchnorm) {
      out.push_back({&l.bn.gamma, &l.bn.gamma_grad});
      out.push_back({&l.bn.beta, &l.bn.beta_grad});
    }
  }
  return out;
}

// Smallest pre-activation magnitude across all ReLU layers; instances near
// zero are rejected before finite-difference checks.
double min_preact_magnitude(XVectorNet &net, const Matrix &frames,
                            std::size_t batch) {
  ForwardCache cache;
  net.forward(frames, batch, Mode::kTrain, &cache);
  double lo = 1e300;
  for (const auto &c : cache.tdnn)
    for (double v : c.preact.storage()) lo = std::min(lo, std::abs(v));
  for (const auto &c : cache.dense)
    for (double v : c.preact.storage()) lo = std::min(lo, std::abs(v));
  return lo;
}

}  // namespace

TEST(Network, HandComputedForwardMatches) {
  XVectorNet net = hand_net();
  Matrix frames{{1}, {2}, {3}, {4}, {5}};
  Matrix out = net.forward(frames, 1, Mode::kEval);
  ASSERT_EQ(out.rows(), 1u);
  ASSERT_EQ(out.cols(), 2u);
  // TDNN rows: [-1.75, 4, 1.5], [-1.75, 6, 2.5], [-1.75, 8, 3.5];
  // pooled = [-1.75, 6, 2.5, 0, sqrt(8/3), sqrt(2/3)].
  const double s1 = std::sqrt(8.0 / 3.0), s2 = std::sqrt(2.0 / 3.0);
  const double e0 = -1.75 + 2.5 + s2 + 0.5;
  const double e1 = 6.0 + 2.5 + 2.0 * s1 - s2 - 0.5;
  EXPECT_NEAR(out(0, 0), e0, 1e-12);
  EXPECT_NEAR(out(0, 1), e1, 1e-12);

  std::vector<double> emb = net.extract_embedding(frames);
  ASSERT_EQ(emb.size(), 2u);
  EXPECT_NEAR(emb[0], e0, 1e-12);
  EXPECT_NEAR(emb[1], e1, 1e-12);
}

TEST(Network, ConstantInputGivesExactSqrtEpsStd) {
  XVectorNet net;
  net.feature_dim = 3;
  net.pool.eps = 1e-10;
  DenseLayer d;
  d.weight = Matrix(6, 6);
  for (std::size_t i = 0; i < 6; ++i) d.weight(i, i) = 1.0;  // identity
  d.bias.assign(6, 0.0);
  d.has_relu = false;
  d.has_batchnorm = false;
  d.weight_grad = Matrix(6, 6);
  d.bias_grad.assign(6, 0.0);
  net.dense.push_back(std::move(d));
  net.validate();

  Matrix frames(7, 3);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 3; ++j) frames(i, j) = 2.5;
  Matrix out = net.forward(frames, 1, Mode::kEval);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(out(0, j), 2.5);
    EXPECT_EQ(out(0, 3 + j), std::sqrt(1e-10));
  }
}

TEST(Network, DeskScaleShapes) {
  Rng rng(11);
  XVectorNet net = build_xvector(XVectorNetConfig::desk_scale(), rng);
  EXPECT_EQ(net.feature_dim, 30u);
  EXPECT_EQ(net.dense.front().in_dim(), 256u);  // pooled 2 x 128
  EXPECT_EQ(net.embedding_dim(), 64u);
  EXPECT_EQ(net.output_dim(), 64u);
  EXPECT_EQ(net.receptive_field(), 15u);

  Matrix frames = xvec::gaussian_matrix(rng, 200, 30);
  std::vector<double> emb = net.extract_embedding(frames);
  EXPECT_EQ(emb.size(), 64u);
}

TEST(Network, FullScaleShapesAndContext) {
  Rng rng(12);
  XVectorNet net = build_xvector(XVectorNetConfig::full_scale(), rng);
  ASSERT_EQ(net.tdnn.size(), 5u);
  EXPECT_EQ(net.tdnn[0].weight.rows(), 150u);
  EXPECT_EQ(net.tdnn[0].weight.cols(), 512u);
  EXPECT_EQ(net.tdnn[1].weight.rows(), 1536u);
  EXPECT_EQ(net.tdnn[1].weight.cols(), 512u);
  EXPECT_EQ(net.tdnn[2].weight.rows(), 1536u);
  EXPECT_EQ(net.tdnn[2].weight.cols(), 512u);
  EXPECT_EQ(net.tdnn[3].weight.rows(), 512u);
  EXPECT_EQ(net.tdnn[3].weight.cols(), 512u);
  EXPECT_EQ(net.tdnn[4].weight.rows(), 512u);
  EXPECT_EQ(net.tdnn[4].weight.cols(), 1500u);
  ASSERT_EQ(net.dense.size(), 2u);
  EXPECT_EQ(net.dense[0].weight.rows(), 3000u);
  EXPECT_EQ(net.dense[0].weight.cols(), 512u);
  EXPECT_EQ(net.dense[1].weight.rows(), 512u);
  EXPECT_EQ(net.dense[1].weight.cols(), 512u);
  EXPECT_EQ(net.embedding_dim(), 512u);

  const std::vector<std::size_t> ctx = net.total_context();
  const std::vector<std::size_t> expected = {5, 9, 15, 15, 15};
  EXPECT_EQ(ctx, expected);
  EXPECT_EQ(net.receptive_field(), 15u);
  // Hand-summed: weights + biases + batchnorm gamma/beta over all layers.
  EXPECT_EQ(net.parameter_count(), 4491668u);
}

TEST(Network, InputShorterThanReceptiveFieldRejected) {
  Rng rng(13);
  XVectorNet net = build_xvector(tiny_config(), rng);
  Matrix frames = xvec::gaussian_matrix(rng, 14, 3);
  try {
    net.forward(frames, 1, Mode::kEval);
    FAIL() << "expected DataError";
  } catch (const xvec::DataError &e) {
    EXPECT_NE(std::string(e.what()).find("15"), std::string::npos);
  }
}

TEST(Network, ZeroGradOutputGivesZeroParameterGradients) {
  Rng rng(14);
  XVectorNet net = build_xvector(tiny_config(), rng);
  Matrix frames = xvec::gaussian_matrix(rng, 2 * 16, 3);
  ForwardCache cache;
  net.forward(frames, 2, Mode::kTrain, &cache);
  Matrix zero(2, net.output_dim());
  net.backward(cache, zero);
  for (auto &[p, g] : param_grad_pairs(net))
    for (double v : *g) EXPECT_EQ(v, 0.0);
}

TEST(Network, BackwardRequiresLiveTrainCache) {
  Rng rng(15);
  XVectorNet net = build_xvector(tiny_config(), rng);
  Matrix frames = xvec::gaussian_matrix(rng, 2 * 16, 3);
  ForwardCache cache;
  net.forward(frames, 2, Mode::kTrain, &cache);
  Matrix g(2, net.output_dim());
  net.backward(cache, g);
  EXPECT_THROW(net.backward(cache, g), xvec::ConfigError);  // consumed
  ForwardCache never;
  EXPECT_THROW(net.backward(never, g), xvec::ConfigError);
  EXPECT_THROW(net.forward(frames, 2, Mode::kEval, &cache), xvec::ConfigError);
}

TEST(Network, GradientsMatchFiniteDifferences) {
  const std::size_t batch = 3, t = 16;
  Rng rng(16);
  XVectorNet net;
  Matrix frames;
  // Reject draws that put a pre-activation near a ReLU kink.
  for (std::uint64_t seed = 20;; ++seed) {
    Rng r(seed);
    net = build_xvector(tiny_config(), r);
    frames = xvec::gaussian_matrix(r, batch * t, 3);
    if (min_preact_magnitude(net, frames, batch) > 2e-4) break;
    ASSERT_LT(seed, 60u) << "no kink-free instance found";
  }

  Matrix weights = xvec::gaussian_matrix(rng, batch, net.output_dim());
  auto objective = [&]() {
    Matrix out = net.forward(frames, batch, Mode::kTrain);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      s += out.storage()[i] * weights.storage()[i];
    return s;
  };

  ForwardCache cache;
  net.forward(frames, batch, Mode::kTrain, &cache);
  Matrix dframes = net.backward(cache, weights);

  const double h = 1e-5;
  double worst = 0.0;
  for (auto &[p, g] : param_grad_pairs(net)) {
    ASSERT_EQ(p->size(), g->size());
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double fd = testutil::central_diff(&(*p)[i], objective, h);
      worst = std::max(worst, testutil::rel_err((*g)[i], fd));
    }
  }
  EXPECT_LT(worst, 1e-3) << "worst parameter gradient disagreement";

  double worst_in = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double fd = testutil::central_diff(&frames.storage()[i], objective, h);
    worst_in = std::max(worst_in, testutil::rel_err(dframes.storage()[i], fd));
  }
  EXPECT_LT(worst_in, 1e-3) << "worst input gradient disagreement";
}

TEST(Network, DeadReluUnitHasZeroIncomingWeightGradient) {
  Rng rng(17);
  XVectorNet net = build_xvector(tiny_config(), rng);
  const std::size_t dead = 2;
  net.dense[0].bias[dead] = -1e6;  // pre-activation < 0 across any batch
  Matrix frames = xvec::gaussian_matrix(rng, 2 * 16, 3);
  ForwardCache cache;
  net.forward(frames, 2, Mode::kTrain, &cache);
  Matrix g = xvec::gaussian_matrix(rng, 2, net.output_dim());
  net.backward(cache, g);
  for (std::size_t r = 0; r < net.dense[0].weight.rows(); ++r)
    EXPECT_EQ(net.dense[0].weight_grad(r, dead), 0.0);
  EXPECT_EQ(net.dense[0].bias_grad[dead], 0.0);
}

TEST(Network, PoolingIsPermutationInvariant) {
  Rng rng(18);
  XVectorNet net;
  net.feature_dim = 5;
  net.pool.eps = 1e-10;
  DenseLayer d;
  d.weight = xvec::gaussian_matrix(rng, 10, 4);
  d.bias.assign(4, 0.1);
  d.has_relu = false;
  d.has_batchnorm = false;
  d.weight_grad = Matrix(10, 4);
  d.bias_grad.assign(4, 0.0);
  net.dense.push_back(std::move(d));
  net.validate();

  Matrix frames = xvec::gaussian_matrix(rng, 40, 5);
  std::vector<double> before = net.extract_embedding(frames);
  std::vector<std::size_t> order(40);
  for (std::size_t i = 0; i < 40; ++i) order[i] = i;
  rng.shuffle(order);
  Matrix shuffled(40, 5);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 5; ++j) shuffled(i, j) = frames(order[i], j);
  std::vector<double> after = net.extract_embedding(shuffled);
  EXPECT_LT(testutil::max_abs_diff(before, after), 1e-9);
}

TEST(Network, EvalForwardIsBatchIndependent) {
  Rng rng(19);
  XVectorNet net = build_xvector(tiny_config(), rng);
  // Move the running stats off their init values first.
  ForwardCache cache;
  for (int i = 0; i < 3; ++i)
    net.forward(xvec::gaussian_matrix(rng, 4 * 16, 3), 4, Mode::kTrain, &cache);

  Matrix a = xvec::gaussian_matrix(rng, 16, 3);
  Matrix b = xvec::gaussian_matrix(rng, 16, 3);
  Matrix stacked(32, 3);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      stacked(i, j) = a(i, j);
      stacked(16 + i, j) = b(i, j);
    }
  Matrix alone = net.forward(a, 1, Mode::kEval);
  Matrix both = net.forward(stacked, 2, Mode::kEval);
  for (std::size_t j = 0; j < alone.cols(); ++j)
    EXPECT_EQ(alone(0, j), both(0, j));
}

TEST(Network, EmbeddingIsDeterministicAndLengthSensitive) {
  Rng rng(21);
  XVectorNet net = build_xvector(tiny_config(), rng);
  Matrix frames = xvec::gaussian_matrix(rng, 20, 3);
  std::vector<double> e1 = net.extract_embedding(frames);
  std::vector<double> e2 = net.extract_embedding(frames);
  EXPECT_EQ(e1, e2);

  Matrix longer(21, 3);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 3; ++j) longer(i, j) = frames(i, j);
  for (std::size_t j = 0; j < 3; ++j) longer(20, j) = 0.7;
  std::vector<double> e3 = net.extract_embedding(longer);
  EXPECT_GT(testutil::max_abs_diff(e1, e3), 0.0);
}

TEST(Network, CheckpointRoundTripsBitExactly) {
  Rng rng(22);
  XVectorNet net = build_xvector(tiny_config(), rng);
  // Touch the running stats so they differ from initialization.
  ForwardCache cache;
  net.forward(xvec::gaussian_matrix(rng, 3 * 16, 3), 3, Mode::kTrain, &cache);

  const std::string path = tmp_path("net.xvck");
  xvec::save_net(path, net);
  XVectorNet back = xvec::load_net(path);

  ASSERT_EQ(back.tdnn.size(), net.tdnn.size());
  ASSERT_EQ(back.dense.size(), net.dense.size());
  EXPECT_EQ(back.pool.eps, net.pool.eps);
  for (std::size_t i = 0; i < net.tdnn.size(); ++i) {
    EXPECT_TRUE(back.tdnn[i].weight == net.tdnn[i].weight);
    EXPECT_EQ(back.tdnn[i].bias, net.tdnn[i].bias);
    EXPECT_EQ(back.tdnn[i].offsets, net.tdnn[i].offsets);
    EXPECT_EQ(back.tdnn[i].bn.running_mean, net.tdnn[i].bn.running_mean);
    EXPECT_EQ(back.tdnn[i].bn.running_var, net.tdnn[i].bn.running_var);
    EXPECT_EQ(back.tdnn[i].bn.momentum, net.tdnn[i].bn.momentum);
    EXPECT_EQ(back.tdnn[i].bn.eps, net.tdnn[i].bn.eps);
  }
  for (std::size_t i = 0; i < net.dense.size(); ++i) {
    EXPECT_TRUE(back.dense[i].weight == net.dense[i].weight);
    EXPECT_EQ(back.dense[i].bias, net.dense[i].bias);
    EXPECT_EQ(back.dense[i].bn.gamma, net.dense[i].bn.gamma);
    EXPECT_EQ(back.dense[i].bn.beta, net.dense[i].bn.beta);
  }

  Matrix frames = xvec::gaussian_matrix(rng, 18, 3);
  EXPECT_EQ(net.extract_embedding(frames), back.extract_embedding(frames));
  std::remove(path.c_str());
}

TEST(Network, CheckpointRejectsBadMagicAndTruncation) {
  Rng rng(23);
  XVectorNet net = build_xvector(tiny_config(), rng);
  const std::string path = tmp_path("net_bad.xvck");
  xvec::save_net(path, net);

  std::ifstream is(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)), {});
  is.close();
  std::ofstream(path, std::ios::binary | std::ios::trunc)
      << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(xvec::load_net(path), xvec::DataError);

  std::ofstream(path, std::ios::binary | std::ios::trunc) << "ZZZZ" << bytes.substr(4);
  EXPECT_THROW(xvec::load_net(path), xvec::DataError);
  std::remove(path.c_str());
}
