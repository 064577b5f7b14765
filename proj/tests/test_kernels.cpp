/* Copyright 2026 The pvanet-lite Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "grad_cases.hpp"
#include "helpers.hpp"
#include "oracles.hpp"
#include "pvanet/kernels.hpp"
#include "pvanet/sched.hpp"

namespace pvanet {
namespace {

using testing::chain;
using testing::conv_spec;
using testing::layer;
using testing::grad_cases;
using testing::GradCase;

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

double max_rel_diff(const TensorD& a, const TensorD& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double worst = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::fabs(a[i] - b[i]) / std::max(1.0, std::fabs(b[i])));
  }
  return worst;
}

// ---- convolution -----------------------------------------------------------

TEST(Conv, Conv1_1OutputExtent) {
  EXPECT_EQ(conv_output_shape(Shape{1, 3, 1056, 640}, conv_spec(3, 16, 7, 2, 3)), (Shape{1, 16, 528, 320}));
}

TEST(Conv, IdentityOneByOne) {
  std::mt19937_64 rng(3);
  const auto x = oracle::random_tensor<double>(Shape{2, 4, 3, 5}, rng);
  TensorD w(Shape{4, 4, 1, 1});
  for (int c = 0; c < 4; ++c) w.at(c, c, 0, 0) = 1.0;
  const std::vector<double> zero(4, 0.0);
  EXPECT_EQ(conv2d_forward<double>(x, w, zero, conv_spec(4, 4, 1)), x);
}

struct ConvCase {
  int64_t cin, cout, k, stride, pad, groups, h, w;
  bool bias;
};

class ConvOracle : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvOracle, MatchesNestedLoops) {
  const ConvCase c = GetParam();
  std::mt19937_64 rng(static_cast<uint64_t>(c.k * 100 + c.stride * 10 + c.groups));
  const ConvSpec spec = conv_spec(c.cin, c.cout, c.k, c.stride, c.pad, c.bias, c.groups);
  const auto x = oracle::random_tensor<double>(Shape{2, c.cin, c.h, c.w}, rng);
  const auto w = oracle::random_tensor<double>(spec.weight_shape(), rng);
  std::vector<double> b;
  if (c.bias) b = to_vec(oracle::random_tensor<double>(Shape{c.cout, 1, 1, 1}, rng).data());
  const auto got = conv2d_forward<double>(x, w, b, spec);
  EXPECT_LT(max_rel_diff(got, oracle::conv(x, w, b, c.stride, c.pad, c.groups)), 1e-12);
  const auto got_f = conv2d_forward<float>(x.cast<float>(), w.cast<float>(),
                                           std::vector<float>(b.begin(), b.end()), spec);
  EXPECT_LT(max_rel_diff(got_f.cast<double>(), oracle::conv(x, w, b, c.stride, c.pad, c.groups)), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvOracle,
                         ::testing::Values(ConvCase{2, 3, 3, 1, 0, 1, 5, 5, false}, ConvCase{3, 4, 3, 1, 1, 1, 6, 7, true},
                                           ConvCase{3, 5, 7, 2, 3, 1, 11, 9, true},
                                           ConvCase{4, 6, 3, 2, 1, 2, 8, 8, false},
                                           ConvCase{4, 4, 4, 2, 1, 4, 6, 6, true},
                                           ConvCase{5, 2, 1, 2, 0, 1, 7, 5, true}));

TEST(Conv, ShapeErrorsNameTheAxis) {
  const Tensor x(Shape{1, 3, 5, 5});
  const Tensor w(Shape{4, 2, 3, 3});
  try {
    conv2d_forward<float>(x, w, {}, conv_spec(2, 4, 3));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(C)"), std::string::npos) << e.what();
  }
  try {
    conv_output_shape(Shape{1, 2, 2, 9}, conv_spec(2, 4, 5));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(H)"), std::string::npos) << e.what();
  }
  EXPECT_THROW(conv_spec(3, 4, 3, 1, 0, false, 2).check(), ShapeError);
}

TEST(ConvBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(5);
  const ConvSpec spec = conv_spec(3, 4, 3, 1, 1, true);
  const auto x = oracle::random_tensor<double>(Shape{1, 3, 5, 5}, rng);
  const auto w = oracle::random_tensor<double>(spec.weight_shape(), rng);
  const auto g = conv2d_backward<double>(x, w, TensorD(Shape{1, 4, 5, 5}), spec);
  for (double v : g.input.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.weights.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.bias) EXPECT_EQ(v, 0.0);
}

TEST(ConvBackward, IdentityPassesGradientThrough) {
  std::mt19937_64 rng(6);
  TensorD w(Shape{3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0;
  const auto x = oracle::random_tensor<double>(Shape{2, 3, 4, 4}, rng);
  const auto gy = oracle::random_tensor<double>(Shape{2, 3, 4, 4}, rng);
  EXPECT_EQ(conv2d_backward<double>(x, w, gy, conv_spec(3, 3, 1)).input, gy);
}

// ---- max pooling -----------------------------------------------------------

TEST(MaxPool, PublishedExtents) {
  const PoolSpec p;
  EXPECT_EQ(pool_output_shape(Shape{1, 32, 528, 320}, p), (Shape{1, 32, 264, 160}));
  EXPECT_EQ(pool_output_shape(Shape{1, 128, 132, 80}, p), (Shape{1, 128, 66, 40}));
}

TEST(MaxPool, ConstantInputConstantOutput) {
  const Tensor x(Shape{1, 2, 7, 6}, 2.5f);
  const auto r = max_pool2d<float>(x, PoolSpec{});
  for (float v : r.output.data()) EXPECT_EQ(v, 2.5f);
}

TEST(MaxPool, MatchesCeilModeOracle) {
  std::mt19937_64 rng(8);
  for (int64_t h : {3, 4, 5, 8, 9}) {
    for (int64_t w : {3, 6, 7}) {
      const auto x = oracle::random_tensor<double>(Shape{2, 3, h, w}, rng);
      const auto r = max_pool2d<double>(x, PoolSpec{});
      EXPECT_EQ(r.output, oracle::max_pool_ceil(x, 3, 2)) << h << "x" << w;
      for (int64_t i = 0; i < r.output.size(); ++i) EXPECT_EQ(x[r.argmax[i]], r.output[i]);
    }
  }
}

TEST(MaxPool, KernelLargerThanInput) {
  EXPECT_THROW(pool_output_shape(Shape{1, 1, 2, 5}, PoolSpec{}), ShapeError);
}

// ---- bilinear deconvolution ------------------------------------------------

TEST(Deconv, UpscaleExtent) {
  EXPECT_EQ(deconv_output_shape(Shape{1, 384, 33, 20}, DeconvSpec{384, 4, 2, 1}), (Shape{1, 384, 66, 40}));
}

TEST(Deconv, KernelTaps) {
  const auto t = bilinear_taps(4);
  ASSERT_EQ(t.size(), 4u);
  EXPECT_DOUBLE_EQ(t[0], 0.25);
  EXPECT_DOUBLE_EQ(t[1], 0.75);
  EXPECT_DOUBLE_EQ(t[2], 0.75);
  EXPECT_DOUBLE_EQ(t[3], 0.25);
}

TEST(Deconv, ConstantChannelStaysConstantInInterior) {
  const Tensor x(Shape{1, 2, 5, 4}, 3.0f);
  const auto y = deconv2d_bilinear<float>(x, DeconvSpec{2, 4, 2, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 2, 10, 8}));
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 1; i < 9; ++i)
      for (int64_t j = 1; j < 7; ++j) EXPECT_NEAR(y.at(0, c, i, j), 3.0, 1e-6);
  // Borders receive a single tap pair and attenuate.
  EXPECT_NEAR(y.at(0, 0, 0, 0), 3.0 * 0.75 * 0.75, 1e-6);
}

TEST(Deconv, RampMapsToBilinearInterpolation) {
  for (auto [h, w] : {std::pair<int64_t, int64_t>{2, 2}, {5, 7}}) {
    TensorD x(Shape{1, 1, h, w});
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) x.at(0, 0, i, j) = 0.7 * i - 1.3 * j + 2.0;
    const auto y = deconv2d_bilinear<double>(x, DeconvSpec{1, 4, 2, 1});
    // Output pixel o samples the input at (o + 0.5) / 2 - 0.5.
    for (int64_t i = 1; i < 2 * h - 1; ++i)
      for (int64_t j = 1; j < 2 * w - 1; ++j) {
        const double u = (i + 0.5) / 2 - 0.5, v = (j + 0.5) / 2 - 0.5;
        EXPECT_NEAR(y.at(0, 0, i, j), 0.7 * u - 1.3 * v + 2.0, 1e-12) << i << "," << j;
      }
  }
}

// ---- elementwise, concat, scale/shift ----------------------------------------

TEST(CRelu, AlgebraOnRandomTensors) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto x = oracle::random_tensor<float>(Shape{1, 2, 3, 3}, rng, -5, 5);
    const auto p = relu(x), n = relu(negate(x));
    for (int64_t i = 0; i < x.size(); ++i) {
      ASSERT_EQ(p[i] - n[i], x[i]);
      ASSERT_EQ(p[i] * n[i], 0.0f);
    }
  }
}

TEST(CRelu, SumOfHalvesIsAbsoluteValue) {
  std::mt19937_64 rng(10);
  const auto x = oracle::random_tensor<double>(Shape{3, 4, 5, 6}, rng, -5, 5);
  const auto p = relu(x), n = relu(negate(x));
  for (int64_t i = 0; i < x.size(); ++i) EXPECT_EQ(p[i] + n[i], std::fabs(x[i]));
}

TEST(Concat, Associative) {
  std::mt19937_64 rng(9);
  const auto a = oracle::random_tensor<float>(Shape{2, 1, 3, 4}, rng);
  const auto b = oracle::random_tensor<float>(Shape{2, 3, 3, 4}, rng);
  const auto c = oracle::random_tensor<float>(Shape{2, 2, 3, 4}, rng);
  EXPECT_EQ(concat_channels(a, concat_channels(b, c)), concat_channels(concat_channels(a, b), c));
}

TEST(PoolBackward, GradientGoesOnlyToArgmaxAndSumIsKept) {
  std::mt19937_64 rng(23);
  const auto x = oracle::random_tensor<double>(Shape{1, 2, 8, 8}, rng);
  const PoolSpec spec{3, 3, 0, true};  // non-overlapping windows give unique argmaxes
  const auto r = max_pool2d<double>(x, spec);
  const auto gy = oracle::random_tensor<double>(r.output.shape(), rng);
  const auto gx = max_pool2d_backward<double>(gy, r.argmax, x.shape());
  double sy = 0, sx = 0;
  for (double v : gy.data()) sy += v;
  for (int64_t i = 0; i < gx.size(); ++i) {
    sx += gx[i];
    if (std::find(r.argmax.begin(), r.argmax.end(), i) == r.argmax.end()) {
      EXPECT_EQ(gx[i], 0.0);
    }
  }
  EXPECT_NEAR(sx, sy, 1e-12);

  const auto f = oracle::random_tensor<double>(Shape{1, 2, 12, 12}, rng);
  const TensorD rois(Shape{1, 4, 1, 1}, std::vector<double>{0, 0, 176, 176});
  const auto rp = roi_pool<double>(f, rois, RoiPoolSpec{});
  const auto g = oracle::random_tensor<double>(rp.output.shape(), rng);
  const auto gf = roi_pool_backward<double>(g, rp.argmax, f.shape());
  double sg = 0, sf = 0;
  for (double v : g.data()) sg += v;
  for (double v : gf.data()) sf += v;
  EXPECT_NEAR(sf, sg, 1e-12);
}

TEST(Concat, NegatedHalfCancels) {
  std::mt19937_64 rng(12);
  const auto x = oracle::random_tensor<float>(Shape{2, 3, 4, 5}, rng);
  const auto y = concat_channels(x, negate(x));
  ASSERT_EQ(y.shape(), (Shape{2, 6, 4, 5}));
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 5; ++j) EXPECT_EQ(y.at(n, c, i, j) + y.at(n, c + 3, i, j), 0.0f);
}

TEST(Concat, MismatchedExtentIsShapeError) {
  EXPECT_THROW(concat_channels(Tensor(Shape{1, 2, 4, 4}), Tensor(Shape{1, 2, 4, 5})), ShapeError);
  EXPECT_THROW(concat_channels(Tensor(Shape{1, 2, 4, 4}), Tensor(Shape{2, 2, 4, 4})), ShapeError);
}

TEST(Slice, TakesChannelRange) {
  std::mt19937_64 rng(13);
  const auto x = oracle::random_tensor<float>(Shape{1, 5, 2, 2}, rng);
  const auto s = slice_channels(x, 1, 3);
  ASSERT_EQ(s.shape(), (Shape{1, 2, 2, 2}));
  EXPECT_EQ(s.at(0, 1, 1, 0), x.at(0, 2, 1, 0));
  EXPECT_THROW(slice_channels(x, 3, 6), ShapeError);
}

TEST(ScaleShift, UnitScaleZeroShiftIsIdentity) {
  std::mt19937_64 rng(14);
  const auto x = oracle::random_tensor<float>(Shape{2, 3, 4, 4}, rng);
  const std::vector<float> one(3, 1.0f), zero(3, 0.0f);
  EXPECT_EQ(scale_shift<float>(x, one, zero), x);
}

// ---- batch normalization -------------------------------------------------

TEST(BatchNorm, FrozenUnitStatsIsIdentity) {
  std::mt19937_64 rng(15);
  const auto x = oracle::random_tensor<float>(Shape{2, 3, 4, 4}, rng);
  const std::vector<float> zero(3, 0.0f), one(3, 1.0f);
  EXPECT_EQ(batchnorm_frozen<float>(x, zero, one, 0.0), x);
}

TEST(BatchNorm, MinibatchOutputIsStandardized) {
  std::mt19937_64 rng(16);
  const auto x = oracle::random_tensor<double>(Shape{4, 3, 5, 5}, rng, -3, 7);
  const auto r = batchnorm_minibatch<double>(x, 0.0);
  for (int64_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < 25; ++i) {
        const double v = r.output.plane(n, c)[i];
        s += v;
        s2 += v * v;
      }
    EXPECT_NEAR(s / 100, 0.0, 1e-5);
    EXPECT_NEAR(s2 / 100, 1.0, 1e-5);
  }
}

TEST(BatchNorm, FoldIntoScaleShiftMatches) {
  std::mt19937_64 rng(17);
  const auto x = oracle::random_tensor<double>(Shape{2, 4, 3, 3}, rng, -4, 4);
  const std::vector<double> mean = {0.3, -1.2, 2.0, 0.0}, var = {0.5, 2.0, 0.01, 9.0};
  std::vector<double> scale, shift;
  fold_batchnorm<double>(mean, var, 1e-5, scale, shift);
  const auto a = batchnorm_frozen<double>(x, mean, var, 1e-5);
  const auto b = scale_shift<double>(x, scale, shift);
  for (int64_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6 * std::max(1.0, std::fabs(a[i])));
}

TEST(BatchNorm, RunningStatsUseMomentumAndBesselCorrection) {
  BatchNormStats<double> running{{1.0}, {2.0}};
  const BatchNormStats<double> batch{{3.0}, {4.0}};
  update_running_stats(running, batch, 0.9, 5);
  EXPECT_DOUBLE_EQ(running.mean[0], 0.9 * 1.0 + 0.1 * 3.0);
  EXPECT_DOUBLE_EQ(running.var[0], 0.9 * 2.0 + 0.1 * 4.0 * 5.0 / 4.0);
}

// ---- fully connected -------------------------------------------------------

TEST(FullyConnected, IdentityWeights) {
  std::mt19937_64 rng(18);
  const auto x = oracle::random_tensor<double>(Shape{3, 2, 2, 2}, rng);
  TensorD w(Shape{8, 8, 1, 1});
  for (int i = 0; i < 8; ++i) w.at(i, i, 0, 0) = 1.0;
  EXPECT_EQ(fully_connected<double>(x, w, {}), x.reshaped(Shape{3, 8, 1, 1}));
}

TEST(FullyConnected, MatchesDotProductOracle) {
  std::mt19937_64 rng(19);
  const auto x = oracle::random_tensor<double>(Shape{4, 3, 2, 2}, rng);
  const auto w = oracle::random_tensor<double>(Shape{7, 12, 1, 1}, rng);
  const auto b = to_vec(oracle::random_tensor<double>(Shape{7, 1, 1, 1}, rng).data());
  EXPECT_LT(max_rel_diff(fully_connected<double>(x, w, b), oracle::fully_connected(x, w, b)), 1e-12);
  EXPECT_THROW(fully_connected<double>(x, TensorD(Shape{7, 11, 1, 1}), b), ShapeError);
}

// ---- RoI pooling -----------------------------------------------------------

TEST(RoiPool, WholeSixBySixMapIsCopied) {
  std::mt19937_64 rng(20);
  const auto f = oracle::random_tensor<double>(Shape{1, 3, 6, 6}, rng);
  TensorD rois(Shape{1, 4, 1, 1}, std::vector<double>{0, 0, 80, 80});  // 80/16 = 5
  EXPECT_EQ(roi_pool<double>(f, rois, RoiPoolSpec{}).output, f.reshaped(Shape{1, 3, 6, 6}));
}

TEST(RoiPool, TwoHundredRoisOnConvf) {
  const Tensor f(Shape{1, 512, 66, 40}, 1.0f);
  Tensor rois(Shape{200, 4, 1, 1});
  for (int64_t r = 0; r < 200; ++r) {
    rois[r * 4 + 0] = static_cast<float>(r);
    rois[r * 4 + 1] = static_cast<float>(2 * r);
    rois[r * 4 + 2] = static_cast<float>(r + 100);
    rois[r * 4 + 3] = static_cast<float>(2 * r + 150);
  }
  EXPECT_EQ(roi_pool<float>(f, rois, RoiPoolSpec{}).output.shape(), (Shape{200, 512, 6, 6}));
}

TEST(RoiPool, MatchesBinEnumerationOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> coord(-40, 260);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = oracle::random_tensor<double>(Shape{1, 3, 13, 11}, rng);
    std::vector<Box> boxes;
    TensorD rois(Shape{8, 4, 1, 1});
    for (int64_t r = 0; r < 8; ++r) {
      double a = coord(rng), b = coord(rng), c = coord(rng), d = coord(rng);
      Box box{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
      boxes.push_back(box);
      rois[r * 4 + 0] = box.x1;
      rois[r * 4 + 1] = box.y1;
      rois[r * 4 + 2] = box.x2;
      rois[r * 4 + 3] = box.y2;
    }
    RoiPoolSpec spec;
    spec.pooled_h = 3;
    spec.pooled_w = 4;
    EXPECT_EQ(roi_pool<double>(f, rois, spec).output, oracle::roi_pool(f, boxes, 3, 4, spec.spatial_scale));
  }
}

TEST(RoiPool, RoiOutsideMapIsNotAnError) {
  const Tensor f(Shape{1, 1, 4, 4}, 1.0f);
  const Tensor rois(Shape{1, 4, 1, 1}, std::vector<float>{500, 500, 900, 900});
  const auto r = roi_pool<float>(f, rois, RoiPoolSpec{});
  for (float v : r.output.data()) EXPECT_EQ(v, 0.0f);
}

// ---- softmax ---------------------------------------------------------------

TEST(Softmax, EqualRowIsUniform) {
  const auto y = softmax(Tensor(Shape{2, 4, 1, 1}, 3.0f));
  for (float v : y.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Softmax, KnownValuesAndShiftInvariance) {
  const TensorD x(Shape{1, 2, 1, 1}, std::vector<double>{0.0, std::log(3.0)});
  const auto y = softmax(x);
  EXPECT_NEAR(y[0], 0.25, 1e-12);
  EXPECT_NEAR(y[1], 0.75, 1e-12);
  std::mt19937_64 rng(22);
  const auto z = oracle::random_tensor<double>(Shape{3, 5, 2, 2}, rng, -10, 10);
  auto shifted = z;
  for (double& v : shifted.data()) v += 123.0;
  EXPECT_LT(max_rel_diff(softmax(z), softmax(shifted)), 1e-6);
}

// ---- gradient checks through single-layer networks -------------------------

class KernelGradient : public ::testing::TestWithParam<size_t> {};

TEST_P(KernelGradient, TwentySeedsWithinTolerance) {
  const GradCase gc = grad_cases()[GetParam()];
  const NetworkSpec net = gc.build();
  int64_t checked = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    GradCheckOptions opt;
    opt.mode = gc.mode;
    opt.seed = seed;
    const auto r = grad_check(net, testing::random_params(net, seed), testing::random_inputs(net, seed), opt);
    EXPECT_LT(r.max_rel_error, 1e-4) << gc.label << " seed " << seed << " worst " << r.worst;
    checked += r.checked;
  }
  EXPECT_GT(checked, 0);
}

INSTANTIATE_TEST_SUITE_P(Kernels, KernelGradient, ::testing::Range<size_t>(0, grad_cases().size()),
                         [](const auto& info) { return grad_cases()[info.param].label; });

TEST(KernelGradientRoi, FeatureGradientThroughRoiPool) {
  NetworkSpec net;
  net.inputs = {{"data", Shape{1, 3, 9, 7}}, {"rois", Shape{3, 4, 1, 1}}};
  RoiPoolSpec spec;
  spec.pooled_h = spec.pooled_w = 2;
  spec.spatial_scale = 0.25;
  net.layers = {layer("y", LayerKind::kRoiPool, {"data", "rois"}, spec)};
  net.outputs = {"y"};
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    auto inputs = testing::random_inputs(net, seed);
    inputs["rois"] = TensorD(Shape{3, 4, 1, 1}, std::vector<double>{0, 0, 24, 32, 5, 3, 14, 20, 9, 13, 22, 30});
    const auto r = grad_check(net, {}, inputs, GradCheckOptions{.seed = seed});
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst;
    EXPECT_GT(r.checked, 0);
  }
}

TEST(KernelCounter, CountsCalls) {
  const uint64_t before = kernel_invocation_count();
  relu(Tensor(Shape{1, 1, 1, 1}));
  EXPECT_EQ(kernel_invocation_count(), before + 1);
}

}  // namespace
}  // namespace pvanet
