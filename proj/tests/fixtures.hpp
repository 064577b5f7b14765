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

// Reduced-width detector head shared by the compression tests.

#ifndef PVANET_TESTS_FIXTURES_HPP_
#define PVANET_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "oracles.hpp"
#include "pvanet/blocks.hpp"
#include "pvanet/executor.hpp"
#include "pvanet/network.hpp"
#include "pvanet/tensor.hpp"

namespace pvanet::testing {

// Detector head at reduced width: 6 feature channels, 2x2 pooling, hidden
// widths 20 and 16, five classes.
inline NetworkSpec small_head() {
  RcnnHeadConfig c;
  c.feature = "feat";
  c.feature_channels = 6;
  c.pooled = 2;
  c.hidden = {20, 16};
  c.num_classes = 5;
  NetworkSpec net;
  net.name = "small-head";
  net.inputs.push_back({"feat", Shape{1, 6, 10, 10}});
  net.inputs.push_back({"rois", Shape{7, 4, 1, 1}});
  net.layers = build_rcnn_head(c);
  net.outputs = {"cls_prob", "bbox_pred"};
  return net;
}

inline TensorMap<float> small_head_inputs(uint64_t seed) {
  std::mt19937_64 rng(seed);
  TensorMap<float> in;
  in.emplace("feat", oracle::random_tensor<float>(Shape{1, 6, 10, 10}, rng));
  Tensor rois(Shape{7, 4, 1, 1});
  std::uniform_real_distribution<double> u(0, 100);
  for (int64_t r = 0; r < 7; ++r) {
    const double x = u(rng), y = u(rng);
    rois[r * 4 + 0] = static_cast<float>(x);
    rois[r * 4 + 1] = static_cast<float>(y);
    rois[r * 4 + 2] = static_cast<float>(x + 20 + u(rng) / 2);
    rois[r * 4 + 3] = static_cast<float>(y + 20 + u(rng) / 2);
  }
  in.emplace("rois", std::move(rois));
  return in;
}

// Max absolute difference over max magnitude of the reference.
inline double relative_change(const Tensor& a, const Tensor& b) {
  double num = 0, den = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::fabs(static_cast<double>(a[i]) - b[i]));
    den = std::max(den, std::fabs(static_cast<double>(a[i])));
  }
  return num / std::max(den, 1e-30);
}

}  // namespace pvanet::testing

#endif  // PVANET_TESTS_FIXTURES_HPP_
