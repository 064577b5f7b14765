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

// Small builders shared by the test binaries.

#ifndef PVANET_TESTS_HELPERS_HPP_
#define PVANET_TESTS_HELPERS_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pvanet/executor.hpp"
#include "pvanet/network.hpp"
#include "pvanet/weights.hpp"

namespace pvanet::testing {

inline LayerSpec layer(std::string name, LayerKind kind, std::vector<std::string> inputs,
                       LayerParams params = {}) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  l.inputs = std::move(inputs);
  l.params = std::move(params);
  return l;
}

inline ConvSpec conv_spec(int64_t cin, int64_t cout, int64_t k, int64_t stride = 1, int64_t pad = 0,
                          bool bias = false, int64_t groups = 1) {
  ConvSpec s;
  s.in_channels = cin;
  s.out_channels = cout;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  s.pad = pad;
  s.has_bias = bias;
  s.groups = groups;
  return s;
}

// One-input network whose outputs are the listed layers (default: last).
inline NetworkSpec chain(const Shape& input, std::vector<LayerSpec> layers, std::vector<std::string> outputs = {}) {
  NetworkSpec net;
  net.name = "test";
  net.inputs.push_back({"data", input});
  net.layers = std::move(layers);
  net.outputs = outputs.empty() ? std::vector<std::string>{net.layers.back().name} : std::move(outputs);
  return net;
}

// Every required parameter filled with uniform values; variances and scales
// are kept away from zero.
inline ParamMap<double> random_params(const NetworkSpec& net, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.5, 1.5);
  ParamMap<double> out;
  for (const auto& info : required_params(net)) {
    BasicTensor<double> t(info.shape);
    const bool positive = info.role == ParamRole::kVar || info.role == ParamRole::kScale;
    for (double& x : t.data()) x = positive ? pos(rng) : u(rng);
    out.emplace(info.name, std::move(t));
  }
  return out;
}

inline TensorMap<double> random_inputs(const NetworkSpec& net, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TensorMap<double> out;
  for (const auto& in : net.inputs) {
    BasicTensor<double> t(in.shape);
    for (double& x : t.data()) x = u(rng);
    out.emplace(in.name, std::move(t));
  }
  return out;
}

}  // namespace pvanet::testing

#endif  // PVANET_TESTS_HELPERS_HPP_
