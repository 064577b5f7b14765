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

#ifndef PVANET_NETWORK_HPP_
#define PVANET_NETWORK_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pvanet/kernels.hpp"
#include "pvanet/tensor.hpp"

namespace pvanet {

enum class LayerKind {
  kConv,
  kMaxPool,
  kDeconvBilinear,
  kRelu,
  kNegate,
  kConcat,
  kScaleShift,
  kBatchNorm,
  kFullyConnected,
  kRoiPool,
  kSoftmax,
  kEltwiseAdd,
  kSliceChannels,
};

std::string_view to_string(LayerKind kind);
// Throws SpecError for unknown names.
LayerKind parse_layer_kind(std::string_view name);

using LayerParams = std::variant<std::monostate, ConvSpec, PoolSpec, DeconvSpec, FcSpec,
                                 RoiPoolSpec, BatchNormSpec, ScaleShiftSpec, SliceSpec>;

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kRelu;
  std::vector<std::string> inputs;
  // Cost-report row this layer rolls up into. Defaults to the layer name.
  std::string group;
  LayerParams params;

  template <typename P>
  const P& get() const {
    return std::get<P>(params);
  }
  const std::string& row() const { return group.empty() ? name : group; }
  bool operator==(const LayerSpec&) const = default;
};

// An externally supplied tensor (image batch, RoI list, ...).
struct NetworkInput {
  std::string name;
  Shape shape;
  bool operator==(const NetworkInput&) const = default;
};

struct NetworkSpec {
  std::string name;
  std::vector<NetworkInput> inputs;
  std::vector<LayerSpec> layers;
  std::vector<std::string> outputs;

  const LayerSpec* find(std::string_view layer) const;
  const NetworkInput* find_input(std::string_view input) const;
  void append(std::vector<LayerSpec> more);
  bool operator==(const NetworkSpec&) const = default;
};

class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Diagnostic {
  std::string layer;
  std::string message;
};

// Structural checks: unique names, resolvable inputs, arity, acyclicity,
// declared outputs, and channel agreement along every edge.
std::vector<Diagnostic> validate(const NetworkSpec& net);

// Layer indices in dependency order. Throws SpecError on a cycle or a
// dangling input.
std::vector<size_t> topological_order(const NetworkSpec& net);

// Channel count of every input and layer, derived from layer parameters
// alone. Throws SpecError naming the layer on disagreement.
std::map<std::string, int64_t> infer_channels(const NetworkSpec& net);

// Parameter tensors a layer needs at execution time.
enum class ParamRole { kWeight, kBias, kScale, kShift, kMean, kVar };

struct ParamInfo {
  std::string name;  // "<layer>.<role>"
  std::string layer;
  ParamRole role;
  Shape shape;
};

std::string param_name(std::string_view layer, ParamRole role);
std::vector<ParamInfo> required_params(const NetworkSpec& net);

// JSON document form. Syntax errors throw FormatError with line and column;
// well-formed documents with bad content throw SpecError with the field path.
std::string spec_to_json(const NetworkSpec& net);
NetworkSpec spec_from_json(std::string_view text);
void save_spec(const NetworkSpec& net, const std::filesystem::path& path);
NetworkSpec load_spec(const std::filesystem::path& path);

}  // namespace pvanet

#endif  // PVANET_NETWORK_HPP_
