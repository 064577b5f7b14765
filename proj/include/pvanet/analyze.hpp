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

#ifndef PVANET_ANALYZE_HPP_
#define PVANET_ANALYZE_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pvanet/network.hpp"

namespace pvanet {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Output shape of every input and layer, computed from layer parameters
// without touching tensor data. `input_shapes` overrides declared inputs.
// Throws SpecError (invalid net) or ShapeError naming the offending layer.
std::map<std::string, Shape> infer_shapes(const NetworkSpec& net,
                                          const std::map<std::string, Shape>& input_shapes = {});
// Overrides the first declared input only.
std::map<std::string, Shape> infer_shapes(const NetworkSpec& net, const Shape& input_shape);

// Weight elements of a single layer: conv and FC weights and the bilinear
// deconv kernel. Biases and normalization parameters are not counted.
int64_t layer_weight_params(const LayerSpec& layer);
// Multiply-accumulates of a single layer given its output shape.
int64_t layer_macs(const LayerSpec& layer, const Shape& output);

// One (receptive-field size, channel fraction) atom.
struct RfAtom {
  int64_t size = 1;
  double fraction = 0.0;
  bool operator==(const RfAtom&) const = default;
};
using RfDistribution = std::vector<RfAtom>;  // ascending size, fractions sum to 1

// Expected receptive-field distribution at `layer`: each conv path keeps its
// own size, concatenations weight branches by channel count and element-wise
// sums weight their operands equally. Throws AnalysisError for layers without
// spatial semantics (fully connected, RoI pooling) or unknown names.
RfDistribution receptive_field_distribution(const NetworkSpec& net, const std::string& layer);

// Per-layer distributions for every layer where one is defined.
std::map<std::string, RfDistribution> receptive_fields(const NetworkSpec& net);

struct RowCost {
  std::string name;
  Shape output;
  int64_t params = 0;
  int64_t macs = 0;
  RfDistribution rf;  // empty when undefined
  int64_t max_rf = 0;
  bool operator==(const RowCost&) const = default;
};

struct ClassifierCost {
  int64_t proposals = 0;
  int64_t macs = 0;         // every FC layer of the head
  int64_t hidden_macs = 0;  // hidden FC layers only, without the output layer
  bool operator==(const ClassifierCost&) const = default;
};

struct MacBreakdown {
  int64_t shared_cnn = 0;
  int64_t rpn = 0;
  int64_t per_roi = 0;
  int64_t per_roi_hidden = 0;
  std::vector<ClassifierCost> classifier;
  std::vector<std::string> notes;
  bool operator==(const MacBreakdown&) const = default;
};

struct CostReport {
  std::string network;
  Shape input;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<RowCost> rows;
  int64_t total_params = 0;
  int64_t total_macs = 0;
  std::optional<MacBreakdown> breakdown;
  bool reference = false;  // attach published reference values and deltas
  bool operator==(const CostReport&) const = default;
};

// Rows aggregate layers by LayerSpec::row() in order of first appearance.
// Rows without weights (pooling, concatenation) are kept with zero cost.
std::map<std::string, int64_t> count_params(const NetworkSpec& net);
std::map<std::string, int64_t> count_macs(const NetworkSpec& net,
                                          const std::map<std::string, Shape>& shapes);
CostReport analyze_network(const NetworkSpec& net, const std::map<std::string, Shape>& input_shapes = {},
                           bool with_rf = true);

// Shared CNN / RPN / classifier split of a detector network built by
// build_pvanet_detector (or compressed from one). Layers grouped "rpn" form
// the RPN, "rcnn" the classifier; the classifier is costed per RoI and scaled
// by each proposal count.
MacBreakdown count_rpn_rcnn_macs(const NetworkSpec& detector, const std::vector<int64_t>& proposals);
MacBreakdown count_rpn_rcnn_macs(int64_t proposals);

// Published cost table, transcribed into data/pvanet_reference.json.
struct ReferenceRow {
  std::string name;
  std::optional<Shape> output;  // (1, C, H, W)
  std::optional<double> params_k;
  int params_decimals = 0;
  std::optional<double> macs_m;
  int macs_decimals = 0;
};

struct ReferenceNetwork {
  std::string name;
  std::optional<double> shared_cnn, rpn, classifier, total;
};

struct ReferenceTable {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<ReferenceRow> rows;
  double total_params_k = 0;
  double total_macs_m = 0;
  int64_t breakdown_proposals = 0;
  double shared_cnn_gmac = 0, rpn_gmac = 0, classifier_gmac = 0, total_gmac = 0;
  int breakdown_decimals = 1;
  std::vector<ReferenceNetwork> others;

  const ReferenceRow* find(const std::string& name) const;
};

const ReferenceTable& pvanet_reference();
ReferenceTable parse_reference(std::string_view json);

// Rounds `value / unit` to `decimals` places.
double round_to(double value, int decimals);
// Printed precision used for cells without a reference: one decimal below
// ten units, integers otherwise.
int display_decimals(double scaled);
double display_value(int64_t value, double unit, std::optional<int> decimals = std::nullopt);
// Sum of the per-row display values (what a printed table adds up to).
double display_total_params_k(const CostReport& report);
double display_total_macs_m(const CostReport& report);

enum class ReportFormat { kTable, kJson };

std::string emit_report(const CostReport& report, ReportFormat format);
CostReport report_from_json(std::string_view json);

}  // namespace pvanet

#endif  // PVANET_ANALYZE_HPP_
