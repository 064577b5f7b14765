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

#ifndef PVANET_BLOCKS_HPP_
#define PVANET_BLOCKS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pvanet/network.hpp"

namespace pvanet {

enum class Residual { kNone, kIdentity, kProjection };

// "1x1 - KxK - 1x1" block whose KxK stage is a concatenated ReLU:
// conv -> BN -> [x, -x] -> scale/shift -> ReLU. The 1x1 wrappers are optional
// (the stem has neither). With a leading 1x1 the stride sits on it, otherwise
// on the KxK conv.
struct CReLUBlockSpec {
  std::string prefix;
  std::string input;
  int64_t in_channels = 0;
  std::optional<int64_t> pre_channels;
  int64_t mid_kernel = 3;
  int64_t mid_channels = 0;
  std::optional<int64_t> post_channels;
  int64_t stride = 1;
  Residual residual = Residual::kNone;
  // Scale/shift after the concatenation. On for every block in PVANET.
  bool scale_shift = true;
};

struct ChannelPair {
  int64_t reduce = 0;
  int64_t out = 0;
};

struct ChannelTriple {
  int64_t reduce = 0;
  int64_t mid = 0;
  int64_t out = 0;
};

// Inception block: parallel [1x1], [1x1 -> 3x3], [1x1 -> 3x3 -> 3x3] and, for
// stride 2 only, [3x3 max-pool -> 1x1] branches, concatenated and mixed by a
// 1x1 "out" conv. In stride-2 blocks the first conv of each branch carries the
// stride.
struct InceptionBlockSpec {
  std::string prefix;
  std::string input;
  int64_t in_channels = 0;
  int64_t b1x1 = 0;
  ChannelPair b3x3;
  ChannelTriple b5x5;
  std::optional<int64_t> bpool;
  int64_t out_channels = 0;
  int64_t stride = 1;
  Residual residual = Residual::kIdentity;
};

struct BlockOutput {
  std::vector<LayerSpec> layers;
  std::string output;  // name of the block's final layer (== prefix)
  int64_t channels = 0;
};

// The final layer of each block is named exactly `prefix` and every emitted
// layer carries `prefix` as its group. Throws SpecError on inconsistent specs.
BlockOutput build_crelu_block(const CReLUBlockSpec& spec);
BlockOutput build_inception_block(const InceptionBlockSpec& spec);

// conv -> BN -> scale/shift [-> ReLU]: the unit every conv in the feature
// extractor expands to. Returns the name of the last layer.
std::string append_conv_unit(std::vector<LayerSpec>& layers, const std::string& name,
                             const std::string& input, const std::string& group,
                             const ConvSpec& conv, bool with_relu);

// Full feature extractor from conv1_1 to convf at the given input extent.
// Declared outputs: convf and conv4_4.
NetworkSpec build_pvanet(int64_t height = 1056, int64_t width = 640);

struct RpnHeadConfig {
  std::string feature = "convf";
  int64_t input_channels = 128;  // leading channels of `feature` consumed
  int64_t conv_channels = 384;
  int64_t anchors = 25;
};

// slice -> 3x3 conv + ReLU -> 1x1 conv to anchors * (2 + 4) channels, split
// into "rpn_cls_score" (2A) and "rpn_bbox_pred" (4A). All layers are grouped
// under "rpn".
std::vector<LayerSpec> build_rpn_head(const RpnHeadConfig& config = {});

struct RcnnHeadConfig {
  std::string feature = "convf";
  std::string rois = "rois";
  int64_t feature_channels = 512;
  int64_t pooled = 6;
  double spatial_scale = 1.0 / 16.0;
  std::vector<int64_t> hidden = {4096, 4096};  // fc6, fc7, ...
  int64_t num_classes = 21;                     // including background
};

// roi_pool -> fc6 + ReLU -> fc7 + ReLU -> "rcnn_out" (K + 4K) split into
// "cls_score", "bbox_pred" and "cls_prob". Grouped under "rcnn".
std::vector<LayerSpec> build_rcnn_head(const RcnnHeadConfig& config = {});

struct DetectorConfig {
  int64_t height = 1056;
  int64_t width = 640;
  int64_t proposals = 200;
  RpnHeadConfig rpn;
  RcnnHeadConfig rcnn;
};

// Feature extractor plus both heads. Inputs "data" and "rois"; outputs
// rpn_cls_score, rpn_bbox_pred, cls_prob, bbox_pred.
NetworkSpec build_pvanet_detector(const DetectorConfig& config = {});

// Channel-reduced three-block network (stem, one C.ReLU block, one stride-2
// Inception block) with an FC classifier, for desk-scale training.
NetworkSpec build_mini_pvanet(int64_t num_classes = 4, int64_t patch = 16);

}  // namespace pvanet

#endif  // PVANET_BLOCKS_HPP_
