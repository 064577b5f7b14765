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

#ifndef PVANET_DETECT_HPP_
#define PVANET_DETECT_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pvanet/tensor.hpp"

namespace pvanet {

// Axis-aligned box in image pixels. Area is (x2 - x1) * (y2 - y1).
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const;
  bool operator==(const Box&) const = default;
};

struct ImageSize {
  double height = 0;
  double width = 0;
};

double iou(const Box& a, const Box& b);
Box clip(const Box& b, const ImageSize& image);

struct AnchorSet {
  std::vector<Box> base;  // centered at the origin, ratio-major order
  double stride = 16;

  size_t size() const { return base.size(); }
  // Anchors over an Hf x Wf grid, ordered (y, x, anchor). Each cell's anchors
  // are centered at ((x + 0.5) * stride, (y + 0.5) * stride).
  std::vector<Box> replicate(int64_t grid_h, int64_t grid_w) const;
};

AnchorSet generate_anchors(const std::vector<double>& scales = {3, 6, 9, 16, 25},
                           const std::vector<double>& ratios = {0.5, 0.667, 1.0, 1.5, 2.0},
                           double stride = 16);

struct BoxDelta {
  double dx = 0, dy = 0, dw = 0, dh = 0;
};

// Deltas taking `from` onto `to`; both boxes must have positive extent.
BoxDelta encode(const Box& from, const Box& to);
Box apply_delta(const Box& from, const BoxDelta& d);

struct DecodeResult {
  std::vector<Box> boxes;
  std::vector<size_t> source;  // index of the anchor each box came from
  size_t rejected = 0;         // non-finite deltas or results
};

// Decodes and clips. Non-finite deltas drop the box.
DecodeResult decode_boxes(std::span<const Box> anchors, std::span<const BoxDelta> deltas,
                          const ImageSize& image);

// Greedy NMS. Returns kept indices in descending score order; equal scores
// are visited by ascending index. A box is suppressed when its IoU with a
// kept box exceeds `iou_threshold`.
std::vector<size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                        double iou_threshold = 0.4);

struct ScoredBox {
  Box box;
  double score = 0;
};

struct ProposalConfig {
  int64_t pre_nms_top_n = 12000;
  int64_t post_nms_top_n = 200;
  double nms_threshold = 0.4;
};

// `scores` is (1, 2A, Hf, Wf): channels [0, A) background, [A, 2A)
// foreground. `deltas` is (1, 4A, Hf, Wf) with channel 4a + j holding
// component j of anchor a.
std::vector<ScoredBox> propose(const Tensor& scores, const Tensor& deltas, const AnchorSet& anchors,
                               const ImageSize& image, const ProposalConfig& config = {});

struct Detection {
  Box box;
  int64_t class_id = 0;
  double score = 0;
};

struct ClassifyConfig {
  double score_threshold = 0.05;
  double nms_threshold = 0.4;
};

// `probs` is (R, K, 1, 1) softmax output with class 0 as background;
// `deltas` is (R, 4K, 1, 1). Detections are grouped by ascending class and
// ordered by score within a class.
std::vector<Detection> classify_rois(const Tensor& probs, const Tensor& deltas, std::span<const Box> rois,
                                     const ImageSize& image, const ClassifyConfig& config = {});

// Score-weighted mean of every candidate with IoU >= iou_threshold against
// `kept`. Weights are score^exponent.
Box bbox_vote(const Detection& kept, std::span<const ScoredBox> candidates, double iou_threshold = 0.5,
              double exponent = 1.0);

// `class_id score x1 y1 x2 y2`, four decimals, one detection per line.
std::string format_detections(std::span<const Detection> detections);
std::vector<Detection> parse_detections(const std::string& text);

}  // namespace pvanet

#endif  // PVANET_DETECT_HPP_
