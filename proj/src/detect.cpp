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

#include "pvanet/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pvanet {

namespace {

struct Center {
  double cx, cy, w, h;
};

Center center(const Box& b) { return {b.x1 + 0.5 * b.width(), b.y1 + 0.5 * b.height(), b.width(), b.height()}; }

bool finite(const Box& b) {
  return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) && std::isfinite(b.y2);
}

// Indices sorted by descending score, ascending index among ties.
std::vector<size_t> score_order(std::span<const double> scores) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double Box::area() const { return std::max(0.0, width()) * std::max(0.0, height()); }

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = iw > 0 && ih > 0 ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Box clip(const Box& b, const ImageSize& image) {
  auto c = [](double v, double hi) { return std::clamp(v, 0.0, hi); };
  Box out{c(b.x1, image.width), c(b.y1, image.height), c(b.x2, image.width), c(b.y2, image.height)};
  out.x2 = std::max(out.x2, out.x1);
  out.y2 = std::max(out.y2, out.y1);
  return out;
}

std::vector<Box> AnchorSet::replicate(int64_t grid_h, int64_t grid_w) const {
  std::vector<Box> out;
  out.reserve(static_cast<size_t>(grid_h * grid_w) * base.size());
  for (int64_t y = 0; y < grid_h; ++y) {
    const double cy = (static_cast<double>(y) + 0.5) * stride;
    for (int64_t x = 0; x < grid_w; ++x) {
      const double cx = (static_cast<double>(x) + 0.5) * stride;
      for (const auto& a : base) out.push_back({a.x1 + cx, a.y1 + cy, a.x2 + cx, a.y2 + cy});
    }
  }
  return out;
}

AnchorSet generate_anchors(const std::vector<double>& scales, const std::vector<double>& ratios, double stride) {
  if (stride <= 0) throw std::invalid_argument("anchor stride must be positive");
  AnchorSet set;
  set.stride = stride;
  for (double r : ratios) {
    if (r <= 0) throw std::invalid_argument("anchor aspect ratios must be positive");
    for (double s : scales) {
      if (s <= 0) throw std::invalid_argument("anchor scales must be positive");
      const double w = s * stride * std::sqrt(r);
      const double h = s * stride / std::sqrt(r);
      set.base.push_back({-0.5 * w, -0.5 * h, 0.5 * w, 0.5 * h});
    }
  }
  return set;
}

BoxDelta encode(const Box& from, const Box& to) {
  const Center a = center(from);
  const Center b = center(to);
  if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0) {
    throw std::invalid_argument("encode: boxes must have positive width and height");
  }
  return {(b.cx - a.cx) / a.w, (b.cy - a.cy) / a.h, std::log(b.w / a.w), std::log(b.h / a.h)};
}

Box apply_delta(const Box& from, const BoxDelta& d) {
  const Center a = center(from);
  const double cx = a.cx + d.dx * a.w;
  const double cy = a.cy + d.dy * a.h;
  const double w = a.w * std::exp(d.dw);
  const double h = a.h * std::exp(d.dh);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

DecodeResult decode_boxes(std::span<const Box> anchors, std::span<const BoxDelta> deltas, const ImageSize& image) {
  if (anchors.size() != deltas.size()) {
    throw std::invalid_argument("decode_boxes: " + std::to_string(anchors.size()) + " boxes but " +
                                std::to_string(deltas.size()) + " deltas");
  }
  DecodeResult out;
  for (size_t i = 0; i < anchors.size(); ++i) {
    const BoxDelta& d = deltas[i];
    if (!std::isfinite(d.dx) || !std::isfinite(d.dy) || !std::isfinite(d.dw) || !std::isfinite(d.dh)) {
      ++out.rejected;
      continue;
    }
    const Box b = apply_delta(anchors[i], d);
    if (!finite(b)) {
      ++out.rejected;
      continue;
    }
    out.boxes.push_back(clip(b, image));
    out.source.push_back(i);
  }
  return out;
}

std::vector<size_t> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_threshold) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: " + std::to_string(boxes.size()) + " boxes but " +
                                std::to_string(scores.size()) + " scores");
  }
  const auto order = score_order(scores);
  std::vector<char> suppressed(boxes.size(), 0);
  std::vector<size_t> keep;
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const size_t i = order[oi];
    if (suppressed[i]) continue;
    keep.push_back(i);
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      const size_t j = order[oj];
      if (!suppressed[j] && iou(boxes[i], boxes[j]) > iou_threshold) suppressed[j] = 1;
    }
  }
  return keep;
}

std::vector<ScoredBox> propose(const Tensor& scores, const Tensor& deltas, const AnchorSet& anchors,
                               const ImageSize& image, const ProposalConfig& config) {
  const Shape s = scores.shape();
  const Shape d = deltas.shape();
  const auto a = static_cast<int64_t>(anchors.size());
  if (s.n != 1 || s.c != 2 * a) {
    throw ShapeError("propose: scores must be (1, " + std::to_string(2 * a) + ", H, W), got " + s.str());
  }
  if (d.n != 1 || d.c != 4 * a || d.h != s.h || d.w != s.w) {
    throw ShapeError("propose: deltas must be (1, " + std::to_string(4 * a) + ", " + std::to_string(s.h) +
                     ", " + std::to_string(s.w) + "), got " + d.str());
  }
  const std::vector<Box> grid = anchors.replicate(s.h, s.w);
  std::vector<BoxDelta> dv(grid.size());
  std::vector<double> fg(grid.size());
  for (int64_t y = 0; y < s.h; ++y) {
    for (int64_t x = 0; x < s.w; ++x) {
      for (int64_t k = 0; k < a; ++k) {
        const size_t i = static_cast<size_t>((y * s.w + x) * a + k);
        const double bg = scores.at(0, k, y, x);
        const double f = scores.at(0, a + k, y, x);
        fg[i] = 1.0 / (1.0 + std::exp(bg - f));
        dv[i] = {deltas.at(0, 4 * k, y, x), deltas.at(0, 4 * k + 1, y, x), deltas.at(0, 4 * k + 2, y, x),
                 deltas.at(0, 4 * k + 3, y, x)};
      }
    }
  }
  const DecodeResult dec = decode_boxes(grid, dv, image);
  std::vector<double> sc;
  sc.reserve(dec.boxes.size());
  for (size_t i : dec.source) sc.push_back(fg[i]);

  auto order = score_order(sc);
  if (config.pre_nms_top_n >= 0 && order.size() > static_cast<size_t>(config.pre_nms_top_n)) {
    order.resize(static_cast<size_t>(config.pre_nms_top_n));
  }
  std::vector<Box> top_boxes;
  std::vector<double> top_scores;
  for (size_t i : order) {
    top_boxes.push_back(dec.boxes[i]);
    top_scores.push_back(sc[i]);
  }
  auto keep = nms(top_boxes, top_scores, config.nms_threshold);
  if (config.post_nms_top_n >= 0 && keep.size() > static_cast<size_t>(config.post_nms_top_n)) {
    keep.resize(static_cast<size_t>(config.post_nms_top_n));
  }
  std::vector<ScoredBox> out;
  for (size_t i : keep) out.push_back({top_boxes[i], top_scores[i]});
  return out;
}

std::vector<Detection> classify_rois(const Tensor& probs, const Tensor& deltas, std::span<const Box> rois,
                                     const ImageSize& image, const ClassifyConfig& config) {
  const Shape p = probs.shape();
  const auto r = static_cast<int64_t>(rois.size());
  if (p.n != r || p.h != 1 || p.w != 1 || p.c < 2) {
    throw ShapeError("classify_rois: scores must be (" + std::to_string(r) + ", K, 1, 1), got " + p.str());
  }
  if (deltas.shape() != Shape{r, 4 * p.c, 1, 1}) {
    throw ShapeError("classify_rois: deltas must be (" + std::to_string(r) + ", " + std::to_string(4 * p.c) +
                     ", 1, 1), got " + deltas.shape().str());
  }
  std::vector<Detection> out;
  for (int64_t c = 1; c < p.c; ++c) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int64_t i = 0; i < r; ++i) {
      const double score = probs.at(i, c, 0, 0);
      if (!(score > config.score_threshold)) continue;
      const BoxDelta d{deltas.at(i, 4 * c, 0, 0), deltas.at(i, 4 * c + 1, 0, 0), deltas.at(i, 4 * c + 2, 0, 0),
                       deltas.at(i, 4 * c + 3, 0, 0)};
      const auto dec = decode_boxes(std::span<const Box>(&rois[static_cast<size_t>(i)], 1),
                                    std::span<const BoxDelta>(&d, 1), image);
      if (dec.boxes.empty()) continue;
      boxes.push_back(dec.boxes.front());
      scores.push_back(score);
    }
    for (size_t k : nms(boxes, scores, config.nms_threshold)) out.push_back({boxes[k], c, scores[k]});
  }
  return out;
}

Box bbox_vote(const Detection& kept, std::span<const ScoredBox> candidates, double iou_threshold,
              double exponent) {
  double wsum = 0, x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  for (const auto& c : candidates) {
    if (iou(kept.box, c.box) < iou_threshold) continue;
    const double w = std::pow(c.score, exponent);
    wsum += w;
    x1 += w * c.box.x1;
    y1 += w * c.box.y1;
    x2 += w * c.box.x2;
    y2 += w * c.box.y2;
  }
  if (!(wsum > 0)) return kept.box;
  return {x1 / wsum, y1 / wsum, x2 / wsum, y2 / wsum};
}

std::string format_detections(std::span<const Detection> detections) {
  std::string out;
  char line[160];
  for (const auto& d : detections) {
    std::snprintf(line, sizeof line, "%lld %.4f %.4f %.4f %.4f %.4f\n", static_cast<long long>(d.class_id),
                  d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2);
    out += line;
  }
  return out;
}

std::vector<Detection> parse_detections(const std::string& text) {
  std::vector<Detection> out;
  std::istringstream is(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Detection d;
    if (!(ls >> d.class_id >> d.score >> d.box.x1 >> d.box.y1 >> d.box.x2 >> d.box.y2)) {
      throw FormatError("detections line " + std::to_string(lineno) + ": expected `class_id score x1 y1 x2 y2`");
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace pvanet
