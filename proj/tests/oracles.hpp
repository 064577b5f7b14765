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

// Brute-force reference implementations used only by the tests. They follow
// the textbook definitions directly and share no code with the library.

#ifndef PVANET_TESTS_ORACLES_HPP_
#define PVANET_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "pvanet/detect.hpp"
#include "pvanet/network.hpp"
#include "pvanet/sched.hpp"
#include "pvanet/tensor.hpp"

namespace pvanet::oracle {

template <typename T = float>
BasicTensor<T> random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(s);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : t.data()) x = static_cast<T>(u(rng));
  return t;
}

// Six nested loops over (n, oc, oy, ox, ic, ky, kx).
inline TensorD conv(const TensorD& x, const TensorD& w, const std::vector<double>& bias, int64_t stride,
                    int64_t pad, int64_t groups = 1) {
  const Shape s = x.shape();
  const Shape ws = w.shape();
  const int64_t oh = (s.h + 2 * pad - ws.h) / stride + 1;
  const int64_t ow = (s.w + 2 * pad - ws.w) / stride + 1;
  const int64_t icg = s.c / groups;
  const int64_t ocg = ws.n / groups;
  TensorD y(Shape{s.n, ws.n, oh, ow});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t oc = 0; oc < ws.n; ++oc)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(oc)];
          const int64_t g = oc / ocg;
          for (int64_t ic = 0; ic < icg; ++ic)
            for (int64_t ky = 0; ky < ws.h; ++ky)
              for (int64_t kx = 0; kx < ws.w; ++kx) {
                const int64_t iy = oy * stride - pad + ky;
                const int64_t ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                acc += x.at(n, g * icg + ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
          y.at(n, oc, oy, ox) = acc;
        }
  return y;
}

// Max pool, ceil-mode extent, windows clipped to the input.
inline TensorD max_pool_ceil(const TensorD& x, int64_t k, int64_t s) {
  const Shape in = x.shape();
  auto extent = [&](int64_t e) {
    int64_t o = (e - k + s - 1) / s + 1;
    if ((o - 1) * s >= e) --o;
    return o;
  };
  const int64_t oh = extent(in.h), ow = extent(in.w);
  TensorD y(Shape{in.n, in.c, oh, ow});
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < in.c; ++c)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double m = -INFINITY;
          for (int64_t y0 = oy * s; y0 < std::min(oy * s + k, in.h); ++y0)
            for (int64_t x0 = ox * s; x0 < std::min(ox * s + k, in.w); ++x0) m = std::max(m, x.at(n, c, y0, x0));
          y.at(n, c, oy, ox) = m;
        }
  return y;
}

inline TensorD fully_connected(const TensorD& x, const TensorD& w, const std::vector<double>& b) {
  const Shape s = x.shape();
  const int64_t d = s.c * s.h * s.w;
  TensorD y(Shape{s.n, w.shape().n, 1, 1});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t o = 0; o < w.shape().n; ++o) {
      double acc = b.empty() ? 0.0 : b[static_cast<size_t>(o)];
      for (int64_t i = 0; i < d; ++i) acc += x.raw()[n * d + i] * w.raw()[o * d + i];
      y.at(n, o, 0, 0) = acc;
    }
  return y;
}

// Fast R-CNN RoI max pooling by enumerating, for every feature cell, the bins
// whose [floor, ceil) range covers it.
inline TensorD roi_pool(const TensorD& f, const std::vector<Box>& rois, int64_t ph, int64_t pw, double scale) {
  const Shape fs = f.shape();
  TensorD y(Shape{static_cast<int64_t>(rois.size()), fs.c, ph, pw});
  for (size_t r = 0; r < rois.size(); ++r) {
    const int64_t x1 = std::llround(rois[r].x1 * scale), y1 = std::llround(rois[r].y1 * scale);
    const int64_t x2 = std::llround(rois[r].x2 * scale), y2 = std::llround(rois[r].y2 * scale);
    const double bh = static_cast<double>(std::max<int64_t>(y2 - y1 + 1, 1)) / static_cast<double>(ph);
    const double bw = static_cast<double>(std::max<int64_t>(x2 - x1 + 1, 1)) / static_cast<double>(pw);
    for (int64_t c = 0; c < fs.c; ++c)
      for (int64_t i = 0; i < ph; ++i)
        for (int64_t j = 0; j < pw; ++j) {
          bool any = false;
          double m = 0;
          for (int64_t yy = 0; yy < fs.h; ++yy)
            for (int64_t xx = 0; xx < fs.w; ++xx) {
              const bool in_y = yy >= y1 + static_cast<int64_t>(std::floor(static_cast<double>(i) * bh)) &&
                                yy < y1 + static_cast<int64_t>(std::ceil(static_cast<double>(i + 1) * bh));
              const bool in_x = xx >= x1 + static_cast<int64_t>(std::floor(static_cast<double>(j) * bw)) &&
                                xx < x1 + static_cast<int64_t>(std::ceil(static_cast<double>(j + 1) * bw));
              if (!in_y || !in_x) continue;
              const double v = f.at(0, c, yy, xx);
              if (!any || v > m) m = v;
              any = true;
            }
          y.at(static_cast<int64_t>(r), c, i, j) = any ? m : 0.0;
        }
  }
  return y;
}

inline double box_iou(const Box& a, const Box& b) {
  const double w = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double h = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double i = w * h;
  const double u = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - i;
  return u > 0 ? i / u : 0.0;
}

// Repeatedly take the best surviving box (lowest index on ties) and delete
// everything overlapping it by more than the threshold.
inline std::vector<size_t> nms(const std::vector<Box>& boxes, const std::vector<double>& scores, double thr) {
  std::vector<bool> alive(boxes.size(), true);
  std::vector<size_t> keep;
  for (;;) {
    size_t best = boxes.size();
    for (size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && (best == boxes.size() || scores[i] > scores[best])) best = i;
    }
    if (best == boxes.size()) return keep;
    keep.push_back(best);
    alive[best] = false;
    for (size_t j = 0; j < boxes.size(); ++j) {
      if (alive[j] && box_iou(boxes[best], boxes[j]) > thr) alive[j] = false;
    }
  }
}

// Receptive-field distribution by enumerating every input-to-layer path.
// Each path's size is 1 + sum_i (k_i - 1) * prod_{j<i} s_j; its weight is the
// product of the channel shares taken at concatenations (1/n at sums).
inline std::map<int64_t, double> rf_paths(const NetworkSpec& net, const std::string& layer,
                                          const std::map<std::string, int64_t>& channels) {
  struct Op {
    int64_t k, s;
    bool up;
  };
  struct Path {
    std::vector<Op> ops;  // input to output order
    double w;
  };
  std::function<std::vector<Path>(const std::string&)> walk = [&](const std::string& name) -> std::vector<Path> {
    const LayerSpec* l = net.find(name);
    if (!l) return {Path{{}, 1.0}};
    std::vector<Path> out;
    if (l->kind == LayerKind::kConcat || l->kind == LayerKind::kEltwiseAdd) {
      int64_t total = 0;
      for (const auto& in : l->inputs) total += channels.at(in);
      for (const auto& in : l->inputs) {
        const double share = l->kind == LayerKind::kConcat
                                 ? static_cast<double>(channels.at(in)) / static_cast<double>(total)
                                 : 1.0 / static_cast<double>(l->inputs.size());
        for (auto p : walk(in)) {
          p.w *= share;
          out.push_back(p);
        }
      }
      return out;
    }
    out = walk(l->inputs[0]);
    for (auto& p : out) {
      if (l->kind == LayerKind::kConv) {
        p.ops.push_back({l->get<ConvSpec>().kernel_h, l->get<ConvSpec>().stride, false});
      } else if (l->kind == LayerKind::kMaxPool) {
        p.ops.push_back({l->get<PoolSpec>().kernel, l->get<PoolSpec>().stride, false});
      } else if (l->kind == LayerKind::kDeconvBilinear) {
        const auto& d = l->get<DeconvSpec>();
        p.ops.push_back({(d.kernel + d.stride - 1) / d.stride, d.stride, true});
      }
    }
    return out;
  };
  std::map<int64_t, double> dist;
  for (const auto& p : walk(layer)) {
    int64_t size = 1, jump = 1;
    for (const auto& op : p.ops) {
      size += (op.k - 1) * jump;
      jump = op.up ? jump / op.s : jump * op.s;
    }
    dist[size] += p.w;
  }
  return dist;
}

// Hand-rolled plateau rule: bias-corrected EMA, warmup that only tracks the
// best average, relative improvement test, reset on decay.
inline std::vector<ScheduleEvent> plateau_events(const std::vector<double>& losses, const PlateauConfig& c) {
  std::vector<ScheduleEvent> out;
  double m = 0, best = INFINITY, lr = c.initial_lr;
  int64_t stale = 0;
  for (size_t i = 0; i < losses.size(); ++i) {
    const double t = static_cast<double>(i + 1);
    m = c.ema_beta * m + (1 - c.ema_beta) * losses[i];
    const double ema = m / (1 - std::pow(c.ema_beta, t));
    if (static_cast<int64_t>(i) < c.warmup) {
      best = std::min(best, ema);
      out.push_back(ScheduleEvent::kNone);
      continue;
    }
    if (ema < best * (1 - c.improvement_threshold)) {
      best = ema;
      stale = 0;
    } else {
      ++stale;
    }
    ScheduleEvent e = ScheduleEvent::kNone;
    if (stale == c.window) {
      lr *= c.decay_factor;
      stale = 0;
      best = ema;
      e = lr < c.min_lr ? ScheduleEvent::kTerminated : ScheduleEvent::kDecayed;
    }
    out.push_back(e);
    if (e == ScheduleEvent::kTerminated) break;
  }
  return out;
}

}  // namespace pvanet::oracle

#endif  // PVANET_TESTS_ORACLES_HPP_
