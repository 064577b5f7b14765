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

#include "pvanet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "pvanet/blocks.hpp"
#include "pvanet/executor.hpp"
#include "pvanet/image.hpp"

namespace pvanet {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

template <typename Seq>
std::string join(const Seq& seq) {
  std::ostringstream os;
  bool first = true;
  for (const auto& x : seq) {
    if (!first) os << ",";
    os << x;
    first = false;
  }
  return os.str();
}

bool depends_on(const NetworkSpec& net, const std::string& name, const std::string& input) {
  std::set<std::string> seen;
  std::vector<std::string> stack{name};
  while (!stack.empty()) {
    const std::string n = stack.back();
    stack.pop_back();
    if (n == input) return true;
    if (!seen.insert(n).second) continue;
    if (const LayerSpec* l = net.find(n)) stack.insert(stack.end(), l->inputs.begin(), l->inputs.end());
  }
  return false;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path.string() + ": cannot open for writing");
  os << text;
  if (!os) throw FormatError(path.string() + ": write failed");
}

std::string mmac(int64_t v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << static_cast<double>(v) / 1e6 << "M";
  return os.str();
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e) ||
      dynamic_cast<const std::ios_base::failure*>(&e)) {
    return kExitIo;
  }
  return kExitValidation;
}

bool is_builtin_network(const std::string& name) {
  return name == "pvanet" || name == "pvanet-detector" || name == "mini-pvanet";
}

NetworkSpec resolve_network(const std::string& spec, int64_t height, int64_t width) {
  if (spec == "pvanet") return build_pvanet(height, width);
  if (spec == "pvanet-detector") {
    DetectorConfig c;
    c.height = height;
    c.width = width;
    return build_pvanet_detector(c);
  }
  if (spec == "mini-pvanet") return build_mini_pvanet();
  return load_spec(spec);
}

std::string config_header(const ConfigList& config) {
  std::string out;
  for (const auto& [k, v] : config) out += "# " + k + " = " + v + "\n";
  return out;
}

ConfigList resolved_config(const AnalyzeOptions& o) {
  return {{"command", "analyze"},
          {"spec", o.spec},
          {"input", std::to_string(o.height) + "x" + std::to_string(o.width)},
          {"proposals", join(o.proposals)},
          {"format", o.format == ReportFormat::kJson ? "json" : "table"}};
}

CostReport run_analyze(const AnalyzeOptions& o) {
  if (o.height <= 0 || o.width <= 0) throw std::invalid_argument("input extent must be positive");
  const NetworkSpec net = resolve_network(o.spec, o.height, o.width);
  std::map<std::string, Shape> in;
  if (!net.inputs.empty()) {
    const Shape s = net.inputs.front().shape;
    in[net.inputs.front().name] = {s.n, s.c, o.height, o.width};
  }
  CostReport report = analyze_network(net, in);
  report.config = resolved_config(o);
  report.reference = o.spec == "pvanet" || o.spec == "pvanet-detector";

  const bool has_head = std::any_of(net.layers.begin(), net.layers.end(),
                                    [](const LayerSpec& l) { return l.group == "rcnn"; });
  if (o.spec == "pvanet") {
    DetectorConfig c;
    c.height = o.height;
    c.width = o.width;
    report.breakdown = count_rpn_rcnn_macs(build_pvanet_detector(c), o.proposals);
  } else if (has_head && net.find_input("rois")) {
    report.breakdown = count_rpn_rcnn_macs(net, o.proposals);
  }
  return report;
}

std::string cmd_analyze(const AnalyzeOptions& o) { return emit_report(run_analyze(o), o.format); }

ConfigList resolved_config(const InferOptions& o) {
  std::ostringstream mean;
  mean << o.mean[0] << "," << o.mean[1] << "," << o.mean[2];
  return {{"command", "infer"},
          {"spec", o.spec},
          {"weights", o.weights.string()},
          {"input", o.input.string()},
          {"shorter_edge", std::to_string(o.shorter_edge)},
          {"pad_multiple", std::to_string(o.pad_multiple)},
          {"mean", mean.str()},
          {"pre_nms_top_n", std::to_string(o.proposal.pre_nms_top_n)},
          {"proposals", std::to_string(o.proposal.post_nms_top_n)},
          {"rpn_nms", num(o.proposal.nms_threshold)},
          {"score_threshold", num(o.classify.score_threshold)},
          {"nms", num(o.classify.nms_threshold)},
          {"voting", o.voting ? "on" : "off"},
          {"vote_iou", num(o.vote_iou)},
          {"vote_exponent", num(o.vote_exponent)},
          {"anchor_scales", join(o.anchor_scales)},
          {"anchor_ratios", join(o.anchor_ratios)},
          {"anchor_stride", num(o.anchor_stride)},
          {"threads", std::to_string(num_threads())}};
}

InferResult run_detector(const NetworkSpec& net, const WeightStore& weights, const Tensor& data,
                         const ImageSize& valid, double scale, const InferOptions& o) {
  if (auto problems = check_weights(net, weights.entries()); !problems.empty()) {
    std::string msg = "weights do not match \"" + net.name + "\":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ExecutionError(msg);
  }
  const Executor<float> exec(net, weights.entries());
  const LayerSpec* pool = nullptr;
  for (const auto& l : net.layers) {
    if (l.kind == LayerKind::kRoiPool && l.inputs.size() == 2 && l.inputs[1] == o.rois_input) pool = &l;
  }
  if (!pool) throw SpecError("network \"" + net.name + "\" has no roi_pool layer reading \"" + o.rois_input + "\"");
  const std::string feature = pool->inputs[0];

  std::vector<std::string> first = {o.rpn_scores, o.rpn_deltas, feature};
  std::vector<std::string> second = {o.cls_prob, o.bbox_pred};
  for (const auto& d : o.dump) {
    if (!net.find(d) && !net.find_input(d)) throw SpecError("cannot dump unknown layer \"" + d + "\"");
    (depends_on(net, d, o.rois_input) ? second : first).push_back(d);
  }

  InferResult r;
  r.scale = scale;
  r.image = valid;
  auto t1 = exec.forward({{o.data_input, data}}, first, BnMode::kFrozen, false);
  for (const auto& d : o.dump) {
    if (auto it = t1.values.find(d); it != t1.values.end()) r.dumps[d] = it->second;
  }

  const AnchorSet anchors = generate_anchors(o.anchor_scales, o.anchor_ratios, o.anchor_stride);
  r.proposals = propose(t1.values.at(o.rpn_scores), t1.values.at(o.rpn_deltas), anchors, valid, o.proposal);
  if (r.proposals.empty()) return r;

  const auto count = static_cast<int64_t>(r.proposals.size());
  Tensor rois(Shape{count, 4, 1, 1});
  std::vector<Box> boxes;
  for (int64_t i = 0; i < count; ++i) {
    const Box& b = r.proposals[static_cast<size_t>(i)].box;
    boxes.push_back(b);
    rois.at(i, 0, 0, 0) = static_cast<float>(b.x1);
    rois.at(i, 1, 0, 0) = static_cast<float>(b.y1);
    rois.at(i, 2, 0, 0) = static_cast<float>(b.x2);
    rois.at(i, 3, 0, 0) = static_cast<float>(b.y2);
  }
  auto t2 = exec.forward({{o.data_input, data}, {o.rois_input, rois}, {feature, t1.values.at(feature)}}, second,
                         BnMode::kFrozen, false);
  for (const auto& d : o.dump) {
    if (auto it = t2.values.find(d); it != t2.values.end()) r.dumps[d] = it->second;
  }
  const Tensor& probs = t2.values.at(o.cls_prob);
  const Tensor& deltas = t2.values.at(o.bbox_pred);
  auto dets = classify_rois(probs, deltas, boxes, valid, o.classify);

  if (o.voting) {
    for (auto& det : dets) {
      const int64_t c = det.class_id;
      std::vector<ScoredBox> cands;
      for (int64_t i = 0; i < count; ++i) {
        const double s = probs.at(i, c, 0, 0);
        if (!(s > o.classify.score_threshold)) continue;
        const BoxDelta d{deltas.at(i, 4 * c, 0, 0), deltas.at(i, 4 * c + 1, 0, 0), deltas.at(i, 4 * c + 2, 0, 0),
                         deltas.at(i, 4 * c + 3, 0, 0)};
        const auto dec = decode_boxes(std::span<const Box>(&boxes[static_cast<size_t>(i)], 1),
                                      std::span<const BoxDelta>(&d, 1), valid);
        if (!dec.boxes.empty()) cands.push_back({dec.boxes.front(), s});
      }
      det.box = bbox_vote(det, cands, o.vote_iou, o.vote_exponent);
    }
  }
  const ImageSize original{valid.height / scale, valid.width / scale};
  for (auto& det : dets) {
    det.box = clip({det.box.x1 / scale, det.box.y1 / scale, det.box.x2 / scale, det.box.y2 / scale}, original);
  }
  r.detections = std::move(dets);
  return r;
}

InferResult run_infer(const InferOptions& o) {
  const NetworkSpec net = resolve_network(o.spec);
  const WeightStore weights = WeightStore::load(o.weights);
  Tensor data;
  ImageSize valid;
  double scale = 1.0;
  const std::string ext = o.input.extension().string();
  if (ext == ".nt") {
    data = load_nt(o.input);
    if (data.shape().n != 1 || data.shape().c != 3) {
      throw ShapeError(o.input.string() + ": expected a (1, 3, H, W) tensor, got " + data.shape().str());
    }
    valid = {static_cast<double>(data.shape().h), static_cast<double>(data.shape().w)};
  } else {
    const Image img = read_ppm(o.input);
    PreparedImage p = prepare_image(img, o.shorter_edge, o.pad_multiple, o.mean);
    data = std::move(p.data);
    valid = {static_cast<double>(p.height), static_cast<double>(p.width)};
    scale = p.scale;
  }
  InferResult r = run_detector(net, weights, data, valid, scale, o);
  if (!o.dump.empty()) {
    std::filesystem::create_directories(o.dump_dir);
    for (const auto& [name, t] : r.dumps) {
      std::string file = name;
      std::replace(file.begin(), file.end(), '/', '_');
      save_nt(o.dump_dir / (file + ".nt"), t);
    }
  }
  return r;
}

std::string cmd_infer(const InferOptions& o) {
  const InferResult r = run_infer(o);
  std::string out = config_header(resolved_config(o));
  out += "# proposals_kept = " + std::to_string(r.proposals.size()) + "\n";
  out += "# detections = " + std::to_string(r.detections.size()) + "\n";
  out += "# class_id score x1 y1 x2 y2\n";
  out += format_detections(r.detections);
  return out;
}

ConfigList resolved_config(const CompressOptions& o) {
  return {{"command", "compress"},
          {"spec", o.spec},
          {"weights_in", o.weights_in.string()},
          {"weights_out", o.weights_out.string()},
          {"spec_out", o.spec_out.string()},
          {"k1", std::to_string(o.k1)},
          {"k2", std::to_string(o.k2)}};
}

std::string cmd_compress(const CompressOptions& o) {
  const NetworkSpec net = resolve_network(o.spec);
  const WeightStore weights = WeightStore::load(o.weights_in);
  if (auto problems = check_weights(net, weights.entries()); !problems.empty()) {
    std::string msg = "weights do not match \"" + net.name + "\":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ExecutionError(msg);
  }
  const CompressedNetwork c = compress_rcnn_head(net, weights, o.k1, o.k2);
  if (auto problems = check_weights(c.net, c.weights.entries()); !problems.empty()) {
    throw std::logic_error("compressed weights are inconsistent: " + problems.front());
  }

  std::ostringstream os;
  os << config_header(resolved_config(o));
  std::vector<std::string> widths;
  for (const auto& l : c.layers) {
    os << l.layer << ": " << l.in_features << "->" << l.out_features << " becomes " << l.in_features << "->"
       << l.rank << "->" << l.out_features << " (" << l.layer << "_L, " << l.layer << "_U), params "
       << l.params_before << " -> " << l.params_after << ", Frobenius error " << std::setprecision(6)
       << l.frobenius_error << " (relative " << l.relative_error << ")\n";
    widths.push_back(std::to_string(l.rank) + "/" + std::to_string(l.out_features));
  }
  std::vector<std::string> before;
  for (const auto& l : c.layers) before.push_back(std::to_string(l.out_features));
  os << "rewiring: " << join(before) << " -> " << join(widths) << "\n";
  if (net.find_input("rois")) {
    const MacBreakdown b0 = count_rpn_rcnn_macs(net, {});
    const MacBreakdown b1 = count_rpn_rcnn_macs(c.net, {});
    os << "head MAC per RoI: " << mmac(b0.per_roi) << " -> " << mmac(b1.per_roi) << " (" << std::fixed
       << std::setprecision(2) << static_cast<double>(b0.per_roi) / static_cast<double>(b1.per_roi)
       << "x reduction; " << b0.per_roi << " -> " << b1.per_roi << ")\n";
  }
  c.weights.save(o.weights_out);
  if (!o.spec_out.empty()) save_spec(c.net, o.spec_out);
  return os.str();
}

ConfigList resolved_config(const TrainToyOptions& o) {
  const auto& t = o.train;
  return {{"command", "train-toy"},
          {"network", "mini-pvanet"},
          {"samples", std::to_string(o.samples)},
          {"patch", std::to_string(o.patch)},
          {"classes", std::to_string(o.classes)},
          {"data_seed", std::to_string(o.data_seed)},
          {"init_seed", std::to_string(o.init_seed)},
          {"seed", std::to_string(t.seed)},
          {"loss", std::string(to_string(t.loss))},
          {"lr_policy", std::string(to_string(t.policy))},
          {"max_iters", std::to_string(t.max_iters)},
          {"batch_size", std::to_string(t.batch_size)},
          {"lr", num(t.plateau.initial_lr)},
          {"trace_out", o.trace_out.string()},
          {"weights_out", o.weights_out.string()}};
}

TrainToyOutput run_train_toy(const TrainToyOptions& o) {
  if (o.classes != 4) throw std::invalid_argument("the blob dataset has exactly 4 classes");
  const NetworkSpec net = build_mini_pvanet(o.classes, o.patch);
  const auto data = make_blob_dataset(o.samples, o.patch, o.data_seed);
  const WeightStore init = init_weights(net, o.init_seed);

  TrainToyOutput out;
  out.result = toy_train(net, init, data, o.train);
  out.trace_csv = trace_csv(out.result.trace, o.train);
  out.train_accuracy = out.result.diverged ? 0.0 : accuracy(net, out.result.weights, data);

  int64_t decays = 0;
  for (const auto& r : out.result.trace) {
    if (r.event != ScheduleEvent::kNone) ++decays;
  }
  std::ostringstream os;
  os << config_header(resolved_config(o));
  os << "iterations: " << out.result.trace.size() << "\n";
  if (!out.result.trace.empty()) {
    os << "final loss: " << std::setprecision(6) << out.result.trace.back().loss << "\n";
    os << "last applied lr: " << out.result.trace.back().lr << "\n";
  }
  os << "final lr: " << std::setprecision(6) << out.result.final_lr << "\n";
  os << "decay events: " << decays << " (bound " << PlateauScheduler(o.train.plateau).max_decays() << ")\n";
  os << "status: " << (out.result.diverged ? "diverged" : out.result.terminated ? "terminated" : "completed") << "\n";
  os << "train accuracy: " << std::fixed << std::setprecision(4) << out.train_accuracy << "\n";
  out.summary = os.str();

  if (!o.trace_out.empty()) write_text(o.trace_out, out.trace_csv);
  if (!o.weights_out.empty() && !out.result.diverged) out.result.weights.save(o.weights_out);
  return out;
}

}  // namespace pvanet
