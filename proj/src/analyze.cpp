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

#include "pvanet/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pvanet/blocks.hpp"

namespace pvanet {

using nlohmann::json;

namespace {

[[noreturn]] void layer_error(const LayerSpec& l, const std::string& msg) {
  throw ShapeError("layer \"" + l.name + "\" (" + std::string(to_string(l.kind)) + "): " + msg);
}

void require_valid(const NetworkSpec& net) {
  auto diags = validate(net);
  if (diags.empty()) return;
  std::ostringstream os;
  os << "network \"" << net.name << "\" does not validate:";
  for (const auto& d : diags) os << "\n  " << d.layer << ": " << d.message;
  throw SpecError(os.str());
}

Shape layer_output_shape(const LayerSpec& l, const std::vector<Shape>& in) {
  try {
    switch (l.kind) {
      case LayerKind::kConv:
        return conv_output_shape(in[0], l.get<ConvSpec>());
      case LayerKind::kMaxPool:
        return pool_output_shape(in[0], l.get<PoolSpec>());
      case LayerKind::kDeconvBilinear:
        return deconv_output_shape(in[0], l.get<DeconvSpec>());
      case LayerKind::kRelu:
      case LayerKind::kNegate:
      case LayerKind::kSoftmax:
        return in[0];
      case LayerKind::kBatchNorm:
      case LayerKind::kScaleShift: {
        const int64_t c = l.kind == LayerKind::kBatchNorm ? l.get<BatchNormSpec>().channels
                                                          : l.get<ScaleShiftSpec>().channels;
        if (in[0].c != c) {
          layer_error(l, "channel (C) axis is " + std::to_string(in[0].c) + ", expected " + std::to_string(c));
        }
        return in[0];
      }
      case LayerKind::kConcat: {
        Shape out = in[0];
        for (size_t i = 1; i < in.size(); ++i) {
          if (in[i].n != out.n || in[i].h != out.h || in[i].w != out.w) {
            layer_error(l, "input " + std::to_string(i) + " is " + in[i].str() +
                               ", which does not match " + in[0].str() + " outside the channel (C) axis");
          }
          out.c += in[i].c;
        }
        return out;
      }
      case LayerKind::kEltwiseAdd:
        for (size_t i = 1; i < in.size(); ++i) {
          if (in[i] != in[0]) {
            layer_error(l, "operand shapes differ: " + in[0].str() + " vs " + in[i].str());
          }
        }
        return in[0];
      case LayerKind::kFullyConnected: {
        const auto& s = l.get<FcSpec>();
        const int64_t d = in[0].c * in[0].h * in[0].w;
        if (d != s.in_features) {
          layer_error(l, "flattened input has " + std::to_string(d) + " features (" + in[0].str() +
                             "), expected " + std::to_string(s.in_features));
        }
        return {in[0].n, s.out_features, 1, 1};
      }
      case LayerKind::kRoiPool: {
        const auto& s = l.get<RoiPoolSpec>();
        if (in[1].c != 4) layer_error(l, "rois must be (R, 4, 1, 1), got " + in[1].str());
        return {in[1].n, in[0].c, s.pooled_h, s.pooled_w};
      }
      case LayerKind::kSliceChannels: {
        const auto& s = l.get<SliceSpec>();
        if (s.begin < 0 || s.end > in[0].c || s.begin >= s.end) {
          layer_error(l, "slice [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                             ") is outside the channel (C) axis of " + in[0].str());
        }
        return {in[0].n, s.end - s.begin, in[0].h, in[0].w};
      }
    }
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    if (what.rfind("layer \"", 0) == 0) throw;
    layer_error(l, what);
  }
  layer_error(l, "unknown layer kind");
}

// Receptive field bookkeeping: (size, jump) -> channel fraction.
using RfKey = std::pair<int64_t, int64_t>;
using RfMap = std::map<RfKey, double>;

RfDistribution collapse(const RfMap& m) {
  std::map<int64_t, double> by_size;
  for (const auto& [key, f] : m) by_size[key.first] += f;
  RfDistribution out;
  for (const auto& [size, f] : by_size) out.push_back({size, f});
  return out;
}

RfMap shift(const RfMap& in, int64_t kernel, int64_t stride) {
  RfMap out;
  for (const auto& [key, f] : in) {
    out[{key.first + (kernel - 1) * key.second, key.second * stride}] += f;
  }
  return out;
}

// Returns nullopt for layers downstream of a non-spatial layer.
std::map<std::string, std::optional<RfMap>> propagate_rf(const NetworkSpec& net,
                                                         const std::map<std::string, int64_t>& channels) {
  std::map<std::string, std::optional<RfMap>> rf;
  for (const auto& in : net.inputs) rf[in.name] = RfMap{{{1, 1}, 1.0}};
  for (size_t i : topological_order(net)) {
    const LayerSpec& l = net.layers[i];
    std::vector<const RfMap*> src;
    bool defined = true;
    for (const auto& s : l.inputs) {
      const auto& r = rf.at(s);
      if (!r) {
        defined = false;
        break;
      }
      src.push_back(&*r);
    }
    if (!defined) {
      rf[l.name] = std::nullopt;
      continue;
    }
    switch (l.kind) {
      case LayerKind::kConv: {
        const auto& s = l.get<ConvSpec>();
        if (s.kernel_h != s.kernel_w) {
          rf[l.name] = shift(*src[0], std::max(s.kernel_h, s.kernel_w), s.stride);
        } else {
          rf[l.name] = shift(*src[0], s.kernel_h, s.stride);
        }
        break;
      }
      case LayerKind::kMaxPool: {
        const auto& s = l.get<PoolSpec>();
        rf[l.name] = shift(*src[0], s.kernel, s.stride);
        break;
      }
      case LayerKind::kDeconvBilinear: {
        const auto& s = l.get<DeconvSpec>();
        const int64_t taps = (s.kernel + s.stride - 1) / s.stride;
        RfMap out;
        for (const auto& [key, f] : *src[0]) {
          if (key.second % s.stride != 0) {
            rf[l.name] = std::nullopt;
            out.clear();
            break;
          }
          out[{key.first + (taps - 1) * key.second, key.second / s.stride}] += f;
        }
        if (!out.empty()) rf[l.name] = std::move(out);
        break;
      }
      case LayerKind::kConcat: {
        int64_t total = 0;
        for (const auto& s : l.inputs) total += channels.at(s);
        RfMap out;
        for (size_t k = 0; k < src.size(); ++k) {
          const double w = static_cast<double>(channels.at(l.inputs[k])) / static_cast<double>(total);
          for (const auto& [key, f] : *src[k]) out[key] += w * f;
        }
        rf[l.name] = std::move(out);
        break;
      }
      case LayerKind::kEltwiseAdd: {
        RfMap out;
        const double w = 1.0 / static_cast<double>(src.size());
        for (const auto* m : src) {
          for (const auto& [key, f] : *m) out[key] += w * f;
        }
        rf[l.name] = std::move(out);
        break;
      }
      case LayerKind::kFullyConnected:
      case LayerKind::kRoiPool:
        rf[l.name] = std::nullopt;
        break;
      default:
        rf[l.name] = *src[0];
        break;
    }
  }
  return rf;
}

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

Shape shape_from(const json& j) {
  return {j.at(0).get<int64_t>(), j.at(1).get<int64_t>(), j.at(2).get<int64_t>(), j.at(3).get<int64_t>()};
}

std::string fixed(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

std::string display_cell(int64_t value, double unit, const char* suffix) {
  const double scaled = static_cast<double>(value) / unit;
  const int d = display_decimals(scaled);
  return fixed(round_to(scaled, d), d) + suffix;
}

std::string delta_cell(double ours, const std::optional<double>& ref, int decimals) {
  if (!ref) return "";
  const double d = round_to(ours - *ref, decimals);
  if (d == 0.0) return "0";
  return (d > 0 ? "+" : "") + fixed(d, decimals);
}

bool reference_applies(const CostReport& r) {
  const auto& ref = pvanet_reference();
  return r.reference && r.input.h == ref.height && r.input.w == ref.width;
}

}  // namespace

std::map<std::string, Shape> infer_shapes(const NetworkSpec& net,
                                          const std::map<std::string, Shape>& input_shapes) {
  require_valid(net);
  std::map<std::string, Shape> shapes;
  for (const auto& in : net.inputs) {
    auto it = input_shapes.find(in.name);
    shapes[in.name] = it != input_shapes.end() ? it->second : in.shape;
  }
  for (const auto& [name, s] : input_shapes) {
    if (!net.find_input(name)) throw SpecError("\"" + name + "\" is not an input of \"" + net.name + "\"");
  }
  for (size_t i : topological_order(net)) {
    const LayerSpec& l = net.layers[i];
    std::vector<Shape> in;
    for (const auto& s : l.inputs) in.push_back(shapes.at(s));
    shapes[l.name] = layer_output_shape(l, in);
  }
  return shapes;
}

std::map<std::string, Shape> infer_shapes(const NetworkSpec& net, const Shape& input_shape) {
  if (net.inputs.empty()) throw SpecError("network \"" + net.name + "\" has no inputs");
  return infer_shapes(net, {{net.inputs.front().name, input_shape}});
}

int64_t layer_weight_params(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::kConv:
      return l.get<ConvSpec>().weight_count();
    case LayerKind::kDeconvBilinear:
      return l.get<DeconvSpec>().weight_count();
    case LayerKind::kFullyConnected:
      return l.get<FcSpec>().weight_count();
    default:
      return 0;
  }
}

int64_t layer_macs(const LayerSpec& l, const Shape& out) {
  switch (l.kind) {
    case LayerKind::kConv:
    case LayerKind::kDeconvBilinear:
      return layer_weight_params(l) * out.n * out.h * out.w;
    case LayerKind::kFullyConnected:
      return layer_weight_params(l) * out.n;
    default:
      return 0;
  }
}

RfDistribution receptive_field_distribution(const NetworkSpec& net, const std::string& layer) {
  require_valid(net);
  const LayerSpec* l = net.find(layer);
  if (!l && !net.find_input(layer)) throw AnalysisError("unknown layer \"" + layer + "\"");
  if (l && (l->kind == LayerKind::kFullyConnected || l->kind == LayerKind::kRoiPool)) {
    throw AnalysisError("layer \"" + layer + "\" (" + std::string(to_string(l->kind)) +
                        ") has no spatial receptive field");
  }
  auto rf = propagate_rf(net, infer_channels(net));
  const auto& r = rf.at(layer);
  if (!r) {
    throw AnalysisError("layer \"" + layer + "\" depends on a layer without spatial semantics");
  }
  return collapse(*r);
}

std::map<std::string, RfDistribution> receptive_fields(const NetworkSpec& net) {
  require_valid(net);
  std::map<std::string, RfDistribution> out;
  for (const auto& [name, r] : propagate_rf(net, infer_channels(net))) {
    if (r) out[name] = collapse(*r);
  }
  return out;
}

std::map<std::string, int64_t> count_params(const NetworkSpec& net) {
  std::map<std::string, int64_t> out;
  for (const auto& l : net.layers) out[l.row()] += layer_weight_params(l);
  return out;
}

std::map<std::string, int64_t> count_macs(const NetworkSpec& net, const std::map<std::string, Shape>& shapes) {
  std::map<std::string, int64_t> out;
  for (const auto& l : net.layers) out[l.row()] += layer_macs(l, shapes.at(l.name));
  return out;
}

CostReport analyze_network(const NetworkSpec& net, const std::map<std::string, Shape>& input_shapes,
                           bool with_rf) {
  const auto shapes = infer_shapes(net, input_shapes);
  CostReport report;
  report.network = net.name;
  if (!net.inputs.empty()) report.input = shapes.at(net.inputs.front().name);

  std::map<std::string, RfDistribution> rf;
  if (with_rf) rf = receptive_fields(net);

  std::map<std::string, size_t> row_index;
  for (const auto& l : net.layers) {
    const std::string& row = l.row();
    auto [it, fresh] = row_index.emplace(row, report.rows.size());
    if (fresh) report.rows.push_back({row, {}, 0, 0, {}, 0});
    RowCost& r = report.rows[it->second];
    r.params += layer_weight_params(l);
    r.macs += layer_macs(l, shapes.at(l.name));
  }
  // A row reports the shape of the layer carrying its name, falling back to
  // its last layer.
  for (auto& r : report.rows) {
    std::string src;
    for (const auto& l : net.layers) {
      if (l.row() == r.name) src = l.name;
    }
    if (net.find(r.name)) src = r.name;
    r.output = shapes.at(src);
    if (auto it = rf.find(src); it != rf.end()) {
      r.rf = it->second;
      r.max_rf = r.rf.empty() ? 0 : r.rf.back().size;
    }
    report.total_params += r.params;
    report.total_macs += r.macs;
  }
  return report;
}

MacBreakdown count_rpn_rcnn_macs(const NetworkSpec& detector, const std::vector<int64_t>& proposals) {
  require_valid(detector);
  std::map<std::string, Shape> one_roi;
  for (const auto& in : detector.inputs) {
    if (in.name == "rois") one_roi[in.name] = {1, in.shape.c, in.shape.h, in.shape.w};
  }
  if (one_roi.empty()) throw AnalysisError("detector \"" + detector.name + "\" has no \"rois\" input");
  const auto shapes = infer_shapes(detector, one_roi);

  MacBreakdown b;
  bool have_head = false;
  for (const auto& l : detector.layers) {
    const int64_t m = layer_macs(l, shapes.at(l.name));
    if (l.group == "rpn") {
      b.rpn += m;
    } else if (l.group == "rcnn") {
      have_head = true;
      b.per_roi += m;
      if (l.kind == LayerKind::kFullyConnected && l.name != "rcnn_out") b.per_roi_hidden += m;
    } else {
      b.shared_cnn += m;
    }
  }
  if (!have_head) throw AnalysisError("detector \"" + detector.name + "\" has no layers grouped \"rcnn\"");
  for (int64_t p : proposals) {
    if (p < 0) throw std::invalid_argument("proposal count must be non-negative");
    b.classifier.push_back({p, b.per_roi * p, b.per_roi_hidden * p});
  }

  const auto& ref = pvanet_reference();
  const int d = ref.breakdown_decimals;
  const bool published = round_to(static_cast<double>(b.shared_cnn) / 1e9, d) == ref.shared_cnn_gmac &&
                         round_to(static_cast<double>(b.rpn) / 1e9, d) == ref.rpn_gmac;
  for (const auto& c : b.classifier) {
    if (!published || c.proposals != ref.breakdown_proposals) continue;
    const double full = round_to(static_cast<double>(c.macs) / 1e9, d);
    const double hidden = round_to(static_cast<double>(c.hidden_macs) / 1e9, d);
    if (full != ref.classifier_gmac && hidden != ref.classifier_gmac) {
      std::ostringstream os;
      os << "published classifier cost " << fixed(ref.classifier_gmac, d) << " GMAC is stated for "
         << ref.breakdown_proposals << " proposals, but " << c.proposals << " proposals give "
         << fixed(full, d) << " GMAC (" << fixed(hidden, d) << " for hidden layers only)";
      for (int64_t p : {int64_t{300}}) {
        const double alt = round_to(static_cast<double>(b.per_roi_hidden * p) / 1e9, d);
        if (alt == ref.classifier_gmac) {
          os << "; " << fixed(ref.classifier_gmac, d) << " matches " << p
             << " proposals with hidden layers only";
        }
      }
      b.notes.push_back(os.str());
    }
  }
  return b;
}

MacBreakdown count_rpn_rcnn_macs(int64_t proposals) {
  return count_rpn_rcnn_macs(build_pvanet_detector(), {proposals});
}

double round_to(double value, int decimals) {
  const double p = std::pow(10.0, decimals);
  return std::round(value * p) / p;
}

int display_decimals(double scaled) { return std::fabs(scaled) < 10.0 ? 1 : 0; }

double display_value(int64_t value, double unit, std::optional<int> decimals) {
  const double scaled = static_cast<double>(value) / unit;
  return round_to(scaled, decimals.value_or(display_decimals(scaled)));
}

double display_total_params_k(const CostReport& report) {
  double sum = 0;
  for (const auto& r : report.rows) sum += display_value(r.params, 1e3);
  return round_to(sum, 1);
}

double display_total_macs_m(const CostReport& report) {
  double sum = 0;
  for (const auto& r : report.rows) sum += display_value(r.macs, 1e6);
  return round_to(sum, 1);
}

std::string emit_report(const CostReport& report, ReportFormat format) {
  const bool ref_on = reference_applies(report);
  const auto& ref = pvanet_reference();

  if (format == ReportFormat::kJson) {
    json j;
    j["format"] = "pvanet-cost-report";
    j["version"] = 1;
    j["network"] = report.network;
    j["input"] = shape_json(report.input);
    json cfg = json::object();
    for (const auto& [k, v] : report.config) cfg[k] = v;
    j["config"] = cfg;
    j["reference"] = report.reference;
    json rows = json::array();
    for (const auto& r : report.rows) {
      json row{{"name", r.name}, {"output", shape_json(r.output)}, {"params", r.params}, {"macs", r.macs}};
      json rf = json::array();
      for (const auto& a : r.rf) rf.push_back(json::array({a.size, a.fraction}));
      row["rf"] = rf;
      row["max_rf"] = r.max_rf;
      if (ref_on) {
        if (const auto* rr = ref.find(r.name); rr && rr->params_k) {
          row["reference_params_k"] = *rr->params_k;
          row["reference_macs_m"] = *rr->macs_m;
        }
      }
      rows.push_back(row);
    }
    j["rows"] = rows;
    j["totals"] = {{"params", report.total_params},
                   {"macs", report.total_macs},
                   {"display_params_k", display_total_params_k(report)},
                   {"display_macs_m", display_total_macs_m(report)}};
    if (report.breakdown) {
      const auto& b = *report.breakdown;
      json cls = json::array();
      for (const auto& c : b.classifier) {
        cls.push_back({{"proposals", c.proposals}, {"macs", c.macs}, {"hidden_macs", c.hidden_macs}});
      }
      j["breakdown"] = {{"shared_cnn", b.shared_cnn}, {"rpn", b.rpn},           {"per_roi", b.per_roi},
                        {"per_roi_hidden", b.per_roi_hidden}, {"classifier", cls}, {"notes", b.notes}};
    }
    return j.dump(2) + "\n";
  }

  std::ostringstream os;
  for (const auto& [k, v] : report.config) os << "# " << k << " = " << v << "\n";
  os << "# network " << report.network << ", input " << report.input.str() << "\n";
  os << std::left << std::setw(12) << "Name" << std::right << std::setw(14) << "Output size" << std::setw(10)
     << "#params" << std::setw(10) << "MAC";
  if (ref_on) os << std::setw(9) << "d#params" << std::setw(8) << "dMAC";
  os << "\n";
  for (const auto& r : report.rows) {
    os << std::left << std::setw(12) << r.name << std::right << std::setw(14) << r.output.hwc();
    const bool costed = r.params > 0 || r.macs > 0;
    os << std::setw(10) << (costed ? display_cell(r.params, 1e3, "K") : "")
       << std::setw(10) << (costed ? display_cell(r.macs, 1e6, "M") : "");
    if (ref_on) {
      const auto* rr = ref.find(r.name);
      std::string dp, dm;
      if (rr && rr->params_k) {
        dp = delta_cell(display_value(r.params, 1e3), rr->params_k, rr->params_decimals);
        dm = delta_cell(display_value(r.macs, 1e6), rr->macs_m, rr->macs_decimals);
      }
      os << std::setw(9) << dp << std::setw(8) << dm;
    }
    os << "\n";
  }
  const double tp = display_total_params_k(report);
  const double tm = display_total_macs_m(report);
  os << std::left << std::setw(12) << "Total" << std::right << std::setw(14) << ""
     << std::setw(10) << fixed(tp, 0) + "K" << std::setw(10) << fixed(tm, 0) + "M";
  if (ref_on) {
    os << std::setw(9) << delta_cell(tp, ref.total_params_k, 0) << std::setw(8)
       << delta_cell(tm, ref.total_macs_m, 0);
  }
  os << "\n";
  os << "Total (row cells summed): " << fixed(tp, 0) << "K / " << fixed(tm, 0) << "M\n";
  os << "Total (exact): " << report.total_params << " params / " << report.total_macs << " MAC\n";

  if (report.breakdown) {
    const auto& b = *report.breakdown;
    auto g = [](int64_t v) { return fixed(static_cast<double>(v) / 1e9, 2) + " GMAC"; };
    os << "\nMAC breakdown\n";
    os << "  shared CNN: " << g(b.shared_cnn) << "\n";
    os << "  RPN:        " << g(b.rpn) << "\n";
    os << "  classifier per RoI: " << b.per_roi << " MAC (" << b.per_roi_hidden << " in hidden layers)\n";
    for (const auto& c : b.classifier) {
      os << "  classifier @" << c.proposals << " proposals: " << g(c.macs) << " (hidden layers "
         << g(c.hidden_macs) << ")\n";
      os << "  total @" << c.proposals << " proposals: " << g(b.shared_cnn + b.rpn + c.macs) << "\n";
    }
    for (const auto& n : b.notes) os << "  note: " << n << "\n";
  }
  return os.str();
}

CostReport report_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("cost report: ") + e.what());
  }
  try {
    if (j.at("format") != "pvanet-cost-report") throw FormatError("cost report: unexpected format tag");
    CostReport r;
    r.network = j.at("network").get<std::string>();
    r.input = shape_from(j.at("input"));
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    r.reference = j.at("reference").get<bool>();
    for (const auto& row : j.at("rows")) {
      RowCost c;
      c.name = row.at("name").get<std::string>();
      c.output = shape_from(row.at("output"));
      c.params = row.at("params").get<int64_t>();
      c.macs = row.at("macs").get<int64_t>();
      for (const auto& a : row.at("rf")) c.rf.push_back({a.at(0).get<int64_t>(), a.at(1).get<double>()});
      c.max_rf = row.at("max_rf").get<int64_t>();
      r.rows.push_back(std::move(c));
    }
    r.total_params = j.at("totals").at("params").get<int64_t>();
    r.total_macs = j.at("totals").at("macs").get<int64_t>();
    if (j.contains("breakdown")) {
      const auto& jb = j.at("breakdown");
      MacBreakdown b;
      b.shared_cnn = jb.at("shared_cnn").get<int64_t>();
      b.rpn = jb.at("rpn").get<int64_t>();
      b.per_roi = jb.at("per_roi").get<int64_t>();
      b.per_roi_hidden = jb.at("per_roi_hidden").get<int64_t>();
      for (const auto& c : jb.at("classifier")) {
        b.classifier.push_back({c.at("proposals").get<int64_t>(), c.at("macs").get<int64_t>(),
                                c.at("hidden_macs").get<int64_t>()});
      }
      b.notes = jb.at("notes").get<std::vector<std::string>>();
      r.breakdown = std::move(b);
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("cost report: ") + e.what());
  }
}

}  // namespace pvanet
