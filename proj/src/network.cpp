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

#include "pvanet/network.hpp"

#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace pvanet {

namespace {

struct KindName {
  LayerKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::kConv, "conv"},
    {LayerKind::kMaxPool, "max_pool"},
    {LayerKind::kDeconvBilinear, "deconv_bilinear"},
    {LayerKind::kRelu, "relu"},
    {LayerKind::kNegate, "negate"},
    {LayerKind::kConcat, "concat"},
    {LayerKind::kScaleShift, "scale_shift"},
    {LayerKind::kBatchNorm, "batchnorm"},
    {LayerKind::kFullyConnected, "fully_connected"},
    {LayerKind::kRoiPool, "roi_pool"},
    {LayerKind::kSoftmax, "softmax"},
    {LayerKind::kEltwiseAdd, "eltwise_add"},
    {LayerKind::kSliceChannels, "slice_channels"},
};

// Expected number of inputs; -1 means "two or more".
int arity(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConcat:
    case LayerKind::kEltwiseAdd:
      return -1;
    case LayerKind::kRoiPool:
      return 2;
    default:
      return 1;
  }
}

bool params_match_kind(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::kConv: return std::holds_alternative<ConvSpec>(l.params);
    case LayerKind::kMaxPool: return std::holds_alternative<PoolSpec>(l.params);
    case LayerKind::kDeconvBilinear: return std::holds_alternative<DeconvSpec>(l.params);
    case LayerKind::kFullyConnected: return std::holds_alternative<FcSpec>(l.params);
    case LayerKind::kRoiPool: return std::holds_alternative<RoiPoolSpec>(l.params);
    case LayerKind::kBatchNorm: return std::holds_alternative<BatchNormSpec>(l.params);
    case LayerKind::kScaleShift: return std::holds_alternative<ScaleShiftSpec>(l.params);
    case LayerKind::kSliceChannels: return std::holds_alternative<SliceSpec>(l.params);
    default: return std::holds_alternative<std::monostate>(l.params);
  }
}

// Output channels of one layer given its operands' channels; empty string on
// success, else the reason.
std::string layer_channels(const LayerSpec& l, const std::vector<int64_t>& in, int64_t& out) {
  auto mismatch = [&](int64_t got, int64_t want) {
    return "input channel count " + std::to_string(got) + " does not match expected " +
           std::to_string(want);
  };
  switch (l.kind) {
    case LayerKind::kConv: {
      const auto& s = l.get<ConvSpec>();
      try {
        s.check();
      } catch (const ShapeError& e) {
        return e.what();
      }
      if (in[0] != s.in_channels) return mismatch(in[0], s.in_channels);
      out = s.out_channels;
      return {};
    }
    case LayerKind::kDeconvBilinear: {
      const auto& s = l.get<DeconvSpec>();
      if (in[0] != s.channels) return mismatch(in[0], s.channels);
      out = s.channels;
      return {};
    }
    case LayerKind::kBatchNorm: {
      const auto& s = l.get<BatchNormSpec>();
      if (in[0] != s.channels) return mismatch(in[0], s.channels);
      out = s.channels;
      return {};
    }
    case LayerKind::kScaleShift: {
      const auto& s = l.get<ScaleShiftSpec>();
      if (in[0] != s.channels) return mismatch(in[0], s.channels);
      out = s.channels;
      return {};
    }
    case LayerKind::kFullyConnected:
      out = l.get<FcSpec>().out_features;
      return {};
    case LayerKind::kRoiPool:
      if (in[1] != 4) return "RoI input must carry 4 coordinates per box, got " + std::to_string(in[1]);
      out = in[0];
      return {};
    case LayerKind::kConcat:
      out = 0;
      for (int64_t c : in) out += c;
      return {};
    case LayerKind::kEltwiseAdd:
      for (int64_t c : in) {
        if (c != in[0]) return "eltwise_add operands disagree on channels: " + mismatch(c, in[0]);
      }
      out = in[0];
      return {};
    case LayerKind::kSliceChannels: {
      const auto& s = l.get<SliceSpec>();
      if (s.begin < 0 || s.end > in[0] || s.begin >= s.end) {
        return "slice [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
               ") outside " + std::to_string(in[0]) + " channels";
      }
      out = s.end - s.begin;
      return {};
    }
    default:
      out = in[0];
      return {};
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& k : kKindNames) {
    if (k.name == name) return k.kind;
  }
  throw SpecError("unknown layer kind \"" + std::string(name) + "\"");
}

const LayerSpec* NetworkSpec::find(std::string_view layer) const {
  for (const auto& l : layers) {
    if (l.name == layer) return &l;
  }
  return nullptr;
}

const NetworkInput* NetworkSpec::find_input(std::string_view input) const {
  for (const auto& i : inputs) {
    if (i.name == input) return &i;
  }
  return nullptr;
}

void NetworkSpec::append(std::vector<LayerSpec> more) {
  for (auto& l : more) layers.push_back(std::move(l));
}

std::vector<size_t> topological_order(const NetworkSpec& net) {
  std::unordered_map<std::string, size_t> index;
  for (size_t i = 0; i < net.layers.size(); ++i) index.emplace(net.layers[i].name, i);
  std::vector<int> pending(net.layers.size(), 0);
  std::vector<std::vector<size_t>> consumers(net.layers.size());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    for (const auto& in : net.layers[i].inputs) {
      if (auto it = index.find(in); it != index.end()) {
        ++pending[i];
        consumers[it->second].push_back(i);
      } else if (net.find_input(in) == nullptr) {
        throw SpecError("layer \"" + net.layers[i].name + "\": unknown input \"" + in + "\"");
      }
    }
  }
  // Ready layers are taken in declaration order so the result is stable.
  std::priority_queue<size_t, std::vector<size_t>, std::greater<>> ready;
  for (size_t i = 0; i < pending.size(); ++i) {
    if (pending[i] == 0) ready.push(i);
  }
  std::vector<size_t> order;
  order.reserve(net.layers.size());
  while (!ready.empty()) {
    const size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    for (size_t c : consumers[i]) {
      if (--pending[c] == 0) ready.push(c);
    }
  }
  if (order.size() != net.layers.size()) {
    for (size_t i = 0; i < pending.size(); ++i) {
      if (pending[i] > 0) throw SpecError("layer \"" + net.layers[i].name + "\": part of a cycle");
    }
  }
  return order;
}

std::map<std::string, int64_t> infer_channels(const NetworkSpec& net) {
  std::map<std::string, int64_t> channels;
  for (const auto& in : net.inputs) channels[in.name] = in.shape.c;
  for (size_t i : topological_order(net)) {
    const auto& l = net.layers[i];
    std::vector<int64_t> in;
    for (const auto& src : l.inputs) in.push_back(channels.at(src));
    int64_t out = 0;
    if (auto err = layer_channels(l, in, out); !err.empty()) {
      throw SpecError("layer \"" + l.name + "\": " + err);
    }
    channels[l.name] = out;
  }
  return channels;
}

std::vector<Diagnostic> validate(const NetworkSpec& net) {
  std::vector<Diagnostic> diags;
  std::set<std::string> names;
  for (const auto& in : net.inputs) {
    if (!names.insert(in.name).second) diags.push_back({in.name, "duplicate name"});
  }
  for (const auto& l : net.layers) {
    if (l.name.empty()) diags.push_back({l.name, "empty layer name"});
    if (!names.insert(l.name).second) diags.push_back({l.name, "duplicate name"});
    if (!params_match_kind(l)) {
      diags.push_back({l.name, "parameters do not match kind " + std::string(to_string(l.kind))});
    }
    const int want = arity(l.kind);
    const auto got = static_cast<int>(l.inputs.size());
    if ((want > 0 && got != want) || (want < 0 && got < 2)) {
      diags.push_back({l.name, "expects " + (want > 0 ? std::to_string(want) : std::string("at least 2")) +
                                   " inputs, has " + std::to_string(got)});
    }
    for (const auto& src : l.inputs) {
      if (src == l.name) diags.push_back({l.name, "consumes itself (cycle)"});
    }
  }
  for (const auto& l : net.layers) {
    for (const auto& src : l.inputs) {
      if (src != l.name && !names.contains(src)) {
        diags.push_back({l.name, "unknown input \"" + src + "\""});
      }
    }
  }
  for (const auto& out : net.outputs) {
    if (net.find(out) == nullptr && net.find_input(out) == nullptr) {
      diags.push_back({out, "declared output is not produced"});
    }
  }
  if (!diags.empty()) return diags;

  std::vector<size_t> order;
  try {
    order = topological_order(net);
  } catch (const SpecError& e) {
    diags.push_back({"", e.what()});
    return diags;
  }
  std::map<std::string, int64_t> channels;
  for (const auto& in : net.inputs) channels[in.name] = in.shape.c;
  for (size_t i : order) {
    const auto& l = net.layers[i];
    std::vector<int64_t> in;
    bool known = true;
    for (const auto& src : l.inputs) {
      auto it = channels.find(src);
      if (it == channels.end()) {
        known = false;
        break;
      }
      in.push_back(it->second);
    }
    if (!known) continue;
    int64_t out = 0;
    if (auto err = layer_channels(l, in, out); !err.empty()) {
      diags.push_back({l.name, err});
      continue;
    }
    channels[l.name] = out;
  }
  return diags;
}

std::string param_name(std::string_view layer, ParamRole role) {
  static constexpr std::string_view kSuffix[] = {"weight", "bias", "scale", "shift", "mean", "var"};
  return std::string(layer) + "." + std::string(kSuffix[static_cast<int>(role)]);
}

std::vector<ParamInfo> required_params(const NetworkSpec& net) {
  std::vector<ParamInfo> params;
  auto add = [&](const LayerSpec& l, ParamRole role, Shape shape) {
    params.push_back({param_name(l.name, role), l.name, role, shape});
  };
  for (const auto& l : net.layers) {
    switch (l.kind) {
      case LayerKind::kConv: {
        const auto& s = l.get<ConvSpec>();
        add(l, ParamRole::kWeight, s.weight_shape());
        if (s.has_bias) add(l, ParamRole::kBias, {s.out_channels, 1, 1, 1});
        break;
      }
      case LayerKind::kFullyConnected: {
        const auto& s = l.get<FcSpec>();
        add(l, ParamRole::kWeight, {s.out_features, s.in_features, 1, 1});
        if (s.has_bias) add(l, ParamRole::kBias, {s.out_features, 1, 1, 1});
        break;
      }
      case LayerKind::kScaleShift: {
        const int64_t c = l.get<ScaleShiftSpec>().channels;
        add(l, ParamRole::kScale, {c, 1, 1, 1});
        add(l, ParamRole::kShift, {c, 1, 1, 1});
        break;
      }
      case LayerKind::kBatchNorm: {
        const int64_t c = l.get<BatchNormSpec>().channels;
        add(l, ParamRole::kMean, {c, 1, 1, 1});
        add(l, ParamRole::kVar, {c, 1, 1, 1});
        break;
      }
      default:
        break;
    }
  }
  return params;
}

// ---- JSON ----------------------------------------------------------------

namespace {

using nlohmann::json;

json params_to_json(const LayerParams& p) {
  return std::visit(
      [](const auto& s) -> json {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, std::monostate>) {
          return json::object();
        } else if constexpr (std::is_same_v<S, ConvSpec>) {
          return {{"in_channels", s.in_channels}, {"out_channels", s.out_channels},
                  {"kernel_h", s.kernel_h},       {"kernel_w", s.kernel_w},
                  {"stride", s.stride},           {"pad", s.pad},
                  {"has_bias", s.has_bias},       {"groups", s.groups}};
        } else if constexpr (std::is_same_v<S, PoolSpec>) {
          return {{"kernel", s.kernel}, {"stride", s.stride}, {"pad", s.pad}, {"ceil_mode", s.ceil_mode}};
        } else if constexpr (std::is_same_v<S, DeconvSpec>) {
          return {{"channels", s.channels}, {"kernel", s.kernel}, {"stride", s.stride}, {"pad", s.pad}};
        } else if constexpr (std::is_same_v<S, FcSpec>) {
          return {{"in_features", s.in_features}, {"out_features", s.out_features}, {"has_bias", s.has_bias}};
        } else if constexpr (std::is_same_v<S, RoiPoolSpec>) {
          return {{"pooled_h", s.pooled_h}, {"pooled_w", s.pooled_w}, {"spatial_scale", s.spatial_scale}};
        } else if constexpr (std::is_same_v<S, BatchNormSpec>) {
          return {{"channels", s.channels}, {"eps", s.eps}, {"momentum", s.momentum}};
        } else if constexpr (std::is_same_v<S, ScaleShiftSpec>) {
          return {{"channels", s.channels}};
        } else {
          return {{"begin", s.begin}, {"end", s.end}};
        }
      },
      p);
}

// Field access with a readable path for error messages.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const json& node(const std::string& key) const {
    if (!j_.is_object()) fail(path_, "expected an object");
    auto it = j_.find(key);
    if (it == j_.end()) fail(path_ + "." + key, "missing field");
    return *it;
  }
  Reader child(const std::string& key) const { return {node(key), path_ + "." + key}; }

  template <typename V>
  V get(const std::string& key) const {
    const json& v = node(key);
    try {
      return v.get<V>();
    } catch (const json::exception& e) {
      fail(path_ + "." + key, e.what());
    }
  }
  template <typename V>
  V get_or(const std::string& key, V fallback) const {
    if (!j_.is_object() || !j_.contains(key)) return fallback;
    return get<V>(key);
  }

  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw SpecError("spec field '" + path + "': " + what);
  }

 private:
  const json& j_;
  std::string path_;
};

LayerParams params_from_json(LayerKind kind, const Reader& r) {
  switch (kind) {
    case LayerKind::kConv:
      return ConvSpec{r.get<int64_t>("in_channels"), r.get<int64_t>("out_channels"),
                      r.get<int64_t>("kernel_h"),    r.get<int64_t>("kernel_w"),
                      r.get<int64_t>("stride"),      r.get<int64_t>("pad"),
                      r.get<bool>("has_bias"),       r.get_or<int64_t>("groups", 1)};
    case LayerKind::kMaxPool:
      return PoolSpec{r.get<int64_t>("kernel"), r.get<int64_t>("stride"), r.get<int64_t>("pad"),
                      r.get<bool>("ceil_mode")};
    case LayerKind::kDeconvBilinear:
      return DeconvSpec{r.get<int64_t>("channels"), r.get<int64_t>("kernel"),
                        r.get<int64_t>("stride"), r.get<int64_t>("pad")};
    case LayerKind::kFullyConnected:
      return FcSpec{r.get<int64_t>("in_features"), r.get<int64_t>("out_features"),
                    r.get<bool>("has_bias")};
    case LayerKind::kRoiPool:
      return RoiPoolSpec{r.get<int64_t>("pooled_h"), r.get<int64_t>("pooled_w"),
                         r.get<double>("spatial_scale")};
    case LayerKind::kBatchNorm:
      return BatchNormSpec{r.get<int64_t>("channels"), r.get<double>("eps"),
                           r.get<double>("momentum")};
    case LayerKind::kScaleShift:
      return ScaleShiftSpec{r.get<int64_t>("channels")};
    case LayerKind::kSliceChannels:
      return SliceSpec{r.get<int64_t>("begin"), r.get<int64_t>("end")};
    default:
      return std::monostate{};
  }
}

Shape shape_from_json(const Reader& r, const std::string& key) {
  auto dims = r.get<std::vector<int64_t>>(key);
  if (dims.size() != 4) Reader::fail(r.path() + "." + key, "expected 4 dimensions (N, C, H, W)");
  return {dims[0], dims[1], dims[2], dims[3]};
}

}  // namespace

std::string spec_to_json(const NetworkSpec& net) {
  json doc;
  doc["format"] = "pvanet-network";
  doc["version"] = 1;
  doc["name"] = net.name;
  doc["inputs"] = json::array();
  for (const auto& in : net.inputs) {
    doc["inputs"].push_back({{"name", in.name}, {"shape", {in.shape.n, in.shape.c, in.shape.h, in.shape.w}}});
  }
  doc["layers"] = json::array();
  for (const auto& l : net.layers) {
    json jl{{"name", l.name}, {"kind", std::string(to_string(l.kind))}, {"inputs", l.inputs}};
    if (!l.group.empty()) jl["group"] = l.group;
    if (!std::holds_alternative<std::monostate>(l.params)) jl["params"] = params_to_json(l.params);
    doc["layers"].push_back(std::move(jl));
  }
  doc["outputs"] = net.outputs;
  return doc.dump(2) + "\n";
}

NetworkSpec spec_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // Translate the byte offset into line/column.
    size_t line = 1, col = 1;
    for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw FormatError("spec parse error at line " + std::to_string(line) + ", column " +
                    std::to_string(col) + ": " + e.what());
  }
  Reader root(doc, "$");
  if (root.get_or<std::string>("format", "pvanet-network") != "pvanet-network") {
    Reader::fail("$.format", "expected \"pvanet-network\"");
  }
  if (const auto v = root.get_or<int>("version", 1); v != 1) {
    Reader::fail("$.version", "unsupported version " + std::to_string(v));
  }
  NetworkSpec net;
  net.name = root.get_or<std::string>("name", "");
  const json& inputs = root.node("inputs");
  for (size_t i = 0; i < inputs.size(); ++i) {
    Reader r(inputs[i], "$.inputs[" + std::to_string(i) + "]");
    net.inputs.push_back({r.get<std::string>("name"), shape_from_json(r, "shape")});
  }
  const json& layers = root.node("layers");
  if (!layers.is_array()) Reader::fail("$.layers", "expected an array");
  for (size_t i = 0; i < layers.size(); ++i) {
    Reader r(layers[i], "$.layers[" + std::to_string(i) + "]");
    LayerSpec l;
    l.name = r.get<std::string>("name");
    try {
      l.kind = parse_layer_kind(r.get<std::string>("kind"));
    } catch (const SpecError& e) {
      Reader::fail(r.path() + ".kind", e.what());
    }
    l.inputs = r.get<std::vector<std::string>>("inputs");
    l.group = r.get_or<std::string>("group", "");
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kMaxPool ||
        l.kind == LayerKind::kDeconvBilinear || l.kind == LayerKind::kFullyConnected ||
        l.kind == LayerKind::kRoiPool || l.kind == LayerKind::kBatchNorm ||
        l.kind == LayerKind::kScaleShift || l.kind == LayerKind::kSliceChannels) {
      l.params = params_from_json(l.kind, r.child("params"));
    }
    net.layers.push_back(std::move(l));
  }
  net.outputs = root.get<std::vector<std::string>>("outputs");
  return net;
}

void save_spec(const NetworkSpec& net, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << spec_to_json(net);
}

NetworkSpec load_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return spec_from_json(ss.str());
}

}  // namespace pvanet
