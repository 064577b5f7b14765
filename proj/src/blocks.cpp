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

#include "pvanet/blocks.hpp"

namespace pvanet {

namespace {

LayerSpec make_layer(std::string name, LayerKind kind, std::vector<std::string> inputs,
                     const std::string& group, LayerParams params = std::monostate{}) {
  return LayerSpec{std::move(name), kind, std::move(inputs), group, std::move(params)};
}

ConvSpec conv_spec(int64_t in, int64_t out, int64_t kernel, int64_t stride, bool bias = false) {
  return ConvSpec{in, out, kernel, kernel, stride, kernel / 2, bias, 1};
}

void require(bool ok, const std::string& prefix, const std::string& what) {
  if (!ok) throw SpecError("block \"" + prefix + "\": " + what);
}

// Appends the shortcut and the add, naming the add after the block.
void finish_residual(std::vector<LayerSpec>& layers, const std::string& prefix,
                     const std::string& input, int64_t in_channels, const std::string& body,
                     int64_t out_channels, int64_t stride, Residual residual) {
  if (residual == Residual::kNone) {
    layers.back().name = prefix;
    return;
  }
  std::string shortcut = input;
  if (residual == Residual::kIdentity) {
    require(stride == 1, prefix, "identity residual requires stride 1, got stride " + std::to_string(stride));
    require(in_channels == out_channels, prefix,
            "identity residual requires matching channels (" + std::to_string(in_channels) +
                " vs " + std::to_string(out_channels) + ")");
  } else {
    shortcut = append_conv_unit(layers, prefix + "/proj", input, prefix,
                                conv_spec(in_channels, out_channels, 1, stride), false);
  }
  layers.push_back(make_layer(prefix, LayerKind::kEltwiseAdd, {body, shortcut}, prefix));
}

}  // namespace

std::string append_conv_unit(std::vector<LayerSpec>& layers, const std::string& name,
                             const std::string& input, const std::string& group,
                             const ConvSpec& conv, bool with_relu) {
  layers.push_back(make_layer(name + "/conv", LayerKind::kConv, {input}, group, conv));
  layers.push_back(make_layer(name + "/bn", LayerKind::kBatchNorm, {name + "/conv"}, group,
                              BatchNormSpec{conv.out_channels}));
  layers.push_back(make_layer(name + "/scale", LayerKind::kScaleShift, {name + "/bn"}, group,
                              ScaleShiftSpec{conv.out_channels}));
  if (!with_relu) return name + "/scale";
  layers.push_back(make_layer(name + "/relu", LayerKind::kRelu, {name + "/scale"}, group));
  return name + "/relu";
}

BlockOutput build_crelu_block(const CReLUBlockSpec& spec) {
  const std::string& p = spec.prefix;
  require(!p.empty(), p, "empty prefix");
  require(spec.in_channels > 0, p, "in_channels must be positive");
  require(spec.mid_channels > 0, p, "mid_channels must be positive");
  require(spec.mid_kernel > 0 && spec.mid_kernel % 2 == 1, p, "KxK kernel must be odd");
  require(spec.stride > 0, p, "stride must be positive");

  BlockOutput out;
  auto& layers = out.layers;
  std::string x = spec.input;
  int64_t channels = spec.in_channels;
  int64_t kxk_stride = spec.stride;
  if (spec.pre_channels) {
    require(*spec.pre_channels > 0, p, "pre_channels must be positive");
    x = append_conv_unit(layers, p + "/1x1_pre", x, p,
                         conv_spec(channels, *spec.pre_channels, 1, spec.stride), true);
    channels = *spec.pre_channels;
    kxk_stride = 1;
  }

  const std::string k = p + "/" + std::to_string(spec.mid_kernel) + "x" + std::to_string(spec.mid_kernel);
  layers.push_back(make_layer(k + "/conv", LayerKind::kConv, {x}, p,
                              conv_spec(channels, spec.mid_channels, spec.mid_kernel, kxk_stride)));
  layers.push_back(make_layer(k + "/bn", LayerKind::kBatchNorm, {k + "/conv"}, p,
                              BatchNormSpec{spec.mid_channels}));
  layers.push_back(make_layer(k + "/neg", LayerKind::kNegate, {k + "/bn"}, p));
  layers.push_back(make_layer(k + "/concat", LayerKind::kConcat, {k + "/bn", k + "/neg"}, p));
  channels = 2 * spec.mid_channels;
  x = k + "/concat";
  if (spec.scale_shift) {
    layers.push_back(make_layer(k + "/scale", LayerKind::kScaleShift, {x}, p, ScaleShiftSpec{channels}));
    x = k + "/scale";
  }
  layers.push_back(make_layer(k + "/relu", LayerKind::kRelu, {x}, p));
  x = k + "/relu";

  if (spec.post_channels) {
    require(*spec.post_channels > 0, p, "post_channels must be positive");
    x = append_conv_unit(layers, p + "/1x1_post", x, p,
                         conv_spec(channels, *spec.post_channels, 1, 1), false);
    channels = *spec.post_channels;
  }
  finish_residual(layers, p, spec.input, spec.in_channels, x, channels, spec.stride, spec.residual);
  out.output = p;
  out.channels = channels;
  return out;
}

BlockOutput build_inception_block(const InceptionBlockSpec& spec) {
  const std::string& p = spec.prefix;
  require(!p.empty(), p, "empty prefix");
  require(spec.stride == 1 || spec.stride == 2, p, "stride must be 1 or 2");
  require(spec.bpool.has_value() == (spec.stride == 2), p,
          "pool branch must be present exactly when stride is 2");
  require(spec.in_channels > 0 && spec.b1x1 > 0 && spec.b3x3.reduce > 0 && spec.b3x3.out > 0 &&
              spec.b5x5.reduce > 0 && spec.b5x5.mid > 0 && spec.b5x5.out > 0 &&
              spec.out_channels > 0,
          p, "channel counts must be positive");

  BlockOutput out;
  auto& layers = out.layers;
  const int64_t in = spec.in_channels;
  const int64_t s = spec.stride;
  std::vector<std::string> branches;

  branches.push_back(append_conv_unit(layers, p + "/b1x1", spec.input, p,
                                      conv_spec(in, spec.b1x1, 1, s), true));

  std::string b3 = append_conv_unit(layers, p + "/b3x3_reduce", spec.input, p,
                                    conv_spec(in, spec.b3x3.reduce, 1, s), true);
  branches.push_back(append_conv_unit(layers, p + "/b3x3", b3, p,
                                      conv_spec(spec.b3x3.reduce, spec.b3x3.out, 3, 1), true));

  std::string b5 = append_conv_unit(layers, p + "/b5x5_reduce", spec.input, p,
                                    conv_spec(in, spec.b5x5.reduce, 1, s), true);
  b5 = append_conv_unit(layers, p + "/b5x5_a", b5, p,
                        conv_spec(spec.b5x5.reduce, spec.b5x5.mid, 3, 1), true);
  branches.push_back(append_conv_unit(layers, p + "/b5x5_b", b5, p,
                                      conv_spec(spec.b5x5.mid, spec.b5x5.out, 3, 1), true));

  int64_t concat_channels = spec.b1x1 + spec.b3x3.out + spec.b5x5.out;
  if (spec.bpool) {
    require(*spec.bpool > 0, p, "pool branch channels must be positive");
    layers.push_back(make_layer(p + "/pool", LayerKind::kMaxPool, {spec.input}, p,
                                PoolSpec{3, 2, 0, true}));
    branches.push_back(append_conv_unit(layers, p + "/bpool", p + "/pool", p,
                                        conv_spec(in, *spec.bpool, 1, 1), true));
    concat_channels += *spec.bpool;
  }

  layers.push_back(make_layer(p + "/concat", LayerKind::kConcat, branches, p));
  const std::string body = append_conv_unit(layers, p + "/out", p + "/concat", p,
                                            conv_spec(concat_channels, spec.out_channels, 1, 1), false);
  finish_residual(layers, p, spec.input, in, body, spec.out_channels, s, spec.residual);
  out.output = p;
  out.channels = spec.out_channels;
  return out;
}

NetworkSpec build_pvanet(int64_t height, int64_t width) {
  NetworkSpec net;
  net.name = "pvanet";
  net.inputs.push_back({"data", {1, 3, height, width}});

  auto add_block = [&net](BlockOutput b) {
    net.append(std::move(b.layers));
    return b.output;
  };

  std::string x = add_block(build_crelu_block(
      {"conv1_1", "data", 3, std::nullopt, 7, 16, std::nullopt, 2, Residual::kNone}));
  net.layers.push_back(make_layer("pool1_1", LayerKind::kMaxPool, {x}, "pool1_1", PoolSpec{3, 2, 0, true}));
  x = "pool1_1";

  struct CReLURow {
    const char* name;
    int64_t in, pre, mid, post, stride;
    Residual residual;
  };
  const CReLURow crelu_rows[] = {
      {"conv2_1", 32, 24, 24, 64, 1, Residual::kProjection},
      {"conv2_2", 64, 24, 24, 64, 1, Residual::kIdentity},
      {"conv2_3", 64, 24, 24, 64, 1, Residual::kIdentity},
      {"conv3_1", 64, 48, 48, 128, 2, Residual::kProjection},
      {"conv3_2", 128, 48, 48, 128, 1, Residual::kIdentity},
      {"conv3_3", 128, 48, 48, 128, 1, Residual::kIdentity},
      {"conv3_4", 128, 48, 48, 128, 1, Residual::kIdentity},
  };
  for (const auto& r : crelu_rows) {
    x = add_block(build_crelu_block({r.name, x, r.in, r.pre, 3, r.mid, r.post, r.stride, r.residual}));
  }

  struct InceptionRow {
    const char* name;
    int64_t in, b1x1;
    ChannelPair b3x3;
    ChannelTriple b5x5;
    std::optional<int64_t> bpool;
    int64_t out, stride;
    Residual residual;
  };
  const InceptionRow inception_rows[] = {
      {"conv4_1", 128, 64, {48, 128}, {24, 48, 48}, 128, 256, 2, Residual::kProjection},
      {"conv4_2", 256, 64, {64, 128}, {24, 48, 48}, std::nullopt, 256, 1, Residual::kIdentity},
      {"conv4_3", 256, 64, {64, 128}, {24, 48, 48}, std::nullopt, 256, 1, Residual::kIdentity},
      {"conv4_4", 256, 64, {64, 128}, {24, 48, 48}, std::nullopt, 256, 1, Residual::kIdentity},
      {"conv5_1", 256, 64, {96, 192}, {32, 64, 64}, 128, 384, 2, Residual::kProjection},
      {"conv5_2", 384, 64, {96, 192}, {32, 64, 64}, std::nullopt, 384, 1, Residual::kIdentity},
      {"conv5_3", 384, 64, {96, 192}, {32, 64, 64}, std::nullopt, 384, 1, Residual::kIdentity},
      {"conv5_4", 384, 64, {96, 192}, {32, 64, 64}, std::nullopt, 384, 1, Residual::kIdentity},
  };
  for (const auto& r : inception_rows) {
    x = add_block(build_inception_block(
        {r.name, x, r.in, r.b1x1, r.b3x3, r.b5x5, r.bpool, r.out, r.stride, r.residual}));
  }

  net.layers.push_back(make_layer("downscale", LayerKind::kMaxPool, {"conv3_4"}, "downscale",
                                  PoolSpec{3, 2, 0, true}));
  net.layers.push_back(make_layer("upscale", LayerKind::kDeconvBilinear, {"conv5_4"}, "upscale",
                                  DeconvSpec{384, 4, 2, 1}));
  net.layers.push_back(make_layer("concat", LayerKind::kConcat, {"downscale", "conv4_4", "upscale"}, "concat"));
  append_conv_unit(net.layers, "convf", "concat", "convf", conv_spec(768, 512, 1, 1), true);
  net.layers.back().name = "convf";
  net.outputs = {"convf", "conv4_4"};
  return net;
}

std::vector<LayerSpec> build_rpn_head(const RpnHeadConfig& c) {
  const std::string g = "rpn";
  std::vector<LayerSpec> layers;
  layers.push_back(make_layer("rpn_input", LayerKind::kSliceChannels, {c.feature}, g,
                              SliceSpec{0, c.input_channels}));
  layers.push_back(make_layer("rpn_conv", LayerKind::kConv, {"rpn_input"}, g,
                              conv_spec(c.input_channels, c.conv_channels, 3, 1, true)));
  layers.push_back(make_layer("rpn_conv/relu", LayerKind::kRelu, {"rpn_conv"}, g));
  layers.push_back(make_layer("rpn_out", LayerKind::kConv, {"rpn_conv/relu"}, g,
                              conv_spec(c.conv_channels, c.anchors * 6, 1, 1, true)));
  layers.push_back(make_layer("rpn_cls_score", LayerKind::kSliceChannels, {"rpn_out"}, g,
                              SliceSpec{0, 2 * c.anchors}));
  layers.push_back(make_layer("rpn_bbox_pred", LayerKind::kSliceChannels, {"rpn_out"}, g,
                              SliceSpec{2 * c.anchors, 6 * c.anchors}));
  return layers;
}

std::vector<LayerSpec> build_rcnn_head(const RcnnHeadConfig& c) {
  const std::string g = "rcnn";
  std::vector<LayerSpec> layers;
  layers.push_back(make_layer("roi_pool", LayerKind::kRoiPool, {c.feature, c.rois}, g,
                              RoiPoolSpec{c.pooled, c.pooled, c.spatial_scale}));
  std::string x = "roi_pool";
  int64_t width = c.feature_channels * c.pooled * c.pooled;
  for (size_t i = 0; i < c.hidden.size(); ++i) {
    const std::string fc = "fc" + std::to_string(6 + i);
    layers.push_back(make_layer(fc, LayerKind::kFullyConnected, {x}, g, FcSpec{width, c.hidden[i], true}));
    layers.push_back(make_layer(fc + "/relu", LayerKind::kRelu, {fc}, g));
    x = fc + "/relu";
    width = c.hidden[i];
  }
  const int64_t k = c.num_classes;
  layers.push_back(make_layer("rcnn_out", LayerKind::kFullyConnected, {x}, g, FcSpec{width, 5 * k, true}));
  layers.push_back(make_layer("cls_score", LayerKind::kSliceChannels, {"rcnn_out"}, g, SliceSpec{0, k}));
  layers.push_back(make_layer("bbox_pred", LayerKind::kSliceChannels, {"rcnn_out"}, g, SliceSpec{k, 5 * k}));
  layers.push_back(make_layer("cls_prob", LayerKind::kSoftmax, {"cls_score"}, g));
  return layers;
}

NetworkSpec build_pvanet_detector(const DetectorConfig& config) {
  NetworkSpec net = build_pvanet(config.height, config.width);
  net.name = "pvanet_detector";
  net.inputs.push_back({config.rcnn.rois, {config.proposals, 4, 1, 1}});
  net.append(build_rpn_head(config.rpn));
  net.append(build_rcnn_head(config.rcnn));
  net.outputs = {"rpn_cls_score", "rpn_bbox_pred", "cls_prob", "bbox_pred"};
  return net;
}

NetworkSpec build_mini_pvanet(int64_t num_classes, int64_t patch) {
  NetworkSpec net;
  net.name = "mini_pvanet";
  net.inputs.push_back({"data", {1, 3, patch, patch}});
  auto add_block = [&net](BlockOutput b) {
    net.append(std::move(b.layers));
    return b.output;
  };
  std::string x = add_block(build_crelu_block(
      {"conv1_1", "data", 3, std::nullopt, 7, 2, std::nullopt, 2, Residual::kNone}));
  net.layers.push_back(make_layer("pool1_1", LayerKind::kMaxPool, {x}, "pool1_1", PoolSpec{3, 2, 0, true}));
  x = add_block(build_crelu_block({"conv2_1", "pool1_1", 4, 3, 3, 3, 8, 1, Residual::kProjection}));
  x = add_block(build_inception_block(
      {"conv4_1", x, 8, 8, {6, 16}, {3, 6, 6}, 16, 32, 2, Residual::kProjection}));
  // Spatial extent after stride 2, pool (ceil) and stride 2.
  const int64_t s1 = (patch + 6 - 7) / 2 + 1;
  const int64_t s2 = (s1 - 3 + 1) / 2 + 1;
  const int64_t s3 = (s2 - 1) / 2 + 1;
  net.layers.push_back(make_layer("logits", LayerKind::kFullyConnected, {x}, "classifier",
                                  FcSpec{32 * s3 * s3, num_classes, true}));
  net.outputs = {"logits"};
  return net;
}

}  // namespace pvanet
