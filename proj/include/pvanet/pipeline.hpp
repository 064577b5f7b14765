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

#ifndef PVANET_PIPELINE_HPP_
#define PVANET_PIPELINE_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pvanet/analyze.hpp"
#include "pvanet/compress.hpp"
#include "pvanet/detect.hpp"
#include "pvanet/network.hpp"
#include "pvanet/sched.hpp"
#include "pvanet/weights.hpp"

namespace pvanet {

// Exit status of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitIo = 2 };

// Maps an exception to an exit code: malformed or unreadable files are I/O
// failures, everything else is a validation failure.
int exit_code_for(const std::exception& e);

// Built-in network names: "pvanet" (feature extractor), "pvanet-detector"
// and "mini-pvanet". Anything else is loaded as a JSON spec file.
bool is_builtin_network(const std::string& name);
NetworkSpec resolve_network(const std::string& spec_or_builtin, int64_t height = 1056, int64_t width = 640);

using ConfigList = std::vector<std::pair<std::string, std::string>>;
std::string config_header(const ConfigList& config);

struct AnalyzeOptions {
  std::string spec = "pvanet";
  int64_t height = 1056;
  int64_t width = 640;
  std::vector<int64_t> proposals = {200, 300};
  ReportFormat format = ReportFormat::kTable;
};

ConfigList resolved_config(const AnalyzeOptions& options);
CostReport run_analyze(const AnalyzeOptions& options);
std::string cmd_analyze(const AnalyzeOptions& options);

struct InferOptions {
  std::string spec = "pvanet-detector";
  std::filesystem::path weights;
  std::filesystem::path input;  // .ppm image or .nt tensor (used as-is)
  int64_t shorter_edge = 640;
  int64_t pad_multiple = 32;
  std::array<float, 3> mean = {0, 0, 0};
  ProposalConfig proposal;
  ClassifyConfig classify;
  bool voting = false;
  double vote_iou = 0.5;
  double vote_exponent = 1.0;
  std::vector<double> anchor_scales = {3, 6, 9, 16, 25};
  std::vector<double> anchor_ratios = {0.5, 0.667, 1.0, 1.5, 2.0};
  double anchor_stride = 16;
  std::string data_input = "data";
  std::string rois_input = "rois";
  std::string rpn_scores = "rpn_cls_score";
  std::string rpn_deltas = "rpn_bbox_pred";
  std::string cls_prob = "cls_prob";
  std::string bbox_pred = "bbox_pred";
  std::vector<std::string> dump;  // layer outputs written as <dump_dir>/<name>.nt
  std::filesystem::path dump_dir = ".";
};

ConfigList resolved_config(const InferOptions& options);

struct InferResult {
  std::vector<ScoredBox> proposals;  // network-input coordinates
  std::vector<Detection> detections;  // original-image coordinates
  double scale = 1.0;
  ImageSize image;  // valid (unpadded) network-input extent
  TensorMap<float> dumps;
};

// Runs the detector on a prepared (1, 3, H, W) input whose top-left
// `valid` region holds the image; `scale` maps original to input pixels.
InferResult run_detector(const NetworkSpec& net, const WeightStore& weights, const Tensor& data,
                         const ImageSize& valid, double scale, const InferOptions& options);
InferResult run_infer(const InferOptions& options);
std::string cmd_infer(const InferOptions& options);

struct CompressOptions {
  std::string spec = "pvanet-detector";
  std::filesystem::path weights_in;
  std::filesystem::path weights_out;
  std::filesystem::path spec_out;  // optional compressed spec JSON
  int64_t k1 = 512;
  int64_t k2 = 512;
};

ConfigList resolved_config(const CompressOptions& options);
std::string cmd_compress(const CompressOptions& options);

struct TrainToyOptions {
  TrainConfig train;
  int64_t samples = 200;
  int64_t patch = 16;
  int64_t classes = 4;
  uint64_t data_seed = 7;
  uint64_t init_seed = 1;
  std::filesystem::path trace_out;
  std::filesystem::path weights_out;
};

ConfigList resolved_config(const TrainToyOptions& options);

struct TrainToyOutput {
  TrainResult result;
  double train_accuracy = 0;
  std::string trace_csv;
  std::string summary;
};

TrainToyOutput run_train_toy(const TrainToyOptions& options);

}  // namespace pvanet

#endif  // PVANET_PIPELINE_HPP_
