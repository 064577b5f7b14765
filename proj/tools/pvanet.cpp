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

// Command-line front end: cost analysis, inference, head compression and
// toy training.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pvanet/analyze.hpp"
#include "pvanet/kernels.hpp"
#include "pvanet/network.hpp"
#include "pvanet/pipeline.hpp"
#include "pvanet/weights.hpp"

namespace {

using namespace pvanet;

std::pair<int64_t, int64_t> parse_extent(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw std::invalid_argument("extent \"" + text + "\" is not of the form HxW");
  try {
    const int64_t h = std::stoll(text.substr(0, x));
    const int64_t w = std::stoll(text.substr(x + 1));
    if (h <= 0 || w <= 0) throw std::invalid_argument(text);
    return {h, w};
  } catch (const std::logic_error&) {
    throw std::invalid_argument("extent \"" + text + "\" is not of the form HxW");
  }
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path + ": cannot open for writing");
  os << text;
  if (!os) throw FormatError(path + ": write failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PVANET feature-extractor toolkit: cost analysis, detection, compression, toy training"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: PVANET_NUM_THREADS or 1)");

  // analyze
  AnalyzeOptions an;
  std::string an_input = "1056x640", an_format = "table", an_out;
  auto* analyze = app.add_subcommand("analyze", "Static shape, parameter and MAC report");
  analyze->add_option("spec", an.spec, "Built-in network (pvanet, pvanet-detector, mini-pvanet) or spec JSON")
      ->capture_default_str();
  analyze->add_option("--input", an_input, "Input extent HxW")->capture_default_str();
  analyze->add_option("--proposals", an.proposals, "Proposal counts for the classifier cost")
      ->delimiter(',')
      ->capture_default_str();
  analyze->add_option("--format", an_format, "table or json")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();
  analyze->add_option("-o,--output", an_out, "Output file (default stdout)");

  // infer
  InferOptions in;
  std::string in_out, in_weights, in_image, in_dump_dir = ".";
  std::vector<float> in_mean = {0, 0, 0};
  auto* infer = app.add_subcommand("infer", "Detect objects in a PPM image or .nt tensor");
  infer->add_option("--spec", in.spec, "Detector network")->capture_default_str();
  infer->add_option("--weights", in_weights, "Weight container")->required();
  infer->add_option("--image", in_image, "Input .ppm image or (1,3,H,W) .nt tensor")->required();
  infer->add_option("--shorter-edge", in.shorter_edge, "Resize target of the shorter edge (0 keeps size)")
      ->capture_default_str();
  infer->add_option("--pad", in.pad_multiple, "Pad height and width to multiples of this")->capture_default_str();
  infer->add_option("--mean", in_mean, "Per-channel mean R,G,B")->delimiter(',')->expected(3);
  infer->add_option("--proposals", in.proposal.post_nms_top_n, "Proposals kept after NMS")->capture_default_str();
  infer->add_option("--pre-nms", in.proposal.pre_nms_top_n, "Proposals kept before NMS")->capture_default_str();
  infer->add_option("--rpn-nms", in.proposal.nms_threshold, "Proposal NMS IoU threshold")->capture_default_str();
  infer->add_option("--nms", in.classify.nms_threshold, "Per-class NMS IoU threshold")->capture_default_str();
  infer->add_option("--score-threshold", in.classify.score_threshold, "Minimum class score")->capture_default_str();
  infer->add_flag("--voting", in.voting, "Apply bounding-box voting");
  infer->add_option("--vote-iou", in.vote_iou, "Voting IoU threshold")->capture_default_str();
  infer->add_option("--vote-exponent", in.vote_exponent, "Voting weight exponent on scores")->capture_default_str();
  infer->add_option("--anchor-scales", in.anchor_scales, "Anchor scales")->delimiter(',');
  infer->add_option("--anchor-ratios", in.anchor_ratios, "Anchor aspect ratios")->delimiter(',');
  infer->add_option("--anchor-stride", in.anchor_stride, "Feature stride in pixels")->capture_default_str();
  infer->add_option("--dump", in.dump, "Layer outputs to save as .nt")->delimiter(',');
  infer->add_option("--dump-dir", in_dump_dir, "Directory for --dump files")->capture_default_str();
  infer->add_option("-o,--output", in_out, "Detections file (default stdout)");

  // compress
  CompressOptions co;
  std::string co_in, co_out, co_spec_out;
  auto* compress = app.add_subcommand("compress", "Truncated-SVD compression of the R-CNN fc6/fc7 layers");
  compress->add_option("--spec", co.spec, "Detector network")->capture_default_str();
  compress->add_option("--weights", co_in, "Input weight container")->required();
  compress->add_option("-o,--output", co_out, "Compressed weight container")->required();
  compress->add_option("--spec-out", co_spec_out, "Write the compressed network spec here");
  compress->add_option("--k1", co.k1, "Rank of fc6")->capture_default_str();
  compress->add_option("--k2", co.k2, "Rank of fc7")->capture_default_str();

  // train-toy
  TrainToyOptions tr;
  std::string tr_loss = "softmax-cross-entropy", tr_policy = "plateau", tr_trace, tr_weights;
  auto* train = app.add_subcommand("train-toy", "Train the miniature network on synthetic blob patches");
  train->add_option("--seed", tr.train.seed, "Minibatch sampling seed")->required();
  train->add_option("--init-seed", tr.init_seed, "Weight initialisation seed")->capture_default_str();
  train->add_option("--data-seed", tr.data_seed, "Dataset seed")->capture_default_str();
  train->add_option("--samples", tr.samples, "Training samples")->capture_default_str();
  train->add_option("--iters", tr.train.max_iters, "Maximum iterations")->capture_default_str();
  train->add_option("--batch", tr.train.batch_size, "Minibatch size")->capture_default_str();
  train->add_option("--loss", tr_loss, "softmax-cross-entropy or smooth-l1")->capture_default_str();
  train->add_option("--lr-policy", tr_policy, "plateau or fixed")->capture_default_str();
  train->add_option("--lr", tr.train.plateau.initial_lr, "Initial learning rate")->capture_default_str();
  train->add_option("--decay", tr.train.plateau.decay_factor, "Plateau decay factor")->capture_default_str();
  train->add_option("--window", tr.train.plateau.window, "Plateau window (observations)")->capture_default_str();
  train->add_option("--threshold", tr.train.plateau.improvement_threshold, "Relative improvement threshold")
      ->capture_default_str();
  train->add_option("--warmup", tr.train.plateau.warmup, "Observations before plateau counting")
      ->capture_default_str();
  train->add_option("--min-lr", tr.train.plateau.min_lr, "Termination learning rate")->capture_default_str();
  train->add_option("--ema-beta", tr.train.plateau.ema_beta, "Loss moving-average coefficient")
      ->capture_default_str();
  train->add_option("--momentum", tr.train.momentum, "SGD momentum")->capture_default_str();
  train->add_option("--weight-decay", tr.train.weight_decay, "L2 weight decay")->capture_default_str();
  train->add_option("--trace", tr_trace, "Loss trace CSV (default stdout)");
  train->add_option("--weights-out", tr_weights, "Trained weight container");

  // init-weights
  std::string iw_spec = "pvanet-detector", iw_out;
  uint64_t iw_seed = 1;
  auto* initw = app.add_subcommand("init-weights", "Write He-initialised weights for a network");
  initw->add_option("--spec", iw_spec, "Network")->capture_default_str();
  initw->add_option("--seed", iw_seed, "Seed")->capture_default_str();
  initw->add_option("-o,--output", iw_out, "Weight container")->required();

  // export-spec
  std::string es_spec = "pvanet", es_input = "1056x640", es_out;
  auto* exports = app.add_subcommand("export-spec", "Write a network spec as JSON");
  exports->add_option("spec", es_spec, "Built-in network")->capture_default_str();
  exports->add_option("--input", es_input, "Input extent HxW")->capture_default_str();
  exports->add_option("-o,--output", es_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (threads > 0) set_num_threads(threads);
    if (*analyze) {
      std::tie(an.height, an.width) = parse_extent(an_input);
      an.format = an_format == "json" ? ReportFormat::kJson : ReportFormat::kTable;
      emit(cmd_analyze(an), an_out);
    } else if (*infer) {
      in.weights = in_weights;
      in.input = in_image;
      in.dump_dir = in_dump_dir;
      in.mean = {in_mean[0], in_mean[1], in_mean[2]};
      emit(cmd_infer(in), in_out);
    } else if (*compress) {
      co.weights_in = co_in;
      co.weights_out = co_out;
      co.spec_out = co_spec_out;
      std::cout << cmd_compress(co);
    } else if (*train) {
      tr.train.loss = parse_loss_kind(tr_loss);
      tr.train.policy = parse_lr_policy(tr_policy);
      tr.trace_out = tr_trace;
      tr.weights_out = tr_weights;
      const TrainToyOutput out = run_train_toy(tr);
      if (tr_trace.empty()) std::cout << out.trace_csv;
      std::cerr << out.summary;
      if (out.result.diverged) {
        std::cerr << "error: training diverged (non-finite loss); partial trace written\n";
        return kExitValidation;
      }
    } else if (*initw) {
      const NetworkSpec net = resolve_network(iw_spec);
      init_weights(net, iw_seed).save(iw_out);
    } else if (*exports) {
      const auto [h, w] = parse_extent(es_input);
      emit(spec_to_json(resolve_network(es_spec, h, w)), es_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
