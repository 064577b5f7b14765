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

#ifndef PVANET_SCHED_HPP_
#define PVANET_SCHED_HPP_

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "pvanet/executor.hpp"
#include "pvanet/network.hpp"
#include "pvanet/weights.hpp"

namespace pvanet {

enum class ScheduleEvent { kNone, kDecayed, kTerminated };
std::string_view to_string(ScheduleEvent event);

struct PlateauConfig {
  double initial_lr = 0.1;
  double decay_factor = 0.3165;
  int64_t window = 100;                 // non-improving observations before a decay
  double improvement_threshold = 1e-3;  // relative decrease of the moving average
  double min_lr = 1e-4;
  double ema_beta = 0.9;
  int64_t warmup = 10;  // observations before plateau counting starts
};

// Learning-rate decay on loss plateaus.
//
// The statistic is a bias-corrected exponential moving average of the loss.
// The first `warmup` observations only track the best average. Afterwards an
// observation counts as an improvement when the average falls below
// best * (1 - improvement_threshold); `window` consecutive non-improvements
// multiply the rate by decay_factor and restart the count from the current
// average. A decay that takes the rate below min_lr terminates the schedule.
class PlateauScheduler {
 public:
  struct Step {
    double lr = 0;
    double ema = 0;
    ScheduleEvent event = ScheduleEvent::kNone;
  };

  explicit PlateauScheduler(PlateauConfig config = {});

  // Throws std::domain_error on a non-finite loss.
  Step observe(double loss);

  double lr() const { return lr_; }
  double ema() const { return ema_; }
  int64_t observations() const { return t_; }
  int64_t decays() const { return decays_; }
  bool terminated() const { return terminated_; }
  const PlateauConfig& config() const { return config_; }

  // Upper bound on decay events for this configuration.
  int64_t max_decays() const;

 private:
  PlateauConfig config_;
  double lr_;
  double raw_ = 0;
  double ema_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  int64_t t_ = 0;
  int64_t since_improvement_ = 0;
  int64_t decays_ = 0;
  bool terminated_ = false;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Relative error is (|a - n| - noise) / max(|a|, |n|, abs_floor), where
  // noise bounds the rounding error of the central difference itself
  // (machine epsilon * sum |r * y| / eps) and the numerator is clamped at 0.
  double abs_floor = 1e-6;
  BnMode mode = BnMode::kFrozen;
  // Entries checked per tensor; larger tensors are sampled. 0 checks all.
  int64_t max_entries_per_tensor = 0;
  uint64_t seed = 1;
  bool check_inputs = true;
};

struct GradCheckResult {
  double max_rel_error = 0;  // after discounting finite-difference rounding
  double max_raw_rel_error = 0;
  std::string worst;  // "<tensor>[index]"
  int64_t checked = 0;
  int64_t skipped = 0;  // perturbation crossed a ReLU or max-pool switch
};

// Compares back-propagated gradients of L = sum(r * outputs), with fixed
// random projections r, against central finite differences for every
// parameter and (optionally) every fed input entry. Entries whose
// perturbation flips a ReLU sign or a max-pool selection are skipped.
GradCheckResult grad_check(const NetworkSpec& net, const ParamMap<double>& params,
                           const TensorMap<double>& inputs, const GradCheckOptions& options = {});

// Momentum SGD in the form v = momentum * v + lr * g, w -= v.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum = 0.9, double weight_decay = 0.0)
      : momentum_(momentum), weight_decay_(weight_decay) {}
  // Updates every parameter that has a gradient.
  void step(ParamMap<float>& params, const TensorMap<float>& grads, double lr);
  const TensorMap<float>& velocity() const { return velocity_; }

 private:
  double momentum_;
  double weight_decay_;
  TensorMap<float> velocity_;
};

struct Sample {
  Tensor image;  // (1, C, H, W)
  int64_t label = 0;
};

// Dim noisy patches, each with a bright square blob inside the quadrant
// given by its label (0..3, row-major).
std::vector<Sample> make_blob_dataset(int64_t count, int64_t patch = 16, uint64_t seed = 7);

enum class LossKind { kSoftmaxCrossEntropy, kSmoothL1 };
enum class LrPolicy { kPlateau, kFixed };
std::string_view to_string(LossKind kind);
std::string_view to_string(LrPolicy policy);
LossKind parse_loss_kind(std::string_view name);
LrPolicy parse_lr_policy(std::string_view name);

struct LossValue {
  double loss = 0;
  Tensor grad;  // d loss / d logits
};

// Mean over the batch. Smooth-L1 regresses the logits onto one-hot targets.
LossValue softmax_cross_entropy(const Tensor& logits, std::span<const int64_t> labels);
LossValue smooth_l1(const Tensor& logits, std::span<const int64_t> labels);

struct TrainConfig {
  int64_t max_iters = 2000;
  int64_t batch_size = 20;
  uint64_t seed = 1;
  LossKind loss = LossKind::kSoftmaxCrossEntropy;
  LrPolicy policy = LrPolicy::kPlateau;
  PlateauConfig plateau;  // initial_lr is also the fixed-policy rate
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::string output = "logits";
};

struct TraceRow {
  int64_t iter = 0;
  double loss = 0;
  double ema = 0;
  double lr = 0;
  ScheduleEvent event = ScheduleEvent::kNone;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  WeightStore weights;
  bool diverged = false;
  bool terminated = false;  // the schedule reached min_lr
  double final_lr = 0;      // scheduler rate at stop; trace rows hold the applied rate
};

// Minibatch SGD with batch-norm in minibatch mode; running statistics follow
// each layer's momentum. Deterministic for a given config. A non-finite loss
// stops training and returns the partial trace with diverged = true.
TrainResult toy_train(const NetworkSpec& net, const WeightStore& initial, const std::vector<Sample>& data,
                      const TrainConfig& config);

// Fraction of samples whose arg-max logit equals the label (frozen BN).
double accuracy(const NetworkSpec& net, const WeightStore& weights, const std::vector<Sample>& data,
                const std::string& output = "logits");

// CSV with '#' header lines recording the configuration, then
// `iter,loss,ema,lr,event`.
std::string trace_csv(const std::vector<TraceRow>& trace, const TrainConfig& config);
std::vector<TraceRow> parse_trace_csv(const std::string& text);

}  // namespace pvanet

#endif  // PVANET_SCHED_HPP_
