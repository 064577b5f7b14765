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

#include "pvanet/sched.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace pvanet {

namespace {

// Which side of every ReLU and which max-pool element was taken.
struct Switches {
  std::vector<std::vector<bool>> relu;
  std::vector<std::vector<int64_t>> argmax;
  bool operator==(const Switches&) const = default;
};

Switches switches(const NetworkSpec& net, const Executor<double>::Trace& trace) {
  Switches s;
  for (size_t i : trace.computed) {
    const LayerSpec& l = net.layers[i];
    if (l.kind == LayerKind::kRelu) {
      const auto x = trace.values.at(l.inputs[0]).data();
      std::vector<bool> bits(x.size());
      for (size_t k = 0; k < x.size(); ++k) bits[k] = x[k] > 0;
      s.relu.push_back(std::move(bits));
    } else if (auto it = trace.argmax.find(l.name); it != trace.argmax.end()) {
      s.argmax.push_back(it->second);
    }
  }
  return s;
}

double projected(const std::vector<std::string>& outputs, const Executor<double>::Trace& trace,
                 const TensorMap<double>& r) {
  double sum = 0;
  for (const auto& o : outputs) {
    const auto y = trace.values.at(o).data();
    const auto w = r.at(o).data();
    for (size_t i = 0; i < y.size(); ++i) sum += w[i] * y[i];
  }
  return sum;
}

std::vector<int64_t> pick_entries(int64_t size, int64_t limit, std::mt19937_64& rng) {
  std::vector<int64_t> idx(static_cast<size_t>(size));
  std::iota(idx.begin(), idx.end(), int64_t{0});
  if (limit > 0 && size > limit) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<size_t>(limit));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

Tensor stack(const std::vector<Sample>& data, const std::vector<size_t>& idx) {
  const Shape s = data.at(idx.front()).image.shape();
  Tensor out(Shape{static_cast<int64_t>(idx.size()), s.c, s.h, s.w});
  const int64_t per = s.c * s.h * s.w;
  for (size_t b = 0; b < idx.size(); ++b) {
    const auto src = data[idx[b]].image.data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(b) * per);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(ScheduleEvent event) {
  switch (event) {
    case ScheduleEvent::kNone:
      return "none";
    case ScheduleEvent::kDecayed:
      return "decayed";
    case ScheduleEvent::kTerminated:
      return "terminated";
  }
  return "none";
}

PlateauScheduler::PlateauScheduler(PlateauConfig config) : config_(config), lr_(config.initial_lr) {
  if (!(config.decay_factor > 0 && config.decay_factor < 1)) {
    throw std::invalid_argument("decay factor must lie in (0, 1)");
  }
  if (config.window < 1) throw std::invalid_argument("plateau window must be at least 1");
  if (!(config.ema_beta >= 0 && config.ema_beta < 1)) throw std::invalid_argument("ema beta must lie in [0, 1)");
  if (config.warmup < 0) throw std::invalid_argument("warmup must be non-negative");
}

PlateauScheduler::Step PlateauScheduler::observe(double loss) {
  if (!std::isfinite(loss)) throw std::domain_error("non-finite loss " + fmt(loss) + " (training diverged)");
  if (terminated_) throw std::logic_error("learning-rate schedule already terminated");
  ++t_;
  const double b = config_.ema_beta;
  raw_ = b * raw_ + (1 - b) * loss;
  ema_ = raw_ / (1 - std::pow(b, static_cast<double>(t_)));

  Step step{lr_, ema_, ScheduleEvent::kNone};
  if (t_ <= config_.warmup) {
    best_ = std::min(best_, ema_);
    return step;
  }
  if (std::isinf(best_) || ema_ < best_ - config_.improvement_threshold * std::fabs(best_)) {
    best_ = ema_;
    since_improvement_ = 0;
  } else {
    ++since_improvement_;
  }
  if (since_improvement_ >= config_.window) {
    lr_ *= config_.decay_factor;
    ++decays_;
    since_improvement_ = 0;
    best_ = ema_;
    step.event = ScheduleEvent::kDecayed;
    if (lr_ < config_.min_lr) {
      terminated_ = true;
      step.event = ScheduleEvent::kTerminated;
    }
  }
  step.lr = lr_;
  return step;
}

int64_t PlateauScheduler::max_decays() const {
  if (config_.initial_lr < config_.min_lr) return 0;
  return static_cast<int64_t>(
             std::floor(std::log(config_.min_lr / config_.initial_lr) / std::log(config_.decay_factor))) +
         1;
}

GradCheckResult grad_check(const NetworkSpec& net, const ParamMap<double>& params, const TensorMap<double>& inputs,
                           const GradCheckOptions& options) {
  ParamMap<double> p = params;
  TensorMap<double> feeds = inputs;
  const Executor<double> exec(net, p);
  const auto& outputs = net.outputs;

  const auto base = exec.forward(feeds, outputs, options.mode, true);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  TensorMap<double> r;
  for (const auto& o : outputs) {
    BasicTensor<double> t(base.values.at(o).shape());
    for (double& x : t.data()) x = uni(rng);
    r.emplace(o, std::move(t));
  }
  const Switches sig0 = switches(net, base);
  // Rounding error of a central difference: the projected loss is known to
  // about machine epsilon times the sum of |r * y| terms.
  double magnitude = 0;
  for (const auto& o : outputs) {
    const auto& y = base.values.at(o);
    const auto& ro = r.at(o);
    for (int64_t i = 0; i < y.size(); ++i) magnitude += std::fabs(y[i] * ro[i]);
  }
  const double fd_noise = std::numeric_limits<double>::epsilon() * magnitude / options.eps;
  const auto grads = exec.backward(base, r);

  GradCheckResult result;
  auto check = [&](const std::string& name, BasicTensor<double>& target, const BasicTensor<double>* analytic) {
    for (int64_t i : pick_entries(target.shape().size(), options.max_entries_per_tensor, rng)) {
      double& x = target.data()[static_cast<size_t>(i)];
      const double orig = x;
      x = orig + options.eps;
      const auto plus = exec.forward(feeds, outputs, options.mode, true);
      x = orig - options.eps;
      const auto minus = exec.forward(feeds, outputs, options.mode, true);
      x = orig;
      if (switches(net, plus) != sig0 || switches(net, minus) != sig0) {
        ++result.skipped;
        continue;
      }
      const double numeric = (projected(outputs, plus, r) - projected(outputs, minus, r)) / (2 * options.eps);
      const double a = analytic ? analytic->data()[static_cast<size_t>(i)] : 0.0;
      const double denom = std::max({std::fabs(a), std::fabs(numeric), options.abs_floor});
      const double rel = std::max(0.0, std::fabs(a - numeric) - fd_noise) / denom;
      result.max_raw_rel_error = std::max(result.max_raw_rel_error, std::fabs(a - numeric) / denom);
      ++result.checked;
      if (rel > result.max_rel_error || result.worst.empty()) {
        result.max_rel_error = std::max(rel, result.max_rel_error);
        result.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  };

  for (const auto& info : required_params(net)) {
    if (info.role == ParamRole::kMean || info.role == ParamRole::kVar) continue;
    auto it = grads.params.find(info.name);
    check(info.name, p.at(info.name), it == grads.params.end() ? nullptr : &it->second);
  }
  if (options.check_inputs) {
    for (const auto& [name, g] : grads.inputs) {
      if (!feeds.contains(name)) continue;
      check(name, feeds.at(name), &g);
    }
  }
  return result;
}

void SgdMomentum::step(ParamMap<float>& params, const TensorMap<float>& grads, double lr) {
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) throw std::invalid_argument("gradient for unknown parameter \"" + name + "\"");
    auto w = pit->second.data();
    auto vit = velocity_.find(name);
    if (vit == velocity_.end()) vit = velocity_.emplace(name, Tensor(g.shape())).first;
    auto v = vit->second.data();
    const auto gd = g.data();
    for (size_t i = 0; i < w.size(); ++i) {
      const double grad = static_cast<double>(gd[i]) + weight_decay_ * static_cast<double>(w[i]);
      v[i] = static_cast<float>(momentum_ * v[i] + lr * grad);
      w[i] -= v[i];
    }
  }
}

std::vector<Sample> make_blob_dataset(int64_t count, int64_t patch, uint64_t seed) {
  if (patch < 4 || patch % 2 != 0) throw std::invalid_argument("patch size must be even and at least 4");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, 0.25);
  const int64_t half = patch / 2;
  const int64_t side = std::max<int64_t>(2, patch / 4);
  std::uniform_int_distribution<int64_t> offset(0, half - side);
  std::vector<Sample> out;
  for (int64_t k = 0; k < count; ++k) {
    Sample s;
    s.label = k % 4;
    s.image = Tensor(Shape{1, 3, patch, patch});
    for (float& x : s.image.data()) x = static_cast<float>(noise(rng));
    const int64_t y0 = (s.label / 2) * half + offset(rng);
    const int64_t x0 = (s.label % 2) * half + offset(rng);
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t y = y0; y < y0 + side; ++y) {
        for (int64_t x = x0; x < x0 + side; ++x) s.image.at(0, c, y, x) += 1.0f;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string_view to_string(LossKind kind) {
  return kind == LossKind::kSoftmaxCrossEntropy ? "softmax-cross-entropy" : "smooth-l1";
}

std::string_view to_string(LrPolicy policy) { return policy == LrPolicy::kPlateau ? "plateau" : "fixed"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "softmax-cross-entropy" || name == "ce") return LossKind::kSoftmaxCrossEntropy;
  if (name == "smooth-l1") return LossKind::kSmoothL1;
  throw std::invalid_argument("unknown loss \"" + std::string(name) + "\" (softmax-cross-entropy, smooth-l1)");
}

LrPolicy parse_lr_policy(std::string_view name) {
  if (name == "plateau") return LrPolicy::kPlateau;
  if (name == "fixed") return LrPolicy::kFixed;
  throw std::invalid_argument("unknown learning-rate policy \"" + std::string(name) + "\" (plateau, fixed)");
}

LossValue softmax_cross_entropy(const Tensor& logits, std::span<const int64_t> labels) {
  const Shape s = logits.shape();
  if (s.h != 1 || s.w != 1 || s.n != static_cast<int64_t>(labels.size())) {
    throw ShapeError("cross-entropy expects (N, K, 1, 1) logits for " + std::to_string(labels.size()) +
                     " labels, got " + s.str());
  }
  LossValue out{0.0, Tensor(s)};
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (int64_t n = 0; n < s.n; ++n) {
    const float* x = logits.plane(n, 0);
    const int64_t y = labels[static_cast<size_t>(n)];
    if (y < 0 || y >= s.c) throw std::invalid_argument("label " + std::to_string(y) + " out of range");
    double m = x[0];
    for (int64_t k = 1; k < s.c; ++k) m = std::max(m, static_cast<double>(x[k]));
    double z = 0;
    for (int64_t k = 0; k < s.c; ++k) z += std::exp(x[k] - m);
    out.loss += (std::log(z) + m - x[y]) * inv_n;
    float* g = out.grad.plane(n, 0);
    for (int64_t k = 0; k < s.c; ++k) {
      const double p = std::exp(x[k] - m) / z;
      g[k] = static_cast<float>((p - (k == y ? 1.0 : 0.0)) * inv_n);
    }
  }
  return out;
}

LossValue smooth_l1(const Tensor& logits, std::span<const int64_t> labels) {
  const Shape s = logits.shape();
  if (s.h != 1 || s.w != 1 || s.n != static_cast<int64_t>(labels.size())) {
    throw ShapeError("smooth-L1 expects (N, K, 1, 1) outputs for " + std::to_string(labels.size()) +
                     " labels, got " + s.str());
  }
  LossValue out{0.0, Tensor(s)};
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (int64_t n = 0; n < s.n; ++n) {
    const int64_t y = labels[static_cast<size_t>(n)];
    if (y < 0 || y >= s.c) throw std::invalid_argument("label " + std::to_string(y) + " out of range");
    for (int64_t k = 0; k < s.c; ++k) {
      const double d = logits.at(n, k, 0, 0) - (k == y ? 1.0 : 0.0);
      const double a = std::fabs(d);
      out.loss += (a < 1 ? 0.5 * d * d : a - 0.5) * inv_n;
      out.grad.at(n, k, 0, 0) = static_cast<float>(std::clamp(d, -1.0, 1.0) * inv_n);
    }
  }
  return out;
}

TrainResult toy_train(const NetworkSpec& net, const WeightStore& initial, const std::vector<Sample>& data,
                      const TrainConfig& config) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  if (config.batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (net.inputs.empty()) throw SpecError("network \"" + net.name + "\" has no inputs");

  ParamMap<float> params = initial.entries();
  const Executor<float> exec(net, params);
  SgdMomentum sgd(config.momentum, config.weight_decay);

  PlateauConfig pc = config.plateau;
  if (config.policy == LrPolicy::kFixed) pc.window = std::numeric_limits<int64_t>::max();
  PlateauScheduler sched(pc);

  std::mt19937_64 rng(config.seed);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  size_t cursor = 0;

  TrainResult result;
  const std::string& input = net.inputs.front().name;
  for (int64_t iter = 1; iter <= config.max_iters; ++iter) {
    std::vector<size_t> idx;
    std::vector<int64_t> labels;
    for (int64_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor]);
      labels.push_back(data[order[cursor]].label);
      ++cursor;
    }
    auto trace = exec.forward({{input, stack(data, idx)}}, {config.output}, BnMode::kMinibatch, true);
    const Tensor& out = trace.values.at(config.output);
    const LossValue lv = config.loss == LossKind::kSoftmaxCrossEntropy ? softmax_cross_entropy(out, labels)
                                                                       : smooth_l1(out, labels);
    const double lr = sched.lr();
    if (!std::isfinite(lv.loss)) {
      result.trace.push_back({iter, lv.loss, sched.ema(), lr, ScheduleEvent::kNone});
      result.diverged = true;
      break;
    }
    const auto grads = exec.backward(trace, {{config.output, lv.grad}});
    sgd.step(params, grads.params, lr);
    for (const auto& [name, stats] : trace.batch_stats) {
      const auto& spec = net.find(name)->get<BatchNormSpec>();
      Tensor& mean = params.at(param_name(name, ParamRole::kMean));
      Tensor& var = params.at(param_name(name, ParamRole::kVar));
      BatchNormStats<float> running{std::vector<float>(mean.data().begin(), mean.data().end()),
                                    std::vector<float>(var.data().begin(), var.data().end())};
      const Shape in = trace.values.at(net.find(name)->inputs[0]).shape();
      update_running_stats(running, stats, spec.momentum, in.n * in.h * in.w);
      std::copy(running.mean.begin(), running.mean.end(), mean.data().begin());
      std::copy(running.var.begin(), running.var.end(), var.data().begin());
    }
    const auto step = sched.observe(lv.loss);
    result.trace.push_back({iter, lv.loss, step.ema, lr, step.event});
    if (step.event == ScheduleEvent::kTerminated) {
      result.terminated = true;
      break;
    }
  }
  result.final_lr = sched.lr();
  result.weights = WeightStore(std::move(params));
  return result;
}

double accuracy(const NetworkSpec& net, const WeightStore& weights, const std::vector<Sample>& data,
                const std::string& output) {
  if (data.empty()) return 0.0;
  const Executor<float> exec(net, weights.entries());
  const std::string& input = net.inputs.front().name;
  constexpr size_t kChunk = 50;
  int64_t correct = 0;
  for (size_t start = 0; start < data.size(); start += kChunk) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(data.size(), start + kChunk); ++i) idx.push_back(i);
    const auto trace = exec.forward({{input, stack(data, idx)}}, {output}, BnMode::kFrozen, false);
    const Tensor& y = trace.values.at(output);
    for (size_t b = 0; b < idx.size(); ++b) {
      const float* row = y.plane(static_cast<int64_t>(b), 0);
      const auto best = std::max_element(row, row + y.shape().c) - row;
      if (best == data[idx[b]].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string trace_csv(const std::vector<TraceRow>& trace, const TrainConfig& config) {
  std::ostringstream os;
  const auto& p = config.plateau;
  os << "# pvanet train-toy trace\n";
  os << "# loss=" << to_string(config.loss) << " lr_policy=" << to_string(config.policy)
     << " max_iters=" << config.max_iters << " batch_size=" << config.batch_size << " seed=" << config.seed << "\n";
  os << "# initial_lr=" << fmt(p.initial_lr) << " decay_factor=" << fmt(p.decay_factor) << " window=" << p.window
     << " improvement_threshold=" << fmt(p.improvement_threshold) << " min_lr=" << fmt(p.min_lr)
     << " ema_beta=" << fmt(p.ema_beta) << " warmup=" << p.warmup << "\n";
  os << "# momentum=" << fmt(config.momentum) << " weight_decay=" << fmt(config.weight_decay) << "\n";
  os << "iter,loss,ema,lr,event\n";
  for (const auto& r : trace) {
    os << r.iter << "," << fmt(r.loss) << "," << fmt(r.ema) << "," << fmt(r.lr) << "," << to_string(r.event) << "\n";
  }
  return os.str();
}

std::vector<TraceRow> parse_trace_csv(const std::string& text) {
  std::vector<TraceRow> out;
  std::istringstream is(text);
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "iter,loss,ema,lr,event") throw FormatError("trace: unexpected header \"" + line + "\"");
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string f[5];
    for (auto& x : f) {
      if (!std::getline(ls, x, ',')) throw FormatError("trace: malformed row \"" + line + "\"");
    }
    TraceRow r;
    r.iter = std::stoll(f[0]);
    r.loss = std::stod(f[1]);
    r.ema = std::stod(f[2]);
    r.lr = std::stod(f[3]);
    if (f[4] == "none") {
      r.event = ScheduleEvent::kNone;
    } else if (f[4] == "decayed") {
      r.event = ScheduleEvent::kDecayed;
    } else if (f[4] == "terminated") {
      r.event = ScheduleEvent::kTerminated;
    } else {
      throw FormatError("trace: unknown event \"" + f[4] + "\"");
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace pvanet
