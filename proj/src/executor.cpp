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

#include "pvanet/executor.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace pvanet {

namespace {

template <typename T>
std::span<const T> vec(const BasicTensor<T>& t) {
  return t.data();
}

template <typename T>
void accumulate(TensorMap<T>& grads, const std::string& name, BasicTensor<T> g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, std::move(g));
    return;
  }
  auto dst = it->second.data();
  auto src = g.data();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
BasicTensor<T> vector_tensor(std::vector<T> v) {
  const auto n = static_cast<int64_t>(v.size());
  return BasicTensor<T>(Shape{n, 1, 1, 1}, std::move(v));
}

}  // namespace

template <typename T>
Executor<T>::Executor(const NetworkSpec& net, const ParamMap<T>& params)
    : net_(net), params_(params) {
  if (auto diags = validate(net); !diags.empty()) {
    std::ostringstream os;
    os << "network \"" << net.name << "\" does not validate:";
    for (const auto& d : diags) os << "\n  " << d.layer << ": " << d.message;
    throw SpecError(os.str());
  }
  std::ostringstream problems;
  int count = 0;
  for (const auto& p : required_params(net)) {
    auto it = params.find(p.name);
    if (it == params.end()) {
      problems << "\n  missing weight \"" << p.name << "\" (expected " << p.shape.str() << ")";
      ++count;
    } else if (it->second.shape() != p.shape) {
      problems << "\n  weight \"" << p.name << "\" has shape " << it->second.shape().str()
               << ", expected " << p.shape.str();
      ++count;
    }
  }
  if (count > 0) throw ExecutionError("weights do not match the network:" + problems.str());
  order_ = topological_order(net);
  for (size_t i = 0; i < net.layers.size(); ++i) index_[net.layers[i].name] = i;
}

template <typename T>
const BasicTensor<T>& Executor<T>::param(const std::string& layer, ParamRole role) const {
  return params_.at(param_name(layer, role));
}

template <typename T>
typename Executor<T>::Trace Executor<T>::forward(const TensorMap<T>& feeds,
                                                 const std::vector<std::string>& targets,
                                                 BnMode mode, bool retain) const {
  const std::vector<std::string>& wanted = targets.empty() ? net_.outputs : targets;

  // Mark the layers that must run.
  std::vector<bool> needed(net_.layers.size(), false);
  std::vector<std::string> stack;
  for (const auto& t : wanted) {
    if (feeds.contains(t)) continue;
    if (!index_.contains(t)) {
      if (net_.find_input(t)) throw ExecutionError("network input \"" + t + "\" was not fed");
      throw ExecutionError("unknown target \"" + t + "\"");
    }
    stack.push_back(t);
  }
  while (!stack.empty()) {
    const std::string name = stack.back();
    stack.pop_back();
    const size_t i = index_.at(name);
    if (needed[i]) continue;
    needed[i] = true;
    for (const auto& src : net_.layers[i].inputs) {
      if (feeds.contains(src)) continue;
      if (index_.contains(src)) {
        stack.push_back(src);
      } else {
        throw ExecutionError("network input \"" + src + "\" was not fed (needed by \"" + name + "\")");
      }
    }
  }
  for (const auto& in : net_.inputs) {
    auto it = feeds.find(in.name);
    if (it != feeds.end() && it->second.shape().c != in.shape.c) {
      throw ShapeError("input \"" + in.name + "\": channel (C) axis is " +
                       std::to_string(it->second.shape().c) + ", expected " +
                       std::to_string(in.shape.c));
    }
  }

  // Remaining consumer counts, for releasing intermediates.
  std::map<std::string, int> uses;
  if (!retain) {
    for (size_t i : order_) {
      if (!needed[i]) continue;
      for (const auto& src : net_.layers[i].inputs) ++uses[src];
    }
  }
  const std::set<std::string> keep(wanted.begin(), wanted.end());

  Trace trace;
  trace.mode = mode;
  trace.values = feeds;
  for (size_t i : order_) {
    if (!needed[i]) continue;
    const LayerSpec& l = net_.layers[i];
    auto in = [&](size_t k) -> const BasicTensor<T>& { return trace.values.at(l.inputs[k]); };
    BasicTensor<T> out;
    switch (l.kind) {
      case LayerKind::kConv: {
        const auto& s = l.get<ConvSpec>();
        std::span<const T> bias;
        if (s.has_bias) bias = vec(param(l.name, ParamRole::kBias));
        out = conv2d_forward(in(0), param(l.name, ParamRole::kWeight), bias, s);
        break;
      }
      case LayerKind::kMaxPool: {
        auto r = max_pool2d(in(0), l.get<PoolSpec>());
        out = std::move(r.output);
        trace.argmax[l.name] = std::move(r.argmax);
        break;
      }
      case LayerKind::kDeconvBilinear:
        out = deconv2d_bilinear(in(0), l.get<DeconvSpec>());
        break;
      case LayerKind::kRelu:
        out = relu(in(0));
        break;
      case LayerKind::kNegate:
        out = negate(in(0));
        break;
      case LayerKind::kConcat: {
        std::vector<const BasicTensor<T>*> parts;
        for (size_t k = 0; k < l.inputs.size(); ++k) parts.push_back(&in(k));
        out = concat_channels<T>(std::span<const BasicTensor<T>* const>(parts));
        break;
      }
      case LayerKind::kScaleShift:
        out = scale_shift(in(0), vec(param(l.name, ParamRole::kScale)),
                          vec(param(l.name, ParamRole::kShift)));
        break;
      case LayerKind::kBatchNorm: {
        const auto& s = l.get<BatchNormSpec>();
        if (mode == BnMode::kMinibatch) {
          auto r = batchnorm_minibatch(in(0), s.eps);
          out = std::move(r.output);
          trace.batch_stats[l.name] = std::move(r.batch);
        } else {
          out = batchnorm_frozen(in(0), vec(param(l.name, ParamRole::kMean)),
                                 vec(param(l.name, ParamRole::kVar)), s.eps);
        }
        break;
      }
      case LayerKind::kFullyConnected: {
        const auto& s = l.get<FcSpec>();
        std::span<const T> bias;
        if (s.has_bias) bias = vec(param(l.name, ParamRole::kBias));
        out = fully_connected(in(0), param(l.name, ParamRole::kWeight), bias);
        break;
      }
      case LayerKind::kRoiPool: {
        auto r = roi_pool(in(0), in(1), l.get<RoiPoolSpec>());
        out = std::move(r.output);
        trace.argmax[l.name] = std::move(r.argmax);
        break;
      }
      case LayerKind::kSoftmax:
        out = softmax(in(0));
        break;
      case LayerKind::kEltwiseAdd: {
        out = in(0);
        for (size_t k = 1; k < l.inputs.size(); ++k) out = eltwise_add(out, in(k));
        break;
      }
      case LayerKind::kSliceChannels: {
        const auto& s = l.get<SliceSpec>();
        out = slice_channels(in(0), s.begin, s.end);
        break;
      }
    }
    trace.values[l.name] = std::move(out);
    trace.computed.push_back(i);
    if (!retain) {
      for (const auto& src : l.inputs) {
        if (--uses[src] == 0 && !keep.contains(src) && !feeds.contains(src)) trace.values.erase(src);
      }
    }
  }
  return trace;
}

template <typename T>
typename Executor<T>::Gradients Executor<T>::backward(const Trace& trace,
                                                      const TensorMap<T>& output_grads) const {
  TensorMap<T> grads;
  for (const auto& [name, g] : output_grads) {
    auto it = trace.values.find(name);
    if (it == trace.values.end()) throw ExecutionError("no forward value for gradient seed \"" + name + "\"");
    if (it->second.shape() != g.shape()) {
      throw ShapeError("gradient seed \"" + name + "\" has shape " + g.shape().str() +
                       ", forward value is " + it->second.shape().str());
    }
    accumulate(grads, name, g);
  }
  Gradients result;
  auto value = [&](const std::string& name) -> const BasicTensor<T>& {
    auto it = trace.values.find(name);
    if (it == trace.values.end()) {
      throw ExecutionError("backward needs \"" + name + "\" but the trace did not retain it");
    }
    return it->second;
  };

  for (auto it = trace.computed.rbegin(); it != trace.computed.rend(); ++it) {
    const LayerSpec& l = net_.layers[*it];
    auto git = grads.find(l.name);
    if (git == grads.end()) continue;
    const BasicTensor<T> g = std::move(git->second);
    grads.erase(git);
    const auto& src = l.inputs;
    switch (l.kind) {
      case LayerKind::kConv: {
        const auto& s = l.get<ConvSpec>();
        auto cg = conv2d_backward(value(src[0]), param(l.name, ParamRole::kWeight), g, s);
        accumulate(grads, src[0], std::move(cg.input));
        accumulate(result.params, param_name(l.name, ParamRole::kWeight), std::move(cg.weights));
        if (s.has_bias) {
          accumulate(result.params, param_name(l.name, ParamRole::kBias), vector_tensor(std::move(cg.bias)));
        }
        break;
      }
      case LayerKind::kMaxPool:
        accumulate(grads, src[0], max_pool2d_backward<T>(g, trace.argmax.at(l.name), value(src[0]).shape()));
        break;
      case LayerKind::kDeconvBilinear:
        accumulate(grads, src[0],
                   deconv2d_bilinear_backward<T>(g, value(src[0]).shape(), l.get<DeconvSpec>()));
        break;
      case LayerKind::kRelu:
        accumulate(grads, src[0], relu_backward(value(src[0]), g));
        break;
      case LayerKind::kNegate:
        accumulate(grads, src[0], negate(g));
        break;
      case LayerKind::kConcat: {
        int64_t c0 = 0;
        for (const auto& s : src) {
          const int64_t c = value(s).shape().c;
          accumulate(grads, s, slice_channels(g, c0, c0 + c));
          c0 += c;
        }
        break;
      }
      case LayerKind::kScaleShift: {
        auto sg = scale_shift_backward(value(src[0]), vec(param(l.name, ParamRole::kScale)), g);
        accumulate(grads, src[0], std::move(sg.input));
        accumulate(result.params, param_name(l.name, ParamRole::kScale), vector_tensor(std::move(sg.scale)));
        accumulate(result.params, param_name(l.name, ParamRole::kShift), vector_tensor(std::move(sg.shift)));
        break;
      }
      case LayerKind::kBatchNorm: {
        const auto& s = l.get<BatchNormSpec>();
        if (trace.mode == BnMode::kMinibatch) {
          accumulate(grads, src[0],
                     batchnorm_minibatch_backward(value(src[0]), trace.batch_stats.at(l.name), g, s.eps));
        } else {
          accumulate(grads, src[0], batchnorm_frozen_backward(g, vec(param(l.name, ParamRole::kVar)), s.eps));
        }
        break;
      }
      case LayerKind::kFullyConnected: {
        const auto& s = l.get<FcSpec>();
        auto fg = fully_connected_backward(value(src[0]), param(l.name, ParamRole::kWeight), g);
        accumulate(grads, src[0], fg.input.reshaped(value(src[0]).shape()));
        accumulate(result.params, param_name(l.name, ParamRole::kWeight), std::move(fg.weights));
        if (s.has_bias) {
          accumulate(result.params, param_name(l.name, ParamRole::kBias), vector_tensor(std::move(fg.bias)));
        }
        break;
      }
      case LayerKind::kRoiPool:
        // RoI coordinates are not differentiated.
        accumulate(grads, src[0], roi_pool_backward<T>(g, trace.argmax.at(l.name), value(src[0]).shape()));
        break;
      case LayerKind::kSoftmax:
        accumulate(grads, src[0], softmax_backward(trace.values.at(l.name), g));
        break;
      case LayerKind::kEltwiseAdd:
        for (const auto& s : src) accumulate(grads, s, g);
        break;
      case LayerKind::kSliceChannels: {
        const auto& s = l.get<SliceSpec>();
        const Shape in_shape = value(src[0]).shape();
        BasicTensor<T> full(in_shape);
        const int64_t plane = in_shape.spatial();
        for (int64_t n = 0; n < in_shape.n; ++n) {
          std::copy(g.plane(n, 0), g.plane(n, 0) + (s.end - s.begin) * plane, full.plane(n, s.begin));
        }
        accumulate(grads, src[0], std::move(full));
        break;
      }
    }
  }
  // Whatever is left belongs to fed tensors.
  for (auto& [name, g] : grads) {
    if (!index_.contains(name) || std::find(trace.computed.begin(), trace.computed.end(), index_.at(name)) == trace.computed.end()) {
      result.inputs.emplace(name, std::move(g));
    }
  }
  return result;
}

template class Executor<float>;
template class Executor<double>;

TensorMap<float> execute(const NetworkSpec& net, const WeightStore& weights,
                         const TensorMap<float>& inputs) {
  Executor<float> exec(net, weights.entries());
  auto trace = exec.forward(inputs, net.outputs, BnMode::kFrozen, false);
  TensorMap<float> out;
  for (const auto& name : net.outputs) out.emplace(name, std::move(trace.values.at(name)));
  return out;
}

}  // namespace pvanet
