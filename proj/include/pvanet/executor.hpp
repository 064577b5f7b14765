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

#ifndef PVANET_EXECUTOR_HPP_
#define PVANET_EXECUTOR_HPP_

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pvanet/kernels.hpp"
#include "pvanet/network.hpp"
#include "pvanet/weights.hpp"

namespace pvanet {

class ExecutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
using TensorMap = std::map<std::string, BasicTensor<T>>;

// Batch-norm behaviour during a forward pass.
enum class BnMode {
  kFrozen,     // stored running statistics
  kMinibatch,  // statistics of the current batch
};

// Topological forward/backward evaluation of a NetworkSpec.
//
// The executor keeps references to `net` and `params`; both must outlive it.
// Parameter values may change between calls (the trainer updates them in
// place) but their shapes may not.
template <typename T>
class Executor {
 public:
  // Throws ExecutionError listing every missing or misshapen parameter, and
  // SpecError if the network does not validate.
  Executor(const NetworkSpec& net, const ParamMap<T>& params);

  struct Trace {
    TensorMap<T> values;
    std::map<std::string, std::vector<int64_t>> argmax;
    std::map<std::string, BatchNormStats<T>> batch_stats;
    std::vector<size_t> computed;
    BnMode mode = BnMode::kFrozen;
  };

  struct Gradients {
    TensorMap<T> params;
    TensorMap<T> inputs;  // gradients with respect to the fed tensors
  };

  // Evaluates every layer needed for `targets` (defaults to the declared
  // outputs). `feeds` supplies network inputs and may also pre-seed any
  // intermediate layer. With retain=false, intermediates are dropped as soon
  // as their last consumer has run.
  Trace forward(const TensorMap<T>& feeds, const std::vector<std::string>& targets = {},
                BnMode mode = BnMode::kFrozen, bool retain = true) const;

  // Reverse-mode pass seeded by `output_grads` (tensor per target name).
  Gradients backward(const Trace& trace, const TensorMap<T>& output_grads) const;

  const NetworkSpec& net() const { return net_; }

 private:
  const BasicTensor<T>& param(const std::string& layer, ParamRole role) const;

  const NetworkSpec& net_;
  const ParamMap<T>& params_;
  std::vector<size_t> order_;
  std::map<std::string, size_t> index_;
};

extern template class Executor<float>;
extern template class Executor<double>;

// Runs the declared outputs with frozen batch-norm statistics.
TensorMap<float> execute(const NetworkSpec& net, const WeightStore& weights,
                         const TensorMap<float>& inputs);

}  // namespace pvanet

#endif  // PVANET_EXECUTOR_HPP_
