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

#ifndef PVANET_KERNELS_HPP_
#define PVANET_KERNELS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "pvanet/tensor.hpp"

namespace pvanet {

struct ConvSpec {
  int64_t in_channels = 1;
  int64_t out_channels = 1;
  int64_t kernel_h = 1;
  int64_t kernel_w = 1;
  int64_t stride = 1;
  int64_t pad = 0;
  bool has_bias = false;
  int64_t groups = 1;

  void check() const;
  Shape weight_shape() const {
    return {out_channels, in_channels / groups, kernel_h, kernel_w};
  }
  int64_t weight_count() const { return weight_shape().size(); }
  bool operator==(const ConvSpec&) const = default;
};

// Max pooling. ceil_mode sizes the output as ceil((H + 2p - k) / s) + 1 with
// windows clipped at the border.
struct PoolSpec {
  int64_t kernel = 3;
  int64_t stride = 2;
  int64_t pad = 0;
  bool ceil_mode = true;
  bool operator==(const PoolSpec&) const = default;
};

// Channel-wise transposed convolution with a fixed bilinear kernel.
struct DeconvSpec {
  int64_t channels = 1;
  int64_t kernel = 4;
  int64_t stride = 2;
  int64_t pad = 1;
  int64_t weight_count() const { return channels * kernel * kernel; }
  bool operator==(const DeconvSpec&) const = default;
};

struct FcSpec {
  int64_t in_features = 1;
  int64_t out_features = 1;
  bool has_bias = true;
  int64_t weight_count() const { return in_features * out_features; }
  bool operator==(const FcSpec&) const = default;
};

struct RoiPoolSpec {
  int64_t pooled_h = 6;
  int64_t pooled_w = 6;
  double spatial_scale = 1.0 / 16.0;
  bool operator==(const RoiPoolSpec&) const = default;
};

struct BatchNormSpec {
  int64_t channels = 1;
  double eps = 1e-5;
  double momentum = 0.99;
  bool operator==(const BatchNormSpec&) const = default;
};

struct ScaleShiftSpec {
  int64_t channels = 1;
  bool operator==(const ScaleShiftSpec&) const = default;
};

// Channel range [begin, end).
struct SliceSpec {
  int64_t begin = 0;
  int64_t end = 1;
  bool operator==(const SliceSpec&) const = default;
};

// ---- Output-extent formulas (shared with static shape inference) ----------

// floor((in + 2*pad - kernel) / stride) + 1; throws if non-positive.
int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t pad,
                        const char* axis);
int64_t pool_out_extent(int64_t in, const PoolSpec& spec, const char* axis);
// (in - 1) * stride - 2 * pad + kernel.
int64_t deconv_out_extent(int64_t in, const DeconvSpec& spec, const char* axis);

Shape conv_output_shape(const Shape& in, const ConvSpec& spec);
Shape pool_output_shape(const Shape& in, const PoolSpec& spec);
Shape deconv_output_shape(const Shape& in, const DeconvSpec& spec);

// ---- Kernels -------------------------------------------------------------
// Every kernel is a pure function of its arguments. Instantiated for float
// (execution) and double (gradient checking).

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              std::span<const T> bias, const ConvSpec& spec);
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& grad_output, const ConvSpec& spec);

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  // Flat input offset of the selected element per output element; -1 when
  // the window was empty.
  std::vector<int64_t> argmax;
};

template <typename T>
PoolResult<T> max_pool2d(const BasicTensor<T>& input, const PoolSpec& spec);
// Routes each output gradient to its recorded argmax.
template <typename T>
BasicTensor<T> max_pool2d_backward(const BasicTensor<T>& grad_output,
                                   std::span<const int64_t> argmax, const Shape& input_shape);

// Taps of the fixed 1-D bilinear kernel, f(t) = 1 - |t + 0.5 - k/2| / (k/2).
std::vector<double> bilinear_taps(int64_t kernel);

template <typename T>
BasicTensor<T> deconv2d_bilinear(const BasicTensor<T>& input, const DeconvSpec& spec);
template <typename T>
BasicTensor<T> deconv2d_bilinear_backward(const BasicTensor<T>& grad_output,
                                          const Shape& input_shape, const DeconvSpec& spec);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> negate(const BasicTensor<T>& input);

// Channel-axis concatenation in argument order.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> parts);
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, int64_t begin, int64_t end);

template <typename T>
BasicTensor<T> eltwise_add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale_shift(const BasicTensor<T>& input, std::span<const T> scale,
                           std::span<const T> shift);

template <typename T>
struct ScaleShiftGrads {
  BasicTensor<T> input;
  std::vector<T> scale;
  std::vector<T> shift;
};

template <typename T>
ScaleShiftGrads<T> scale_shift_backward(const BasicTensor<T>& input, std::span<const T> scale,
                                        const BasicTensor<T>& grad_output);

// Per-channel statistics. `var` is the biased (1/m) sample variance for
// minibatch results and the stored running variance in frozen mode.
template <typename T>
struct BatchNormStats {
  std::vector<T> mean;
  std::vector<T> var;
};

template <typename T>
BasicTensor<T> batchnorm_frozen(const BasicTensor<T>& input, std::span<const T> mean,
                                std::span<const T> var, double eps);
template <typename T>
BasicTensor<T> batchnorm_frozen_backward(const BasicTensor<T>& grad_output,
                                         std::span<const T> var, double eps);

template <typename T>
struct BatchNormResult {
  BasicTensor<T> output;
  BatchNormStats<T> batch;
};

// Normalizes with statistics taken over N, H, W of this minibatch.
template <typename T>
BatchNormResult<T> batchnorm_minibatch(const BasicTensor<T>& input, double eps);
template <typename T>
BasicTensor<T> batchnorm_minibatch_backward(const BasicTensor<T>& input,
                                            const BatchNormStats<T>& batch,
                                            const BasicTensor<T>& grad_output, double eps);

// running = momentum * running + (1 - momentum) * batch. The batch variance is
// Bessel-corrected with the per-channel element count `count`.
template <typename T>
void update_running_stats(BatchNormStats<T>& running, const BatchNormStats<T>& batch,
                          double momentum, int64_t count);

// Frozen BN as an affine map: scale = 1/sqrt(var + eps), shift = -mean * scale.
template <typename T>
void fold_batchnorm(std::span<const T> mean, std::span<const T> var, double eps,
                    std::vector<T>& scale, std::vector<T>& shift);

// Input is flattened per sample to D = C*H*W; weights are (outD, D, 1, 1).
// Output is (N, outD, 1, 1).
template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                               std::span<const T> bias);

template <typename T>
struct FcGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
FcGrads<T> fully_connected_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                    const BasicTensor<T>& grad_output);

// rois is (R, 4, 1, 1) holding (x1, y1, x2, y2) in input-image coordinates.
// The feature map must have batch 1. Output is (R, C, pooled_h, pooled_w).
template <typename T>
PoolResult<T> roi_pool(const BasicTensor<T>& feature, const BasicTensor<T>& rois,
                       const RoiPoolSpec& spec);
template <typename T>
BasicTensor<T> roi_pool_backward(const BasicTensor<T>& grad_output,
                                 std::span<const int64_t> argmax, const Shape& feature_shape);

// Softmax across the channel axis at every (n, h, w).
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_output);

// Number of kernel calls made by this process. Lets callers assert that a
// code path stays static.
uint64_t kernel_invocation_count();

// Worker threads for the heavier kernels. Defaults to PVANET_NUM_THREADS or 1.
// Results do not depend on the thread count.
void set_num_threads(int threads);
int num_threads();

}  // namespace pvanet

#endif  // PVANET_KERNELS_HPP_
