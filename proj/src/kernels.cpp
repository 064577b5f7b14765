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

#include "pvanet/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>

namespace pvanet {

namespace {

std::atomic<uint64_t> g_invocations{0};

int default_threads() {
  if (const char* env = std::getenv("PVANET_NUM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

std::atomic<int> g_threads{default_threads()};

void count_call() { g_invocations.fetch_add(1, std::memory_order_relaxed); }

// Splits [0, n) into contiguous chunks, one per worker. Each index is owned by
// exactly one worker so per-element reduction order never changes.
template <typename Fn>
void parallel_for(int64_t n, Fn&& fn) {
  const int threads = std::min<int64_t>(g_threads.load(), std::max<int64_t>(n, 1));
  if (threads <= 1) {
    fn(int64_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  const int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int64_t lo = t * chunk;
    const int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
}

// C[M x N] (+)= A[M x K] * B[K x N], all row-major with the given leading
// dimensions. Reduction over K runs in ascending order for every element.
template <typename T>
void gemm(int64_t m, int64_t n, int64_t k, const T* a, int64_t lda, const T* b, int64_t ldb,
          T* c, int64_t ldc, bool accumulate) {
  constexpr int64_t kColBlock = 256;
  parallel_for(m, [&](int64_t row_lo, int64_t row_hi) {
    if (!accumulate) {
      for (int64_t i = row_lo; i < row_hi; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
    }
    for (int64_t j0 = 0; j0 < n; j0 += kColBlock) {
      const int64_t jn = std::min(kColBlock, n - j0);
      int64_t i = row_lo;
      for (; i + 4 <= row_hi; i += 4) {
        T* c0 = c + i * ldc + j0;
        T* c1 = c0 + ldc;
        T* c2 = c1 + ldc;
        T* c3 = c2 + ldc;
        for (int64_t p = 0; p < k; ++p) {
          const T a0 = a[i * lda + p];
          const T a1 = a[(i + 1) * lda + p];
          const T a2 = a[(i + 2) * lda + p];
          const T a3 = a[(i + 3) * lda + p];
          const T* brow = b + p * ldb + j0;
          for (int64_t j = 0; j < jn; ++j) {
            const T bv = brow[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < row_hi; ++i) {
        T* ci = c + i * ldc + j0;
        for (int64_t p = 0; p < k; ++p) {
          const T av = a[i * lda + p];
          const T* brow = b + p * ldb + j0;
          for (int64_t j = 0; j < jn; ++j) ci[j] += av * brow[j];
        }
      }
    }
  });
}

template <typename T>
std::vector<T> transpose(const T* src, int64_t rows, int64_t cols) {
  std::vector<T> out(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

// Unrolls one (n, group) slice of the input into [K x P] columns where
// K = cin_g * kh * kw and P = out_h * out_w.
template <typename T>
void im2col(const T* in, int64_t cin_g, int64_t h, int64_t w, const ConvSpec& s, int64_t oh,
            int64_t ow, T* col) {
  for (int64_t c = 0; c < cin_g; ++c) {
    const T* plane = in + c * h * w;
    for (int64_t ky = 0; ky < s.kernel_h; ++ky) {
      for (int64_t kx = 0; kx < s.kernel_w; ++kx) {
        T* dst = col + ((c * s.kernel_h + ky) * s.kernel_w + kx) * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t iy = y * s.stride - s.pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst + y * ow, dst + (y + 1) * ow, T(0));
            continue;
          }
          for (int64_t x = 0; x < ow; ++x) {
            const int64_t ix = x * s.stride - s.pad + kx;
            dst[y * ow + x] = (ix >= 0 && ix < w) ? plane[iy * w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int64_t cin_g, int64_t h, int64_t w, const ConvSpec& s, int64_t oh,
            int64_t ow, T* out) {
  for (int64_t c = 0; c < cin_g; ++c) {
    T* plane = out + c * h * w;
    for (int64_t ky = 0; ky < s.kernel_h; ++ky) {
      for (int64_t kx = 0; kx < s.kernel_w; ++kx) {
        const T* src = col + ((c * s.kernel_h + ky) * s.kernel_w + kx) * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t iy = y * s.stride - s.pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int64_t x = 0; x < ow; ++x) {
            const int64_t ix = x * s.stride - s.pad + kx;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += src[y * ow + x];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvSpec& s) {
  return s.kernel_h == 1 && s.kernel_w == 1 && s.stride == 1 && s.pad == 0;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

void check_same_nhw(const Shape& a, const Shape& b, const char* what) {
  if (a.n != b.n) throw ShapeError(std::string(what) + ": batch (N) mismatch " + a.str() + " vs " + b.str());
  if (a.h != b.h) throw ShapeError(std::string(what) + ": height (H) mismatch " + a.str() + " vs " + b.str());
  if (a.w != b.w) throw ShapeError(std::string(what) + ": width (W) mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

uint64_t kernel_invocation_count() { return g_invocations.load(); }

void set_num_threads(int threads) { g_threads.store(std::max(1, threads)); }
int num_threads() { return g_threads.load(); }

void ConvSpec::check() const {
  require(in_channels > 0, "conv: in_channels must be positive");
  require(out_channels > 0, "conv: out_channels must be positive");
  require(kernel_h > 0 && kernel_w > 0, "conv: kernel extent must be positive");
  require(stride > 0, "conv: stride must be positive");
  require(pad >= 0, "conv: pad must be non-negative");
  require(groups > 0, "conv: groups must be positive");
  require(in_channels % groups == 0, "conv: in_channels (C) not divisible by groups");
  require(out_channels % groups == 0, "conv: out_channels not divisible by groups");
}

int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t pad,
                        const char* axis) {
  const int64_t span = in + 2 * pad - kernel;
  if (span < 0) {
    throw ShapeError(std::string("kernel ") + std::to_string(kernel) + " larger than padded " +
                     axis + " extent " + std::to_string(in + 2 * pad));
  }
  return span / stride + 1;
}

int64_t pool_out_extent(int64_t in, const PoolSpec& spec, const char* axis) {
  const int64_t span = in + 2 * spec.pad - spec.kernel;
  if (in < 1 || span < 0) {
    throw ShapeError(std::string("pool kernel ") + std::to_string(spec.kernel) +
                     " larger than padded " + axis + " extent " + std::to_string(in + 2 * spec.pad));
  }
  int64_t out = spec.ceil_mode ? (span + spec.stride - 1) / spec.stride + 1 : span / spec.stride + 1;
  // The last window must start inside the (left-padded) input.
  if (spec.ceil_mode && spec.pad > 0 && (out - 1) * spec.stride >= in + spec.pad) --out;
  return out;
}

int64_t deconv_out_extent(int64_t in, const DeconvSpec& spec, const char* axis) {
  if (in < 1) throw ShapeError(std::string("deconv: empty ") + axis + " extent");
  const int64_t out = (in - 1) * spec.stride - 2 * spec.pad + spec.kernel;
  if (out < 1) throw ShapeError(std::string("deconv: non-positive output ") + axis);
  return out;
}

Shape conv_output_shape(const Shape& in, const ConvSpec& spec) {
  spec.check();
  if (in.c != spec.in_channels) {
    throw ShapeError("conv: input channel (C) axis is " + std::to_string(in.c) + ", expected " +
                     std::to_string(spec.in_channels));
  }
  return {in.n, spec.out_channels,
          conv_out_extent(in.h, spec.kernel_h, spec.stride, spec.pad, "height (H)"),
          conv_out_extent(in.w, spec.kernel_w, spec.stride, spec.pad, "width (W)")};
}

Shape pool_output_shape(const Shape& in, const PoolSpec& spec) {
  return {in.n, in.c, pool_out_extent(in.h, spec, "height (H)"),
          pool_out_extent(in.w, spec, "width (W)")};
}

Shape deconv_output_shape(const Shape& in, const DeconvSpec& spec) {
  if (in.c != spec.channels) {
    throw ShapeError("deconv: input channel (C) axis is " + std::to_string(in.c) +
                     ", expected " + std::to_string(spec.channels));
  }
  return {in.n, in.c, deconv_out_extent(in.h, spec, "height (H)"),
          deconv_out_extent(in.w, spec, "width (W)")};
}

// ---- convolution ---------------------------------------------------------

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              std::span<const T> bias, const ConvSpec& spec) {
  count_call();
  const Shape out_shape = conv_output_shape(input.shape(), spec);
  if (weights.shape() != spec.weight_shape()) {
    throw ShapeError("conv: weight shape " + weights.shape().str() + " does not match " +
                     spec.weight_shape().str());
  }
  if (spec.has_bias && static_cast<int64_t>(bias.size()) != spec.out_channels) {
    throw ShapeError("conv: bias length does not match out_channels");
  }
  const Shape& in = input.shape();
  BasicTensor<T> out(out_shape);
  const int64_t cin_g = spec.in_channels / spec.groups;
  const int64_t cout_g = spec.out_channels / spec.groups;
  const int64_t kdim = cin_g * spec.kernel_h * spec.kernel_w;
  const int64_t pix = out_shape.spatial();
  const bool pointwise = is_pointwise(spec);
  std::vector<T> col(pointwise ? 0 : static_cast<size_t>(kdim * pix));
  for (int64_t n = 0; n < in.n; ++n) {
    for (int64_t g = 0; g < spec.groups; ++g) {
      const T* src = input.plane(n, g * cin_g);
      if (!pointwise) {
        im2col(src, cin_g, in.h, in.w, spec, out_shape.h, out_shape.w, col.data());
        src = col.data();
      }
      T* dst = out.plane(n, g * cout_g);
      if (spec.has_bias) {
        for (int64_t oc = 0; oc < cout_g; ++oc)
          std::fill(dst + oc * pix, dst + (oc + 1) * pix, bias[g * cout_g + oc]);
      }
      gemm<T>(cout_g, pix, kdim, weights.raw() + g * cout_g * kdim, kdim, src, pix, dst, pix,
              spec.has_bias);
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& grad_output, const ConvSpec& spec) {
  count_call();
  const Shape out_shape = conv_output_shape(input.shape(), spec);
  if (grad_output.shape() != out_shape) {
    throw ShapeError("conv backward: grad_output " + grad_output.shape().str() +
                     " does not match forward output " + out_shape.str());
  }
  if (weights.shape() != spec.weight_shape()) {
    throw ShapeError("conv backward: weight shape mismatch");
  }
  const Shape& in = input.shape();
  const int64_t cin_g = spec.in_channels / spec.groups;
  const int64_t cout_g = spec.out_channels / spec.groups;
  const int64_t kdim = cin_g * spec.kernel_h * spec.kernel_w;
  const int64_t pix = out_shape.spatial();
  const bool pointwise = is_pointwise(spec);

  ConvGrads<T> grads{BasicTensor<T>(in), BasicTensor<T>(weights.shape()),
                     std::vector<T>(spec.has_bias ? spec.out_channels : 0, T(0))};
  std::vector<T> col(static_cast<size_t>(kdim * pix));
  std::vector<T> grad_col(static_cast<size_t>(kdim * pix));
  for (int64_t g = 0; g < spec.groups; ++g) {
    const auto w_t = transpose(weights.raw() + g * cout_g * kdim, cout_g, kdim);
    for (int64_t n = 0; n < in.n; ++n) {
      const T* src = input.plane(n, g * cin_g);
      if (pointwise) {
        std::copy(src, src + kdim * pix, col.begin());
      } else {
        im2col(src, cin_g, in.h, in.w, spec, out_shape.h, out_shape.w, col.data());
      }
      const T* gout = grad_output.plane(n, g * cout_g);
      // dW += dY * col^T
      const auto col_t = transpose(col.data(), kdim, pix);
      gemm<T>(cout_g, kdim, pix, gout, pix, col_t.data(), kdim,
              grads.weights.raw() + g * cout_g * kdim, kdim, true);
      // dcol = W^T * dY
      gemm<T>(kdim, pix, cout_g, w_t.data(), cout_g, gout, pix, grad_col.data(), pix, false);
      T* gin = grads.input.plane(n, g * cin_g);
      if (pointwise) {
        for (int64_t i = 0; i < kdim * pix; ++i) gin[i] += grad_col[i];
      } else {
        col2im(grad_col.data(), cin_g, in.h, in.w, spec, out_shape.h, out_shape.w, gin);
      }
      if (spec.has_bias) {
        for (int64_t oc = 0; oc < cout_g; ++oc) {
          T acc = 0;
          for (int64_t p = 0; p < pix; ++p) acc += gout[oc * pix + p];
          grads.bias[g * cout_g + oc] += acc;
        }
      }
    }
  }
  return grads;
}

// ---- pooling -------------------------------------------------------------

template <typename T>
PoolResult<T> max_pool2d(const BasicTensor<T>& input, const PoolSpec& spec) {
  count_call();
  const Shape& in = input.shape();
  const Shape os = pool_output_shape(in, spec);
  PoolResult<T> result{BasicTensor<T>(os), std::vector<int64_t>(static_cast<size_t>(os.size()), -1)};
  for (int64_t n = 0; n < in.n; ++n) {
    for (int64_t c = 0; c < in.c; ++c) {
      const int64_t base = input.offset(n, c, 0, 0);
      for (int64_t y = 0; y < os.h; ++y) {
        const int64_t y0 = std::max<int64_t>(y * spec.stride - spec.pad, 0);
        const int64_t y1 = std::min<int64_t>(y * spec.stride - spec.pad + spec.kernel, in.h);
        for (int64_t x = 0; x < os.w; ++x) {
          const int64_t x0 = std::max<int64_t>(x * spec.stride - spec.pad, 0);
          const int64_t x1 = std::min<int64_t>(x * spec.stride - spec.pad + spec.kernel, in.w);
          const int64_t o = result.output.offset(n, c, y, x);
          int64_t best = -1;
          T best_v = -std::numeric_limits<T>::infinity();
          for (int64_t iy = y0; iy < y1; ++iy) {
            for (int64_t ix = x0; ix < x1; ++ix) {
              const int64_t idx = base + iy * in.w + ix;
              if (best < 0 || input[idx] > best_v) {
                best = idx;
                best_v = input[idx];
              }
            }
          }
          result.output[o] = best < 0 ? T(0) : best_v;
          result.argmax[o] = best;
        }
      }
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> max_pool2d_backward(const BasicTensor<T>& grad_output,
                                   std::span<const int64_t> argmax, const Shape& input_shape) {
  count_call();
  if (static_cast<int64_t>(argmax.size()) != grad_output.size()) {
    throw ShapeError("max_pool backward: argmax length does not match grad_output");
  }
  BasicTensor<T> grad(input_shape);
  for (int64_t i = 0; i < grad_output.size(); ++i) {
    if (argmax[i] >= 0) grad[argmax[i]] += grad_output[i];
  }
  return grad;
}

// ---- bilinear deconvolution ----------------------------------------------

std::vector<double> bilinear_taps(int64_t kernel) {
  std::vector<double> taps(static_cast<size_t>(kernel));
  const double half = static_cast<double>(kernel) / 2.0;
  for (int64_t t = 0; t < kernel; ++t) {
    taps[t] = 1.0 - std::abs(static_cast<double>(t) + 0.5 - half) / half;
  }
  return taps;
}

template <typename T>
BasicTensor<T> deconv2d_bilinear(const BasicTensor<T>& input, const DeconvSpec& spec) {
  count_call();
  const Shape& in = input.shape();
  const Shape os = deconv_output_shape(in, spec);
  const auto taps = bilinear_taps(spec.kernel);
  BasicTensor<T> out(os);
  for (int64_t n = 0; n < in.n; ++n) {
    for (int64_t c = 0; c < in.c; ++c) {
      const T* src = input.plane(n, c);
      T* dst = out.plane(n, c);
      for (int64_t iy = 0; iy < in.h; ++iy) {
        for (int64_t ix = 0; ix < in.w; ++ix) {
          const T v = src[iy * in.w + ix];
          for (int64_t ky = 0; ky < spec.kernel; ++ky) {
            const int64_t oy = iy * spec.stride - spec.pad + ky;
            if (oy < 0 || oy >= os.h) continue;
            for (int64_t kx = 0; kx < spec.kernel; ++kx) {
              const int64_t ox = ix * spec.stride - spec.pad + kx;
              if (ox < 0 || ox >= os.w) continue;
              dst[oy * os.w + ox] += v * static_cast<T>(taps[ky] * taps[kx]);
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> deconv2d_bilinear_backward(const BasicTensor<T>& grad_output,
                                          const Shape& input_shape, const DeconvSpec& spec) {
  count_call();
  const Shape os = deconv_output_shape(input_shape, spec);
  if (grad_output.shape() != os) throw ShapeError("deconv backward: grad_output shape mismatch");
  const auto taps = bilinear_taps(spec.kernel);
  BasicTensor<T> grad(input_shape);
  for (int64_t n = 0; n < input_shape.n; ++n) {
    for (int64_t c = 0; c < input_shape.c; ++c) {
      const T* src = grad_output.plane(n, c);
      T* dst = grad.plane(n, c);
      for (int64_t iy = 0; iy < input_shape.h; ++iy) {
        for (int64_t ix = 0; ix < input_shape.w; ++ix) {
          T acc = 0;
          for (int64_t ky = 0; ky < spec.kernel; ++ky) {
            const int64_t oy = iy * spec.stride - spec.pad + ky;
            if (oy < 0 || oy >= os.h) continue;
            for (int64_t kx = 0; kx < spec.kernel; ++kx) {
              const int64_t ox = ix * spec.stride - spec.pad + kx;
              if (ox < 0 || ox >= os.w) continue;
              acc += src[oy * os.w + ox] * static_cast<T>(taps[ky] * taps[kx]);
            }
          }
          dst[iy * input_shape.w + ix] = acc;
        }
      }
    }
  }
  return grad;
}

// ---- elementwise ---------------------------------------------------------

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  count_call();
  BasicTensor<T> out(input.shape());
  for (int64_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
  count_call();
  if (input.shape() != grad_output.shape()) throw ShapeError("relu backward: shape mismatch");
  BasicTensor<T> grad(input.shape());
  for (int64_t i = 0; i < input.size(); ++i) grad[i] = input[i] > T(0) ? grad_output[i] : T(0);
  return grad;
}

template <typename T>
BasicTensor<T> negate(const BasicTensor<T>& input) {
  count_call();
  BasicTensor<T> out(input.shape());
  for (int64_t i = 0; i < input.size(); ++i) out[i] = -input[i];
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> parts) {
  count_call();
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape first = parts.front()->shape();
  int64_t channels = 0;
  for (const auto* p : parts) {
    check_same_nhw(first, p->shape(), "concat");
    channels += p->shape().c;
  }
  BasicTensor<T> out(Shape{first.n, channels, first.h, first.w});
  const int64_t plane = first.spatial();
  for (int64_t n = 0; n < first.n; ++n) {
    int64_t c0 = 0;
    for (const auto* p : parts) {
      const int64_t cn = p->shape().c;
      std::copy(p->plane(n, 0), p->plane(n, 0) + cn * plane, out.plane(n, c0));
      c0 += cn;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const BasicTensor<T>* parts[] = {&a, &b};
  return concat_channels<T>(std::span<const BasicTensor<T>* const>(parts));
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, int64_t begin, int64_t end) {
  count_call();
  const Shape& in = input.shape();
  if (begin < 0 || end > in.c || begin >= end) {
    throw ShapeError("slice: channel range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside C=" + std::to_string(in.c));
  }
  BasicTensor<T> out(Shape{in.n, end - begin, in.h, in.w});
  const int64_t plane = in.spatial();
  for (int64_t n = 0; n < in.n; ++n) {
    std::copy(input.plane(n, begin), input.plane(n, begin) + (end - begin) * plane, out.plane(n, 0));
  }
  return out;
}

template <typename T>
BasicTensor<T> eltwise_add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  count_call();
  if (a.shape() != b.shape()) {
    if (a.shape().c != b.shape().c) throw ShapeError("eltwise_add: channel (C) mismatch " + a.shape().str() + " vs " + b.shape().str());
    check_same_nhw(a.shape(), b.shape(), "eltwise_add");
  }
  BasicTensor<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
BasicTensor<T> scale_shift(const BasicTensor<T>& input, std::span<const T> scale,
                           std::span<const T> shift) {
  count_call();
  const Shape& s = input.shape();
  if (static_cast<int64_t>(scale.size()) != s.c || static_cast<int64_t>(shift.size()) != s.c) {
    throw ShapeError("scale_shift: vectors must have length C=" + std::to_string(s.c));
  }
  BasicTensor<T> out(s);
  const int64_t plane = s.spatial();
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t c = 0; c < s.c; ++c) {
      const T* src = input.plane(n, c);
      T* dst = out.plane(n, c);
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * scale[c] + shift[c];
    }
  }
  return out;
}

template <typename T>
ScaleShiftGrads<T> scale_shift_backward(const BasicTensor<T>& input, std::span<const T> scale,
                                        const BasicTensor<T>& grad_output) {
  count_call();
  const Shape& s = input.shape();
  if (grad_output.shape() != s) throw ShapeError("scale_shift backward: shape mismatch");
  ScaleShiftGrads<T> g{BasicTensor<T>(s), std::vector<T>(s.c, T(0)), std::vector<T>(s.c, T(0))};
  const int64_t plane = s.spatial();
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t c = 0; c < s.c; ++c) {
      const T* x = input.plane(n, c);
      const T* gy = grad_output.plane(n, c);
      T* gx = g.input.plane(n, c);
      T gs = 0, gb = 0;
      for (int64_t i = 0; i < plane; ++i) {
        gx[i] = gy[i] * scale[c];
        gs += gy[i] * x[i];
        gb += gy[i];
      }
      g.scale[c] += gs;
      g.shift[c] += gb;
    }
  }
  return g;
}

// ---- batch normalization -------------------------------------------------

template <typename T>
BasicTensor<T> batchnorm_frozen(const BasicTensor<T>& input, std::span<const T> mean,
                                std::span<const T> var, double eps) {
  count_call();
  const Shape& s = input.shape();
  if (static_cast<int64_t>(mean.size()) != s.c || static_cast<int64_t>(var.size()) != s.c) {
    throw ShapeError("batchnorm: statistics must have length C=" + std::to_string(s.c));
  }
  BasicTensor<T> out(s);
  const int64_t plane = s.spatial();
  for (int64_t c = 0; c < s.c; ++c) {
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[c]) + eps));
    for (int64_t n = 0; n < s.n; ++n) {
      const T* src = input.plane(n, c);
      T* dst = out.plane(n, c);
      for (int64_t i = 0; i < plane; ++i) dst[i] = (src[i] - mean[c]) * inv;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> batchnorm_frozen_backward(const BasicTensor<T>& grad_output,
                                         std::span<const T> var, double eps) {
  count_call();
  const Shape& s = grad_output.shape();
  BasicTensor<T> grad(s);
  const int64_t plane = s.spatial();
  for (int64_t c = 0; c < s.c; ++c) {
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[c]) + eps));
    for (int64_t n = 0; n < s.n; ++n) {
      const T* src = grad_output.plane(n, c);
      T* dst = grad.plane(n, c);
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * inv;
    }
  }
  return grad;
}

template <typename T>
BatchNormResult<T> batchnorm_minibatch(const BasicTensor<T>& input, double eps) {
  count_call();
  const Shape& s = input.shape();
  const int64_t plane = s.spatial();
  const int64_t count = s.n * plane;
  BatchNormResult<T> r{BasicTensor<T>(s), {std::vector<T>(s.c), std::vector<T>(s.c)}};
  for (int64_t c = 0; c < s.c; ++c) {
    double sum = 0;
    for (int64_t n = 0; n < s.n; ++n) {
      const T* src = input.plane(n, c);
      for (int64_t i = 0; i < plane; ++i) sum += src[i];
    }
    const double mean = count > 0 ? sum / count : 0.0;
    double sq = 0;
    for (int64_t n = 0; n < s.n; ++n) {
      const T* src = input.plane(n, c);
      for (int64_t i = 0; i < plane; ++i) sq += (src[i] - mean) * (src[i] - mean);
    }
    const double var = count > 0 ? sq / count : 0.0;
    r.batch.mean[c] = static_cast<T>(mean);
    r.batch.var[c] = static_cast<T>(var);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t n = 0; n < s.n; ++n) {
      const T* src = input.plane(n, c);
      T* dst = r.output.plane(n, c);
      for (int64_t i = 0; i < plane; ++i) dst[i] = static_cast<T>((src[i] - mean) * inv);
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> batchnorm_minibatch_backward(const BasicTensor<T>& input,
                                            const BatchNormStats<T>& batch,
                                            const BasicTensor<T>& grad_output, double eps) {
  count_call();
  const Shape& s = input.shape();
  if (grad_output.shape() != s) throw ShapeError("batchnorm backward: shape mismatch");
  const int64_t plane = s.spatial();
  const double m = static_cast<double>(s.n * plane);
  BasicTensor<T> grad(s);
  for (int64_t c = 0; c < s.c; ++c) {
    const double mean = batch.mean[c];
    const double inv = 1.0 / std::sqrt(static_cast<double>(batch.var[c]) + eps);
    double sum_g = 0, sum_gx = 0;
    for (int64_t n = 0; n < s.n; ++n) {
      const T* x = input.plane(n, c);
      const T* g = grad_output.plane(n, c);
      for (int64_t i = 0; i < plane; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * (x[i] - mean) * inv;
      }
    }
    for (int64_t n = 0; n < s.n; ++n) {
      const T* x = input.plane(n, c);
      const T* g = grad_output.plane(n, c);
      T* dx = grad.plane(n, c);
      for (int64_t i = 0; i < plane; ++i) {
        const double xhat = (x[i] - mean) * inv;
        dx[i] = static_cast<T>(inv / m * (m * g[i] - sum_g - xhat * sum_gx));
      }
    }
  }
  return grad;
}

template <typename T>
void update_running_stats(BatchNormStats<T>& running, const BatchNormStats<T>& batch,
                          double momentum, int64_t count) {
  const double bessel = count > 1 ? static_cast<double>(count) / (count - 1) : 1.0;
  for (size_t c = 0; c < running.mean.size(); ++c) {
    running.mean[c] = static_cast<T>(momentum * running.mean[c] + (1 - momentum) * batch.mean[c]);
    running.var[c] =
        static_cast<T>(momentum * running.var[c] + (1 - momentum) * batch.var[c] * bessel);
  }
}

template <typename T>
void fold_batchnorm(std::span<const T> mean, std::span<const T> var, double eps,
                    std::vector<T>& scale, std::vector<T>& shift) {
  scale.resize(mean.size());
  shift.resize(mean.size());
  for (size_t c = 0; c < mean.size(); ++c) {
    const double s = 1.0 / std::sqrt(static_cast<double>(var[c]) + eps);
    scale[c] = static_cast<T>(s);
    shift[c] = static_cast<T>(-mean[c] * s);
  }
}

// ---- fully connected -----------------------------------------------------

template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                               std::span<const T> bias) {
  count_call();
  const int64_t n = input.shape().n;
  const int64_t d = input.shape().c * input.shape().spatial();
  const int64_t out_d = weights.shape().n;
  if (weights.shape().c * weights.shape().spatial() != d) {
    throw ShapeError("fully_connected: input feature axis D=" + std::to_string(d) +
                     " does not match weights " + weights.shape().str());
  }
  if (!bias.empty() && static_cast<int64_t>(bias.size()) != out_d) {
    throw ShapeError("fully_connected: bias length does not match output features");
  }
  BasicTensor<T> out(Shape{n, out_d, 1, 1});
  if (!bias.empty()) {
    for (int64_t i = 0; i < n; ++i) std::copy(bias.begin(), bias.end(), out.raw() + i * out_d);
  }
  // out[N x outD] = X[N x D] * W^T[D x outD]
  const auto w_t = transpose(weights.raw(), out_d, d);
  gemm<T>(n, out_d, d, input.raw(), d, w_t.data(), out_d, out.raw(), out_d, !bias.empty());
  return out;
}

template <typename T>
FcGrads<T> fully_connected_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                    const BasicTensor<T>& grad_output) {
  count_call();
  const int64_t n = input.shape().n;
  const int64_t d = input.shape().c * input.shape().spatial();
  const int64_t out_d = weights.shape().n;
  if (grad_output.shape() != Shape{n, out_d, 1, 1}) {
    throw ShapeError("fully_connected backward: grad_output shape mismatch");
  }
  FcGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weights.shape()),
               std::vector<T>(out_d, T(0))};
  // dX = dY * W
  gemm<T>(n, d, out_d, grad_output.raw(), out_d, weights.raw(), d, g.input.raw(), d, false);
  // dW = dY^T * X
  const auto gy_t = transpose(grad_output.raw(), n, out_d);
  gemm<T>(out_d, d, n, gy_t.data(), n, input.raw(), d, g.weights.raw(), d, false);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t o = 0; o < out_d; ++o) g.bias[o] += grad_output[i * out_d + o];
  return g;
}

// ---- RoI pooling ---------------------------------------------------------

template <typename T>
PoolResult<T> roi_pool(const BasicTensor<T>& feature, const BasicTensor<T>& rois,
                       const RoiPoolSpec& spec) {
  count_call();
  const Shape& fs = feature.shape();
  if (fs.n != 1) throw ShapeError("roi_pool: feature batch (N) must be 1");
  if (rois.shape().c * rois.shape().spatial() != 4) {
    throw ShapeError("roi_pool: rois must be (R, 4, 1, 1), got " + rois.shape().str());
  }
  const int64_t r_count = rois.shape().n;
  const Shape os{r_count, fs.c, spec.pooled_h, spec.pooled_w};
  PoolResult<T> result{BasicTensor<T>(os), std::vector<int64_t>(static_cast<size_t>(os.size()), -1)};
  for (int64_t r = 0; r < r_count; ++r) {
    const T* box = rois.raw() + r * 4;
    if (!(box[2] >= box[0]) || !(box[3] >= box[1])) {
      throw std::invalid_argument("roi_pool: RoI " + std::to_string(r) + " has x2 < x1 or y2 < y1");
    }
    const auto start_w = static_cast<int64_t>(std::round(box[0] * spec.spatial_scale));
    const auto start_h = static_cast<int64_t>(std::round(box[1] * spec.spatial_scale));
    const auto end_w = static_cast<int64_t>(std::round(box[2] * spec.spatial_scale));
    const auto end_h = static_cast<int64_t>(std::round(box[3] * spec.spatial_scale));
    const int64_t roi_h = std::max<int64_t>(end_h - start_h + 1, 1);
    const int64_t roi_w = std::max<int64_t>(end_w - start_w + 1, 1);
    const double bin_h = static_cast<double>(roi_h) / spec.pooled_h;
    const double bin_w = static_cast<double>(roi_w) / spec.pooled_w;
    for (int64_t ph = 0; ph < spec.pooled_h; ++ph) {
      const int64_t h0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(ph * bin_h)) + start_h, 0, fs.h);
      const int64_t h1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil((ph + 1) * bin_h)) + start_h, 0, fs.h);
      for (int64_t pw = 0; pw < spec.pooled_w; ++pw) {
        const int64_t w0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(pw * bin_w)) + start_w, 0, fs.w);
        const int64_t w1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil((pw + 1) * bin_w)) + start_w, 0, fs.w);
        for (int64_t c = 0; c < fs.c; ++c) {
          const int64_t o = result.output.offset(r, c, ph, pw);
          int64_t best = -1;
          T best_v = 0;
          for (int64_t y = h0; y < h1; ++y) {
            for (int64_t x = w0; x < w1; ++x) {
              const int64_t idx = feature.offset(0, c, y, x);
              if (best < 0 || feature[idx] > best_v) {
                best = idx;
                best_v = feature[idx];
              }
            }
          }
          result.output[o] = best < 0 ? T(0) : best_v;
          result.argmax[o] = best;
        }
      }
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> roi_pool_backward(const BasicTensor<T>& grad_output,
                                 std::span<const int64_t> argmax, const Shape& feature_shape) {
  count_call();
  if (static_cast<int64_t>(argmax.size()) != grad_output.size()) {
    throw ShapeError("roi_pool backward: argmax length does not match grad_output");
  }
  BasicTensor<T> grad(feature_shape);
  for (int64_t i = 0; i < grad_output.size(); ++i) {
    if (argmax[i] >= 0) grad[argmax[i]] += grad_output[i];
  }
  return grad;
}

// ---- softmax -------------------------------------------------------------

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input) {
  count_call();
  const Shape& s = input.shape();
  if (s.c < 1) throw ShapeError("softmax: needs at least one class (C >= 1)");
  BasicTensor<T> out(s);
  const int64_t plane = s.spatial();
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t p = 0; p < plane; ++p) {
      T mx = input.plane(n, 0)[p];
      for (int64_t c = 1; c < s.c; ++c) mx = std::max(mx, input.plane(n, c)[p]);
      T sum = 0;
      for (int64_t c = 0; c < s.c; ++c) {
        const T e = std::exp(input.plane(n, c)[p] - mx);
        out.plane(n, c)[p] = e;
        sum += e;
      }
      for (int64_t c = 0; c < s.c; ++c) out.plane(n, c)[p] /= sum;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_output) {
  count_call();
  const Shape& s = output.shape();
  if (grad_output.shape() != s) throw ShapeError("softmax backward: shape mismatch");
  BasicTensor<T> grad(s);
  const int64_t plane = s.spatial();
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t p = 0; p < plane; ++p) {
      T dot = 0;
      for (int64_t c = 0; c < s.c; ++c) dot += output.plane(n, c)[p] * grad_output.plane(n, c)[p];
      for (int64_t c = 0; c < s.c; ++c) {
        grad.plane(n, c)[p] = output.plane(n, c)[p] * (grad_output.plane(n, c)[p] - dot);
      }
    }
  }
  return grad;
}

#define PVANET_INSTANTIATE_KERNELS(T)                                                          \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                         std::span<const T>, const ConvSpec&);                 \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                        const BasicTensor<T>&, const ConvSpec&);               \
  template PoolResult<T> max_pool2d(const BasicTensor<T>&, const PoolSpec&);                   \
  template BasicTensor<T> max_pool2d_backward(const BasicTensor<T>&, std::span<const int64_t>, \
                                              const Shape&);                                   \
  template BasicTensor<T> deconv2d_bilinear(const BasicTensor<T>&, const DeconvSpec&);         \
  template BasicTensor<T> deconv2d_bilinear_backward(const BasicTensor<T>&, const Shape&,      \
                                                     const DeconvSpec&);                       \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                         \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> negate(const BasicTensor<T>&);                                       \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const>);             \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, int64_t, int64_t);             \
  template BasicTensor<T> eltwise_add(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> scale_shift(const BasicTensor<T>&, std::span<const T>,               \
                                      std::span<const T>);                                     \
  template ScaleShiftGrads<T> scale_shift_backward(const BasicTensor<T>&, std::span<const T>,  \
                                                   const BasicTensor<T>&);                     \
  template BasicTensor<T> batchnorm_frozen(const BasicTensor<T>&, std::span<const T>,          \
                                           std::span<const T>, double);                        \
  template BasicTensor<T> batchnorm_frozen_backward(const BasicTensor<T>&, std::span<const T>, \
                                                    double);                                   \
  template BatchNormResult<T> batchnorm_minibatch(const BasicTensor<T>&, double);              \
  template BasicTensor<T> batchnorm_minibatch_backward(                                        \
      const BasicTensor<T>&, const BatchNormStats<T>&, const BasicTensor<T>&, double);         \
  template void update_running_stats(BatchNormStats<T>&, const BatchNormStats<T>&, double,     \
                                     int64_t);                                                 \
  template void fold_batchnorm(std::span<const T>, std::span<const T>, double,                 \
                               std::vector<T>&, std::vector<T>&);                              \
  template BasicTensor<T> fully_connected(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                          std::span<const T>);                                 \
  template FcGrads<T> fully_connected_backward(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                               const BasicTensor<T>&);                         \
  template PoolResult<T> roi_pool(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                  const RoiPoolSpec&);                                         \
  template BasicTensor<T> roi_pool_backward(const BasicTensor<T>&, std::span<const int64_t>,   \
                                            const Shape&);                                     \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                      \
  template BasicTensor<T> softmax_backward(const BasicTensor<T>&, const BasicTensor<T>&);

PVANET_INSTANTIATE_KERNELS(float)
PVANET_INSTANTIATE_KERNELS(double)

#undef PVANET_INSTANTIATE_KERNELS

}  // namespace pvanet
