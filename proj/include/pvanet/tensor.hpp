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

#ifndef PVANET_TENSOR_HPP_
#define PVANET_TENSOR_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pvanet {

// Raised for any dimension mismatch. The message names the offending axis.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rank-4 extent in (batch, channel, height, width) order.
struct Shape {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  int64_t size() const { return n * c * h * w; }
  int64_t spatial() const { return h * w; }
  bool operator==(const Shape&) const = default;

  // "NxCxHxW".
  std::string str() const;
  // "HxWxC", the layout used by the published cost tables.
  std::string hwc() const;
};

std::ostream& operator<<(std::ostream& os, const Shape& s);

// Dense NCHW tensor with contiguous row-major storage.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  int64_t offset(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[offset(n, c, h, w)];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[offset(n, c, h, w)];
  }
  T& operator[](int64_t i) { return data_[i]; }
  const T& operator[](int64_t i) const { return data_[i]; }

  // Pointer to the H*W plane of (n, c).
  T* plane(int64_t n, int64_t c) { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(int64_t n, int64_t c) const {
    return data_.data() + offset(n, c, 0, 0);
  }

  // Same data, new extent. Element count must match.
  BasicTensor reshaped(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

// ".nt" container: "NTEN", u32 version, u32 dtype (1 = f32), u32 ndim, dims,
// then little-endian f32 payload. Tensors are always written with ndim 4.
void write_nt(std::ostream& os, const Tensor& t);
Tensor read_nt(std::istream& is);
void save_nt(const std::filesystem::path& path, const Tensor& t);
Tensor load_nt(const std::filesystem::path& path);

}  // namespace pvanet

#endif  // PVANET_TENSOR_HPP_
