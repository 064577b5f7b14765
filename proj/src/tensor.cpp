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

#include "pvanet/tensor.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"

namespace pvanet {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << 'x' << c << 'x' << h << 'x' << w;
  return os.str();
}

std::string Shape::hwc() const {
  std::ostringstream os;
  os << h << 'x' << w << 'x' << c;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << s.str(); }

namespace {

void check_dims(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ShapeError("negative tensor dimension in " + s.str());
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
  check_dims(shape);
  data_.assign(static_cast<size_t>(shape.size()), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(shape), data_(std::move(data)) {
  check_dims(shape);
  if (static_cast<int64_t>(data_.size()) != shape.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape.str());
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape.size() != shape_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return BasicTensor(shape, data_);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

namespace {
constexpr uint32_t kNtVersion = 1;
constexpr uint32_t kDtypeF32 = 1;
}  // namespace

void write_nt(std::ostream& os, const Tensor& t) {
  os.write("NTEN", 4);
  internal::write_le<uint32_t>(os, kNtVersion);
  internal::write_le<uint32_t>(os, kDtypeF32);
  internal::write_le<uint32_t>(os, 4);
  const Shape& s = t.shape();
  for (int64_t d : {s.n, s.c, s.h, s.w}) internal::write_le<uint32_t>(os, static_cast<uint32_t>(d));
  for (float v : t.data()) internal::write_f32(os, v);
}

Tensor read_nt(std::istream& is) {
  internal::expect_magic(is, "NTEN");
  const auto version = internal::read_le<uint32_t>(is, "version");
  if (version != kNtVersion) throw FormatError("unsupported .nt version " + std::to_string(version));
  const auto dtype = internal::read_le<uint32_t>(is, "dtype");
  if (dtype != kDtypeF32) throw FormatError("unsupported .nt dtype code " + std::to_string(dtype));
  const auto ndim = internal::read_le<uint32_t>(is, "ndim");
  if (ndim == 0 || ndim > 4) throw FormatError("unsupported .nt rank " + std::to_string(ndim));
  // Lower ranks are right-aligned into NCHW: a 2-D [H, W] file becomes (1, 1, H, W).
  int64_t dims[4] = {1, 1, 1, 1};
  for (uint32_t i = 0; i < ndim; ++i) dims[4 - ndim + i] = internal::read_le<uint32_t>(is, "dims");
  Shape shape{dims[0], dims[1], dims[2], dims[3]};
  std::vector<float> data(static_cast<size_t>(shape.size()));
  for (auto& v : data) v = internal::read_f32(is, "tensor data");
  return Tensor(shape, std::move(data));
}

void save_nt(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_nt(os, t);
  if (!os) throw FormatError("write failed for " + path.string());
}

Tensor load_nt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_nt(is);
}

}  // namespace pvanet
