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

#ifndef PVANET_SRC_BINARY_IO_HPP_
#define PVANET_SRC_BINARY_IO_HPP_

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "pvanet/tensor.hpp"

// Little-endian primitives shared by the .nt and weight-store containers.
namespace pvanet::internal {

template <typename U>
void write_le(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((static_cast<uint64_t>(value) >> (8 * i)) & 0xFF);
  }
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U read_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError(std::string("unexpected end of file while reading ") + what);
  }
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  return static_cast<U>(v);
}

inline void write_f32(std::ostream& os, float f) {
  write_le<uint32_t>(os, std::bit_cast<uint32_t>(f));
}

inline float read_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(read_le<uint32_t>(is, what));
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char got[4] = {};
  if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected \"") + magic + "\"");
  }
}

}  // namespace pvanet::internal

#endif  // PVANET_SRC_BINARY_IO_HPP_
