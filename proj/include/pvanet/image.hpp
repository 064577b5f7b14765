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

#ifndef PVANET_IMAGE_HPP_
#define PVANET_IMAGE_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pvanet/tensor.hpp"

namespace pvanet {

// 8-bit interleaved RGB.
struct Image {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> rgb;

  uint8_t& at(int64_t y, int64_t x, int c) { return rgb[static_cast<size_t>((y * width + x) * 3 + c)]; }
  uint8_t at(int64_t y, int64_t x, int c) const { return rgb[static_cast<size_t>((y * width + x) * 3 + c)]; }
};

// Binary PPM (P6, maxval 255). Throws FormatError.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& image, const std::filesystem::path& path);

// (1, 3, H, W) floats in [0, 255] minus the per-channel mean.
Tensor image_to_tensor(const Image& image, const std::array<float, 3>& mean = {0, 0, 0});

// Half-pixel-centred bilinear resampling of every (n, c) plane.
Tensor resize_bilinear(const Tensor& input, int64_t height, int64_t width);

// Zero-pads on the bottom and right up to multiples of `multiple`.
Tensor pad_to_multiple(const Tensor& input, int64_t multiple);

struct PreparedImage {
  Tensor data;
  double scale = 1.0;     // resized / original
  int64_t height = 0;     // resized extent before padding
  int64_t width = 0;
};

// Aspect-preserving resize so the shorter edge equals `shorter_edge` (0 keeps
// the original size), mean subtraction, then padding. After mean subtraction
// the zero padding equals the mean colour.
PreparedImage prepare_image(const Image& image, int64_t shorter_edge, int64_t pad_multiple,
                            const std::array<float, 3>& mean = {0, 0, 0});

}  // namespace pvanet

#endif  // PVANET_IMAGE_HPP_
