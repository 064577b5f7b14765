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

#include "pvanet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace pvanet {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is, const std::string& what) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw FormatError(what + ": truncated PPM header");
  return tok;
}

int64_t header_int(std::istream& is, const std::string& what, const char* field) {
  const std::string tok = header_token(is, what);
  try {
    size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(what + ": PPM " + field + " \"" + tok + "\" is not a positive integer");
  }
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  const std::string what = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(what + ": cannot open image");
  if (header_token(is, what) != "P6") throw FormatError(what + ": not a binary PPM (P6) image");
  Image img;
  img.width = header_int(is, what, "width");
  img.height = header_int(is, what, "height");
  const int64_t maxval = header_int(is, what, "maxval");
  if (maxval != 255) throw FormatError(what + ": only 8-bit PPM (maxval 255) is supported");
  img.rgb.resize(static_cast<size_t>(img.width * img.height * 3));
  is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (is.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
    throw FormatError(what + ": pixel data is truncated");
  }
  return img;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path.string() + ": cannot write image");
  os << "P6\n" << image.width << " " << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!os) throw FormatError(path.string() + ": write failed");
}

Tensor image_to_tensor(const Image& image, const std::array<float, 3>& mean) {
  Tensor t(Shape{1, 3, image.height, image.width});
  for (int c = 0; c < 3; ++c) {
    for (int64_t y = 0; y < image.height; ++y) {
      for (int64_t x = 0; x < image.width; ++x) {
        t.at(0, c, y, x) = static_cast<float>(image.at(y, x, c)) - mean[static_cast<size_t>(c)];
      }
    }
  }
  return t;
}

Tensor resize_bilinear(const Tensor& input, int64_t height, int64_t width) {
  const Shape s = input.shape();
  if (height <= 0 || width <= 0) throw ShapeError("resize: target extent must be positive");
  if (height == s.h && width == s.w) return input;
  Tensor out(Shape{s.n, s.c, height, width});
  auto taps = [](int64_t dst, int64_t src, int64_t i, int64_t& i0, int64_t& i1, double& f) {
    const double pos = std::max(0.0, (static_cast<double>(i) + 0.5) * static_cast<double>(src) /
                                         static_cast<double>(dst) - 0.5);
    i0 = std::min(static_cast<int64_t>(pos), src - 1);
    i1 = std::min(i0 + 1, src - 1);
    f = pos - static_cast<double>(i0);
  };
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t c = 0; c < s.c; ++c) {
      const float* src = input.plane(n, c);
      float* dst = out.plane(n, c);
      for (int64_t y = 0; y < height; ++y) {
        int64_t y0, y1;
        double fy;
        taps(height, s.h, y, y0, y1, fy);
        for (int64_t x = 0; x < width; ++x) {
          int64_t x0, x1;
          double fx;
          taps(width, s.w, x, x0, x1, fx);
          const double top = src[y0 * s.w + x0] * (1 - fx) + src[y0 * s.w + x1] * fx;
          const double bot = src[y1 * s.w + x0] * (1 - fx) + src[y1 * s.w + x1] * fx;
          dst[y * width + x] = static_cast<float>(top * (1 - fy) + bot * fy);
        }
      }
    }
  }
  return out;
}

Tensor pad_to_multiple(const Tensor& input, int64_t multiple) {
  const Shape s = input.shape();
  if (multiple <= 1) return input;
  const int64_t h = (s.h + multiple - 1) / multiple * multiple;
  const int64_t w = (s.w + multiple - 1) / multiple * multiple;
  if (h == s.h && w == s.w) return input;
  Tensor out(Shape{s.n, s.c, h, w});
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t c = 0; c < s.c; ++c) {
      for (int64_t y = 0; y < s.h; ++y) {
        std::copy(input.plane(n, c) + y * s.w, input.plane(n, c) + (y + 1) * s.w, out.plane(n, c) + y * w);
      }
    }
  }
  return out;
}

PreparedImage prepare_image(const Image& image, int64_t shorter_edge, int64_t pad_multiple,
                            const std::array<float, 3>& mean) {
  PreparedImage p;
  Tensor t = image_to_tensor(image, mean);
  p.height = image.height;
  p.width = image.width;
  if (shorter_edge > 0) {
    p.scale = static_cast<double>(shorter_edge) / static_cast<double>(std::min(image.height, image.width));
    p.height = std::max<int64_t>(1, std::llround(static_cast<double>(image.height) * p.scale));
    p.width = std::max<int64_t>(1, std::llround(static_cast<double>(image.width) * p.scale));
    t = resize_bilinear(t, p.height, p.width);
  }
  p.data = pad_to_multiple(t, pad_multiple);
  return p;
}

}  // namespace pvanet
