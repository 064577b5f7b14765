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

#include "pvanet/weights.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "binary_io.hpp"

namespace pvanet {

namespace {
constexpr uint32_t kStoreVersion = 1;
}  // namespace

const Tensor& WeightStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("weight store has no entry \"" + name + "\"");
  return it->second;
}

void WeightStore::write(std::ostream& os) const {
  os.write("PVAW", 4);
  internal::write_le<uint32_t>(os, kStoreVersion);
  internal::write_le<uint32_t>(os, static_cast<uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    if (name.size() > 0xFFFF) throw FormatError("weight name too long: " + name.substr(0, 32));
    internal::write_le<uint16_t>(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& s = t.shape();
    int64_t dims[4] = {s.n, s.c, s.h, s.w};
    int ndim = 4;
    while (ndim > 1 && dims[ndim - 1] == 1) --ndim;
    internal::write_le<uint8_t>(os, static_cast<uint8_t>(ndim));
    for (int i = 0; i < ndim; ++i) internal::write_le<uint32_t>(os, static_cast<uint32_t>(dims[i]));
    for (float v : t.data()) internal::write_f32(os, v);
  }
}

WeightStore WeightStore::read(std::istream& is) {
  internal::expect_magic(is, "PVAW");
  const auto version = internal::read_le<uint32_t>(is, "version");
  if (version != kStoreVersion) {
    throw FormatError("unsupported weight store version " + std::to_string(version));
  }
  const auto count = internal::read_le<uint32_t>(is, "entry count");
  WeightStore store;
  for (uint32_t e = 0; e < count; ++e) {
    const auto len = internal::read_le<uint16_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("unexpected end of file in entry name");
    const auto ndim = internal::read_le<uint8_t>(is, "ndim");
    if (ndim < 1 || ndim > 4) {
      throw FormatError("entry \"" + name + "\": unsupported rank " + std::to_string(ndim));
    }
    int64_t dims[4] = {1, 1, 1, 1};
    for (int i = 0; i < ndim; ++i) dims[i] = internal::read_le<uint32_t>(is, "dims");
    Shape shape{dims[0], dims[1], dims[2], dims[3]};
    std::vector<float> data(static_cast<size_t>(shape.size()));
    for (auto& v : data) v = internal::read_f32(is, "entry data");
    store.entries_.emplace(std::move(name), Tensor(shape, std::move(data)));
  }
  return store;
}

void WeightStore::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write(os);
  if (!os) throw FormatError("write failed for " + path.string());
}

WeightStore WeightStore::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read(is);
}

std::vector<std::string> check_weights(const NetworkSpec& net, const ParamMap<float>& weights) {
  std::vector<std::string> problems;
  for (const auto& p : required_params(net)) {
    auto it = weights.find(p.name);
    if (it == weights.end()) {
      problems.push_back("missing weight \"" + p.name + "\" (expected " + p.shape.str() + ")");
    } else if (it->second.shape() != p.shape) {
      problems.push_back("weight \"" + p.name + "\" has shape " + it->second.shape().str() +
                         ", expected " + p.shape.str());
    }
  }
  return problems;
}

WeightStore init_weights(const NetworkSpec& net, uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightStore store;
  for (const auto& p : required_params(net)) {
    Tensor t(p.shape);
    switch (p.role) {
      case ParamRole::kWeight: {
        const int64_t fan_in = p.shape.c * p.shape.h * p.shape.w;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        for (auto& v : t.data()) v = static_cast<float>(dist(rng));
        break;
      }
      case ParamRole::kScale:
      case ParamRole::kVar:
        t = Tensor(p.shape, 1.0f);
        break;
      default:
        break;
    }
    store.set(p.name, std::move(t));
  }
  return store;
}

}  // namespace pvanet
