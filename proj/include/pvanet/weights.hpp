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

#ifndef PVANET_WEIGHTS_HPP_
#define PVANET_WEIGHTS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "pvanet/network.hpp"
#include "pvanet/tensor.hpp"

namespace pvanet {

template <typename T>
using ParamMap = std::map<std::string, BasicTensor<T>>;

// Named parameter arrays ("<layer>.weight", "<layer>.mean", ...).
//
// Binary container: "PVAW", u32 version (1), u32 entry count, then per entry
// u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims, f32 data, all
// little-endian. Trailing unit dimensions are dropped on write and restored
// on read, so a bias of C entries is stored as [C] and loads as (C, 1, 1, 1).
class WeightStore {
 public:
  WeightStore() = default;
  explicit WeightStore(ParamMap<float> entries) : entries_(std::move(entries)) {}

  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Tensor& at(const std::string& name) const;
  void set(const std::string& name, Tensor value) { entries_[name] = std::move(value); }
  void erase(const std::string& name) { entries_.erase(name); }
  size_t size() const { return entries_.size(); }
  const ParamMap<float>& entries() const { return entries_; }

  template <typename T>
  ParamMap<T> as() const {
    ParamMap<T> out;
    for (const auto& [k, v] : entries_) out.emplace(k, v.template cast<T>());
    return out;
  }

  void write(std::ostream& os) const;
  static WeightStore read(std::istream& is);
  void save(const std::filesystem::path& path) const;
  static WeightStore load(const std::filesystem::path& path);

  bool operator==(const WeightStore&) const = default;

 private:
  ParamMap<float> entries_;
};

// Entries of `net` that are absent or carry the wrong shape, one message each.
std::vector<std::string> check_weights(const NetworkSpec& net, const ParamMap<float>& weights);

// He-normal conv/FC weights, zero biases, unit scales, zero shifts and
// (mean 0, var 1) batch-norm statistics. Deterministic for a given seed.
WeightStore init_weights(const NetworkSpec& net, uint64_t seed);

}  // namespace pvanet

#endif  // PVANET_WEIGHTS_HPP_
