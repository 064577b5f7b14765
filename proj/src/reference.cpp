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

#include <string_view>

#include "json.hpp"
#include "pvanet/analyze.hpp"

namespace pvanet {

namespace internal {
extern const std::string_view kReferenceJson;
}  // namespace internal

using nlohmann::json;

namespace {

std::optional<double> opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

const ReferenceRow* ReferenceTable::find(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

ReferenceTable parse_reference(std::string_view text) {
  try {
    const json j = json::parse(text);
    ReferenceTable t;
    t.height = j.at("input").at("height").get<int64_t>();
    t.width = j.at("input").at("width").get<int64_t>();
    for (const auto& r : j.at("rows")) {
      ReferenceRow row;
      row.name = r.at("name").get<std::string>();
      if (r.contains("output")) {
        const auto& o = r.at("output");
        row.output = Shape{1, o.at(2).get<int64_t>(), o.at(0).get<int64_t>(), o.at(1).get<int64_t>()};
      }
      row.params_k = opt_number(r, "params_k");
      row.macs_m = opt_number(r, "macs_m");
      row.params_decimals = r.value("params_decimals", 0);
      row.macs_decimals = r.value("macs_decimals", 0);
      t.rows.push_back(std::move(row));
    }
    t.total_params_k = j.at("total").at("params_k").get<double>();
    t.total_macs_m = j.at("total").at("macs_m").get<double>();
    const auto& b = j.at("breakdown_gmac");
    t.breakdown_proposals = b.at("proposals").get<int64_t>();
    t.shared_cnn_gmac = b.at("shared_cnn").get<double>();
    t.rpn_gmac = b.at("rpn").get<double>();
    t.classifier_gmac = b.at("classifier").get<double>();
    t.total_gmac = b.at("total").get<double>();
    t.breakdown_decimals = b.at("decimals").get<int>();
    for (const auto& o : j.at("other_networks_gmac")) {
      t.others.push_back({o.at("name").get<std::string>(), opt_number(o, "shared_cnn"),
                          opt_number(o, "rpn"), opt_number(o, "classifier"), opt_number(o, "total")});
    }
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("reference table: ") + e.what());
  }
}

const ReferenceTable& pvanet_reference() {
  static const ReferenceTable table = parse_reference(internal::kReferenceJson);
  return table;
}

}  // namespace pvanet
