// Copyright 2026 The wbcbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wbc/zoo/spec.hpp"

#include <json.hpp>

#include "wbc/core/error.hpp"

namespace wbc::zoo {
namespace {

using nlohmann::ordered_json;

struct VariantRow {
  const char* id;
  Base base;
  NormStrategy norm;
  Head head;
  std::optional<int> last_k;
};

// Row order is the report order: the seven main-table rows, then the two
// layer-norm architectures, then the desk trio.
constexpr int kVariantCount = 12;

const VariantRow kVariantTable[kVariantCount] = {
    {"a", Base::kResNet50, NormStrategy::kDefault, Head::kLinear, {}},
    {"a'", Base::kResNet50, NormStrategy::kDefault, Head::kVggFc, {}},
    {"i", Base::kResNet50, NormStrategy::kReplaceBnWithGn, Head::kLinear, {}},
    {"ii", Base::kResNet50, NormStrategy::kFreezeBn, Head::kLinear, {}},
    {"iii", Base::kResNet50, NormStrategy::kFreezeBn, Head::kLinear, 16},
    {"b", Base::kVgg16, NormStrategy::kDefault, Head::kVggFc, {}},
    {"b'", Base::kVgg16Bn, NormStrategy::kDefault, Head::kVggFc, {}},
    {"c", Base::kVitB16, NormStrategy::kDefault, Head::kLinear, {}},
    {"d", Base::kConvNextTiny, NormStrategy::kDefault, Head::kLinear, {}},
    {"desk-bn", Base::kTinyCnn, NormStrategy::kDefault, Head::kLinear, {}},
    {"desk-gn", Base::kTinyCnn, NormStrategy::kReplaceBnWithGn, Head::kLinear, {}},
    {"desk-frozen", Base::kTinyCnn, NormStrategy::kFreezeBn, Head::kLinear, {}},
};

// The unicode prime shows up in copy-pasted variant names; fold it to the
// ASCII apostrophe before lookup.
std::string fold_prime(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
        static_cast<unsigned char>(s[i + 1]) == 0x80 &&
        static_cast<unsigned char>(s[i + 2]) == 0xB2) {
      out.push_back('\'');
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

const VariantRow* find_variant(std::string_view id) {
  const std::string folded = fold_prime(id);
  for (const VariantRow& row : kVariantTable)
    if (folded == row.id) return &row;
  return nullptr;
}

std::string known_variant_list() {
  std::string s;
  for (const VariantRow& row : kVariantTable) {
    if (!s.empty()) s += ", ";
    s += row.id;
  }
  return s;
}

}  // namespace

std::string_view base_name(Base b) {
  switch (b) {
    case Base::kResNet50: return "RESNET50";
    case Base::kVgg16: return "VGG16";
    case Base::kVgg16Bn: return "VGG16_BN";
    case Base::kVitB16: return "VIT_B16";
    case Base::kConvNextTiny: return "CONVNEXT_TINY";
    case Base::kTinyCnn: return "TINY_CNN";
  }
  throw ValidationError("base_name: bad enum value");
}

std::string_view norm_strategy_name(NormStrategy s) {
  switch (s) {
    case NormStrategy::kDefault: return "DEFAULT";
    case NormStrategy::kReplaceBnWithGn: return "REPLACE_BN_WITH_GN";
    case NormStrategy::kFreezeBn: return "FREEZE_BN";
  }
  throw ValidationError("norm_strategy_name: bad enum value");
}

std::string_view head_name(Head h) {
  switch (h) {
    case Head::kLinear: return "LINEAR";
    case Head::kVggFc: return "VGG_FC";
  }
  throw ValidationError("head_name: bad enum value");
}

std::optional<Base> parse_base(std::string_view s) {
  for (Base b : {Base::kResNet50, Base::kVgg16, Base::kVgg16Bn, Base::kVitB16,
                 Base::kConvNextTiny, Base::kTinyCnn})
    if (s == base_name(b)) return b;
  return std::nullopt;
}

std::optional<NormStrategy> parse_norm_strategy(std::string_view s) {
  for (NormStrategy n :
       {NormStrategy::kDefault, NormStrategy::kReplaceBnWithGn, NormStrategy::kFreezeBn})
    if (s == norm_strategy_name(n)) return n;
  return std::nullopt;
}

std::optional<Head> parse_head(std::string_view s) {
  for (Head h : {Head::kLinear, Head::kVggFc})
    if (s == head_name(h)) return h;
  return std::nullopt;
}

void ModelSpec::validate() const {
  if (num_classes != 5)
    throw ValidationError("ModelSpec: num_classes must be 5, got " + std::to_string(num_classes));
  if (norm_strategy == NormStrategy::kReplaceBnWithGn && base != Base::kResNet50 &&
      base != Base::kTinyCnn)
    throw ValidationError(
        "ModelSpec: REPLACE_BN_WITH_GN requires RESNET50 (the only base with published "
        "GN-pretrained weights) or the desk-tier TINY_CNN");
  if (norm_strategy == NormStrategy::kFreezeBn && base == Base::kVgg16)
    throw ValidationError("ModelSpec: VGG16 has no batch norm to freeze");
  if ((base == Base::kVitB16 || base == Base::kConvNextTiny) &&
      norm_strategy != NormStrategy::kDefault)
    throw ValidationError("ModelSpec: " + std::string(base_name(base)) +
                          " uses layer norm; no batch-norm surgery applies");
  if (trainable_last_k && *trainable_last_k <= 0)
    throw ValidationError("ModelSpec: trainable_last_k must be positive");
  if (base == Base::kTinyCnn && pretrained)
    throw ValidationError("ModelSpec: TINY_CNN has no pretrained weights");
  if ((base == Base::kVgg16 || base == Base::kVgg16Bn) && head != Head::kVggFc)
    throw ValidationError("ModelSpec: VGG bases keep their FC head (head must be VGG_FC)");

  const VariantRow* row = find_variant(variant_id);
  if (!row)
    throw ValidationError("ModelSpec: unknown variant_id '" + variant_id + "' (known: " +
                          known_variant_list() + ")");
  if (row->base != base || row->norm != norm_strategy || row->head != head ||
      row->last_k != trainable_last_k)
    throw ValidationError("ModelSpec: fields do not match the configuration table for variant '" +
                          std::string(row->id) + "'");
}

std::string ModelSpec::to_json() const {
  ordered_json j;
  j["variant_id"] = fold_prime(variant_id);
  j["base"] = std::string(base_name(base));
  j["norm_strategy"] = std::string(norm_strategy_name(norm_strategy));
  j["head"] = std::string(head_name(head));
  if (trainable_last_k)
    j["trainable_last_k"] = *trainable_last_k;
  else
    j["trainable_last_k"] = nullptr;
  j["num_classes"] = num_classes;
  j["pretrained"] = pretrained;
  return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& s) {
  ordered_json j;
  try {
    j = ordered_json::parse(s);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("ModelSpec: bad JSON: ") + e.what());
  }
  ModelSpec spec;
  try {
    spec.variant_id = j.at("variant_id").get<std::string>();
    const auto base = parse_base(j.at("base").get<std::string>());
    const auto norm = parse_norm_strategy(j.at("norm_strategy").get<std::string>());
    const auto head = parse_head(j.at("head").get<std::string>());
    if (!base || !norm || !head)
      throw ValidationError("ModelSpec: unrecognized enum value in JSON");
    spec.base = *base;
    spec.norm_strategy = *norm;
    spec.head = *head;
    if (!j.at("trainable_last_k").is_null())
      spec.trainable_last_k = j.at("trainable_last_k").get<int>();
    spec.num_classes = j.at("num_classes").get<int>();
    spec.pretrained = j.at("pretrained").get<bool>();
  } catch (const ordered_json::exception& e) {
    throw ValidationError(std::string("ModelSpec: missing or mistyped field: ") + e.what());
  }
  spec.validate();
  return spec;
}

ModelSpec spec_for_variant(std::string_view variant_id, bool pretrained) {
  const VariantRow* row = find_variant(variant_id);
  if (!row)
    throw ValidationError("unknown variant '" + std::string(variant_id) + "' (known: " +
                          known_variant_list() + ")");
  ModelSpec spec;
  spec.base = row->base;
  spec.norm_strategy = row->norm;
  spec.head = row->head;
  spec.trainable_last_k = row->last_k;
  spec.num_classes = 5;
  spec.pretrained = row->base == Base::kTinyCnn ? false : pretrained;
  spec.variant_id = row->id;
  spec.validate();
  return spec;
}

const std::vector<std::string>& known_variants() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const VariantRow& row : kVariantTable) v.emplace_back(row.id);
    return v;
  }();
  return ids;
}

}  // namespace wbc::zoo
