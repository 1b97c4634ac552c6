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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wbc::zoo {

enum class Base : std::uint8_t {
  kResNet50 = 0,
  kVgg16 = 1,
  kVgg16Bn = 2,
  kVitB16 = 3,
  kConvNextTiny = 4,
  // Desk-tier surrogate: a three-stage CNN small enough to train on a CPU in
  // minutes. Not part of the published benchmark table; it exists so the
  // BN-vs-GN comparison and the determinism/freeze contracts can run
  // everywhere.
  kTinyCnn = 5,
};

enum class NormStrategy : std::uint8_t {
  kDefault = 0,
  kReplaceBnWithGn = 1,
  kFreezeBn = 2,
};

enum class Head : std::uint8_t {
  kLinear = 0,
  // Two hidden fully-connected layers of width 4096, each followed by ReLU
  // and dropout 0.5, then the 5-way classifier.
  kVggFc = 1,
};

std::string_view base_name(Base b);
std::string_view norm_strategy_name(NormStrategy s);
std::string_view head_name(Head h);
std::optional<Base> parse_base(std::string_view s);
std::optional<NormStrategy> parse_norm_strategy(std::string_view s);
std::optional<Head> parse_head(std::string_view s);

// One benchmark configuration. The canonical variants:
//   a       default ResNet50 (BN, linear head)
//   a'      ResNet50 plus VGG-style FC head
//   i       ResNet50 with every BN swapped for GN (32 groups)
//   ii      ResNet50 with BN frozen at pretrained statistics
//   iii     as ii, additionally finetuning only the last 16 weight layers
//   b       default VGG16 (no BN, classic FC head)
//   b'      VGG16 with BN inserted after every conv
//   c       ViT-Base/16 (layer norm, linear head)
//   d       ConvNeXt-Tiny (layer norm, linear head)
// plus the desk-tier trio desk-bn / desk-gn / desk-frozen on the tiny CNN.
struct ModelSpec {
  Base base = Base::kResNet50;
  NormStrategy norm_strategy = NormStrategy::kDefault;
  Head head = Head::kLinear;
  std::optional<int> trainable_last_k;  // weight-bearing layers from the output
  int num_classes = 5;
  bool pretrained = true;
  std::string variant_id = "a";

  // Throws ValidationError naming the violated constraint: GN replacement is
  // ResNet50-only (that is the only base with published GN weights), VGG16
  // has no BN to freeze, and variant_id must agree with the other fields.
  void validate() const;

  std::string to_json() const;                       // stable key order
  static ModelSpec from_json(const std::string& s);  // validates

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// The full configuration table, keyed by variant id. Accepts the unicode
// prime (a′) as an alias for the ASCII spelling (a'). Unknown id throws
// ValidationError listing the known ids.
ModelSpec spec_for_variant(std::string_view variant_id, bool pretrained = true);

// All ids in report row order: a, a', i, ii, iii, b, b', c, d, then the desk
// trio.
const std::vector<std::string>& known_variants();

}  // namespace wbc::zoo
