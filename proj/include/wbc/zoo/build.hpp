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
#include <filesystem>

#include "wbc/zoo/model.hpp"
#include "wbc/zoo/spec.hpp"

namespace wbc::zoo {

// Builds the network for a spec: base architecture, head swap, norm surgery,
// pretrained weights (from `weights_cache` when spec.pretrained), and the
// freeze policy, in that order. The classifier head is always freshly
// initialized for spec.num_classes from `seed`.
Model build_model(const ModelSpec& spec, const std::filesystem::path& weights_cache = {},
                  std::uint64_t seed = 0);

// Swaps every BatchNorm2d in the graph for a GroupNorm with `num_groups`,
// keeping the child slot name so checkpoint paths are stable. Returns the
// number of layers swapped (0 for a BN-free model). A channel count not
// divisible by num_groups raises ValidationError naming the layer. The GN
// affine starts at identity; pretrained GN weights load afterwards.
int replace_bn_with_gn(Model& model, Index num_groups = 32);

// Replaces the single linear classifier with the VGG-style stack
// (4096 -> 4096 -> num_classes, ReLU + dropout 0.5 between) and moves the
// feature tap in front of the new final classifier. Raises ValidationError
// if the head is already VGG_FC.
void add_vgg_fc_head(Model& model, Rng& rng);

// Freezes per spec: every BatchNorm2d freezes (statistics and affine) when
// norm_strategy == FREEZE_BN; when trainable_last_k = k is set, only the
// last k weight-bearing layers (conv/linear, counted backward in forward
// topological order, classifier head included) keep trainable parameters.
// k larger than the weight-bearing layer count raises ValidationError.
void apply_freeze_policy(Model& model, const ModelSpec& spec);

// Number of weight-bearing (conv/linear) layers in forward order; the
// domain of trainable_last_k.
int weight_bearing_layer_count(const Model& model);

// Eval-mode forward, returning the activation recorded at model.feature_tap
// as an N x D matrix (ResNet50: D = 2048).
Tensor extract_features(Model& model, const Tensor& images);

}  // namespace wbc::zoo
