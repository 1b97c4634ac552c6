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
#include <string>
#include <vector>

#include "wbc/nn/layers.hpp"
#include "wbc/zoo/spec.hpp"

namespace wbc::zoo {



// A built network plus the bookkeeping the rest of the pipeline needs: the
// spec it was built from and the dotted path of the Tap recording the
// penultimate activation. Parameter names follow the published state_dict
// layout of the matching torchvision model wherever one exists.
struct Model {
  ModelSpec spec;
  nn::LayerPtr root;
  std::string feature_tap;

  Tensor forward(const Tensor& x, nn::Mode mode) { return root->forward(x, mode); }

  // Resolves feature_tap against the graph; throws if the path is missing or
  // is not a Tap.
  nn::Tap& tap() const;

  // Derives all layer-local RNG streams (dropout, stochastic depth) from one
  // seed.
  void reseed(std::uint64_t seed) { root->reseed(seed); }
};

struct TrainableCounts {
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  std::size_t all() const { return trainable + frozen; }
};

// Parameter-tensor counts by trainable flag (the trainable mask partition).
TrainableCounts count_trainable(const Model& m);

// SHA-256 over the raw bytes of every non-trainable parameter plus every
// frozen-BN running statistic, in name order. Training must not move any of
// it; the trainer compares this before epoch 1 and after epoch 100.
std::string frozen_state_checksum(const Model& m);

}  // namespace wbc::zoo
