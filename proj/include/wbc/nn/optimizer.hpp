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
#include <unordered_map>

#include "wbc/nn/layer.hpp"

namespace wbc::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.005;
};

// AdamW with decoupled weight decay. Moment state is keyed by parameter name,
// so it survives parameter re-collection and only ever touches parameters
// whose `trainable` flag is set; weight decay therefore never reaches frozen
// parameters either.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // One update over every trainable parameter under `root` at learning rate
  // `lr`. Gradients are left untouched; call zero_grad before the next
  // accumulation.
  void step(Layer& root, double lr);

  static void zero_grad(Layer& root);

  std::int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

}  // namespace wbc::nn
