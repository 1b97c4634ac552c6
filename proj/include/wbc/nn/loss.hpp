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

#include <vector>

#include "wbc/core/tensor.hpp"

namespace wbc::nn {

struct LossResult {
  double loss = 0.0;           // batch-mean cross entropy
  Tensor dlogits;              // gradient w.r.t. logits, already averaged
  std::vector<int> predicted;  // argmax per row, first index wins ties
};

// Softmax cross entropy over (N, K) logits. Reductions run in double; the
// softmax is computed with the usual max-shift so large logits stay finite.
// `class_weights` (size K) rescales each sample's loss by the weight of its
// true class with torch's weighted-mean convention; empty means unweighted.
LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                 const std::vector<double>& class_weights = {});

}  // namespace wbc::nn
