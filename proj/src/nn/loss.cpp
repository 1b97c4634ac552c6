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

#include "wbc/nn/loss.hpp"

#include <cmath>

#include "wbc/core/error.hpp"

namespace wbc::nn {

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                 const std::vector<double>& class_weights) {
  if (logits.rank() != 2)
    throw ValidationError("cross entropy expects (N,K) logits, got " + logits.dims_string());
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n)
    throw ValidationError("cross entropy: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " rows");
  const bool weighted = !class_weights.empty();
  if (weighted && static_cast<Index>(class_weights.size()) != k)
    throw ValidationError("cross entropy: class_weights size must equal class count");

  LossResult out;
  out.dlogits = Tensor(logits.dims());
  out.predicted.resize(static_cast<std::size_t>(n));

  double loss_sum = 0.0, weight_sum = 0.0;
  std::vector<double> probs(static_cast<std::size_t>(k));
  for (Index r = 0; r < n; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= k)
      throw ValidationError("cross entropy: label " + std::to_string(label) + " out of range");
    const float* row = logits.data() + r * k;

    double mx = row[0];
    Index arg = 0;
    for (Index j = 1; j < k; ++j)
      if (row[j] > mx) {
        mx = row[j];
        arg = j;
      }
    out.predicted[static_cast<std::size_t>(r)] = static_cast<int>(arg);

    double denom = 0.0;
    for (Index j = 0; j < k; ++j) {
      probs[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(row[j]) - mx);
      denom += probs[static_cast<std::size_t>(j)];
    }
    const double w = weighted ? class_weights[static_cast<std::size_t>(label)] : 1.0;
    loss_sum += w * (std::log(denom) - (static_cast<double>(row[label]) - mx));
    weight_sum += w;

    float* grad = out.dlogits.data() + r * k;
    for (Index j = 0; j < k; ++j) {
      const double p = probs[static_cast<std::size_t>(j)] / denom;
      grad[j] = static_cast<float>(w * (p - (j == label ? 1.0 : 0.0)));
    }
  }

  // Weighted mean: divide by the summed weights (plain mean when unweighted).
  out.loss = loss_sum / weight_sum;
  const float inv = static_cast<float>(1.0 / weight_sum);
  out.dlogits.flat() *= inv;
  return out;
}

}  // namespace wbc::nn
