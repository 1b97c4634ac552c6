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

#include "wbc/nn/optimizer.hpp"

#include <cmath>

#include "wbc/core/error.hpp"

namespace wbc::nn {

void AdamW::step(Layer& root, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr))
    throw ValidationError("adamw: learning rate must be finite and nonnegative");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  for (auto& np : collect_params(root)) {
    Param* param = np.param;
    if (!param->trainable) continue;
    auto it = state_.find(np.name);
    if (it == state_.end()) {
      Moments init{Tensor(param->value.dims(), 0.0f), Tensor(param->value.dims(), 0.0f)};
      it = state_.emplace(np.name, std::move(init)).first;
    }
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    const Index count = param->value.size();
    for (Index i = 0; i < count; ++i) {
      const double g = param->grad[i];
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      // Decoupled decay first, then the Adam step, matching the reference
      // AdamW update order.
      double p = param->value[i];
      p -= lr * cfg_.weight_decay * p;
      p -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      param->value[i] = static_cast<float>(p);
    }
  }
}

void AdamW::zero_grad(Layer& root) {
  for (auto& np : collect_params(root)) np.param->grad.flat().setZero();
}

}  // namespace wbc::nn
