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

#include "wbc/zoo/model.hpp"

#include <algorithm>
#include <cstring>
#include <string_view>

#include "wbc/core/error.hpp"
#include "wbc/core/sha256.hpp"

namespace wbc::zoo {

nn::Tap& Model::tap() const {
  nn::Tap* found = nullptr;
  nn::walk_layers(*root, [&](const std::string& path, nn::Layer& l) {
    if (path == feature_tap && std::string_view(l.kind()) == "tap")
      found = &static_cast<nn::Tap&>(l);
  });
  if (!found) throw ValidationError("model has no feature tap at '" + feature_tap + "'");
  return *found;
}

TrainableCounts count_trainable(const Model& m) {
  TrainableCounts counts;
  for (const nn::NamedParam& np : nn::collect_params(*m.root))
    (np.param->trainable ? counts.trainable : counts.frozen) += 1;
  return counts;
}

std::string frozen_state_checksum(const Model& m) {
  struct Item {
    std::string name;
    const Tensor* tensor;
  };
  std::vector<Item> items;
  for (const nn::NamedParam& np : nn::collect_params(*m.root))
    if (!np.param->trainable) items.push_back({np.name, &np.param->value});
  // Frozen BN keeps its running statistics pinned as well; unfrozen BN stats
  // move by design and stay out of the digest.
  nn::walk_layers(*m.root, [&](const std::string& path, nn::Layer& l) {
    if (std::string_view(l.kind()) != "batchnorm2d") return;
    auto& bn = static_cast<nn::BatchNorm2d&>(l);
    if (!bn.frozen()) return;
    items.push_back({nn::join_name(path, "running_mean"), &bn.running_mean});
    items.push_back({nn::join_name(path, "running_var"), &bn.running_var});
  });
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.name < b.name; });

  Sha256 hash;
  for (const Item& item : items) {
    hash.update(item.name);
    hash.update(std::string_view(reinterpret_cast<const char*>(item.tensor->data()),
                                 sizeof(float) * static_cast<std::size_t>(item.tensor->size())));
  }
  return hash.hex_digest();
}

}  // namespace wbc::zoo
