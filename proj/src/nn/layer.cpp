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

#include "wbc/nn/layer.hpp"

namespace wbc::nn {

void walk_layers(Layer& root, const std::function<void(const std::string&, Layer&)>& fn,
                 const std::string& prefix) {
  fn(prefix, root);
  root.visit_children([&](const std::string& name, LayerPtr& child) {
    if (child) walk_layers(*child, fn, join_name(prefix, name));
  });
}

std::vector<NamedParam> collect_params(Layer& root) {
  std::vector<NamedParam> out;
  root.visit_params("", [&](const std::string& name, Param& p) { out.push_back({name, &p}); });
  return out;
}

std::vector<NamedBuffer> collect_buffers(Layer& root) {
  std::vector<NamedBuffer> out;
  root.visit_buffers("", [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
  return out;
}

}  // namespace wbc::nn
