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
#include <functional>
#include <memory>
#include <string>

#include "wbc/core/tensor.hpp"

namespace wbc::nn {

enum class Mode { kTrain, kEval };

// A learnable tensor plus its gradient accumulator. `trainable` is what the
// freeze policies toggle; the optimizer skips parameters with it cleared.
struct Param {
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() : value({1}, 0.0f), grad({1}, 0.0f) {}
  explicit Param(Tensor v) : value(std::move(v)), grad(value.dims(), 0.0f) {}
};

class Layer;
using LayerPtr = std::unique_ptr<Layer>;

// Traversal callbacks. Containers assemble dotted names in torch convention
// ("layer1.0.conv1.weight") so checkpoints line up with the published
// state_dict layouts.
using ParamVisitor = std::function<void(const std::string&, Param&)>;
using BufferVisitor = std::function<void(const std::string&, Tensor&)>;
using ChildVisitor = std::function<void(const std::string&, LayerPtr&)>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  if (prefix.empty()) return name;
  if (name.empty()) return prefix;
  return prefix + "." + name;
}

class Layer {
 public:
  virtual ~Layer() = default;

  // backward() is valid only after a forward() on the same instance; layers
  // cache whatever activations they need.
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;

  virtual void visit_params(const std::string& prefix, const ParamVisitor& v) {
    (void)prefix;
    (void)v;
  }
  virtual void visit_buffers(const std::string& prefix, const BufferVisitor& v) {
    (void)prefix;
    (void)v;
  }
  // Visits owning child slots (mutable, so surgery can replace a child).
  virtual void visit_children(const ChildVisitor& v) { (void)v; }

  // Re-derives any internal random streams (dropout, stochastic depth).
  virtual void reseed(std::uint64_t seed) { (void)seed; }

  virtual const char* kind() const = 0;
};

// Depth-first traversal over the whole subtree, parents before children.
void walk_layers(Layer& root, const std::function<void(const std::string&, Layer&)>& fn,
                 const std::string& prefix = "");

// Collects (name, param) pairs over the whole subtree in visitation order.
struct NamedParam {
  std::string name;
  Param* param;
};
std::vector<NamedParam> collect_params(Layer& root);

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};
std::vector<NamedBuffer> collect_buffers(Layer& root);

}  // namespace wbc::nn
