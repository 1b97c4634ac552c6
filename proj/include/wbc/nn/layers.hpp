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

#include <string>
#include <utility>
#include <vector>

#include "wbc/core/rng.hpp"
#include "wbc/nn/layer.hpp"

namespace wbc::nn {

// ---------------------------------------------------------------------------
// Convolution / linear

class Conv2d final : public Layer {
 public:
  // weight (out, in/groups, k, k), torch-style uniform init from `rng`.
  Conv2d(Index in_ch, Index out_ch, int kernel, int stride, int padding, Index groups,
         bool bias, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  const char* kind() const override { return "conv2d"; }

  Index in_channels() const { return in_ch_; }
  Index out_channels() const { return out_ch_; }

  Param weight;
  Param bias;

 private:
  Index in_ch_, out_ch_, groups_;
  int kernel_, stride_, padding_;
  bool has_bias_;
  Tensor input_;  // cached for backward
  bool has_input_ = false;
};

class Linear final : public Layer {
 public:
  Linear(Index in_features, Index out_features, bool bias, Rng& rng);

  // Applies over the last dimension; leading dimensions are batch-like.
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  const char* kind() const override { return "linear"; }

  Index in_features() const { return in_; }
  Index out_features() const { return out_; }

  Param weight;  // (out, in)
  Param bias;    // (out)

 private:
  Index in_, out_;
  bool has_bias_;
  Tensor input_;
  bool has_input_ = false;
};

// ---------------------------------------------------------------------------
// Activations / pooling / shape

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  const char* kind() const override { return "relu"; }

 private:
  Tensor input_;
};

class Gelu final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  const char* kind() const override { return "gelu"; }

 private:
  Tensor input_;
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(int kernel, int stride, int padding = 0);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  const char* kind() const override { return "maxpool2d"; }

 private:
  int kernel_, stride_, padding_;
  std::vector<Index> argmax_;  // flat input index per output element
  std::vector<Index> in_dims_;
};

// Adaptive average pool to 1x1 followed by flatten: (N,C,H,W) -> (N,C).
class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  const char* kind() const override { return "globalavgpool"; }

 private:
  std::vector<Index> in_dims_;
};

// Average pool to a fixed output grid, the VGG adaptive-pool stage.
class AdaptiveAvgPool2d final : public Layer {
 public:
  explicit AdaptiveAvgPool2d(int out_size);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  const char* kind() const override { return "adaptiveavgpool2d"; }

 private:
  int out_size_;
  std::vector<Index> in_dims_;
};

class Flatten final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  const char* kind() const override { return "flatten"; }

 private:
  std::vector<Index> in_dims_;
};

class Dropout final : public Layer {
 public:
  explicit Dropout(float p);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void reseed(std::uint64_t seed) override;
  const char* kind() const override { return "dropout"; }

 private:
  float p_;
  Rng rng_;
  Tensor mask_;
  bool train_pass_ = false;
};

// ---------------------------------------------------------------------------
// Normalization layers (semantics live in wbc/norm/normalization.hpp)

class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(Index channels);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  void visit_buffers(const std::string& prefix, const BufferVisitor& v) override;
  const char* kind() const override { return "batchnorm2d"; }

  // Pins statistics and affine parameters; the layer becomes a fixed
  // per-channel affine map and its params drop out of the trainable set.
  void freeze();
  bool frozen() const { return frozen_; }
  Index channels() const { return channels_; }

  Param weight;         // gamma
  Param bias;           // beta
  Tensor running_mean;  // buffers
  Tensor running_var;

 private:
  Index channels_;
  bool frozen_ = false;
  Tensor input_;
  std::vector<float> saved_mean_, saved_inv_std_;  // stats used by the forward
  bool used_batch_stats_ = false;
};

class GroupNorm final : public Layer {
 public:
  GroupNorm(Index num_groups, Index channels);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  const char* kind() const override { return "groupnorm"; }

  Index num_groups() const { return groups_; }
  Index channels() const { return channels_; }

  Param weight;
  Param bias;

 private:
  Index groups_, channels_;
  Tensor input_;
  std::vector<float> saved_mean_, saved_inv_std_;  // per (n, group)
};

// Layer norm over the channel dimension at each spatial position,
// channels-first convention (the ConvNeXt stem/downsample norm).
class LayerNorm2d final : public Layer {
 public:
  explicit LayerNorm2d(Index channels, float eps = 1e-6f);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  const char* kind() const override { return "layernorm2d"; }

  Param weight;
  Param bias;

 private:
  Index channels_;
  float eps_;
  Tensor input_;
  std::vector<float> saved_mean_, saved_inv_std_;  // per (n, h, w)
};

// Layer norm over the last dimension of an (..., D) tensor (transformer
// token norm and the ConvNeXt in-block norm after permute).
class LayerNormLastDim final : public Layer {
 public:
  explicit LayerNormLastDim(Index dim, float eps = 1e-6f);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  const char* kind() const override { return "layernorm"; }

  Param weight;
  Param bias;

 private:
  Index dim_;
  float eps_;
  Tensor input_;
  std::vector<float> saved_mean_, saved_inv_std_;  // per row
};

// ---------------------------------------------------------------------------
// Containers and structural layers

class Sequential final : public Layer {
 public:
  Sequential() = default;

  // Returns the slot index; names follow torch child-module conventions
  // (usually "0", "1", ...).
  Layer* add(const std::string& name, LayerPtr layer);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  void visit_buffers(const std::string& prefix, const BufferVisitor& v) override;
  void visit_children(const ChildVisitor& v) override;
  void reseed(std::uint64_t seed) override;
  const char* kind() const override { return "sequential"; }

  std::size_t size() const { return slots_.size(); }
  Layer* at(std::size_t i) { return slots_[i].second.get(); }
  const std::string& name_at(std::size_t i) const { return slots_[i].first; }
  Layer* find(const std::string& name);  // nullptr when absent

  // Swaps in a replacement for the named child, keeping slot order. Throws
  // ValidationError for an unknown name.
  Layer* replace(const std::string& name, LayerPtr layer);

 private:
  std::vector<std::pair<std::string, LayerPtr>> slots_;
};

// Records its most recent input and passes it through unchanged; models park
// one of these right before the classifier head so feature extraction reads
// the penultimate activation.
class Tap final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  const char* kind() const override { return "tap"; }

  const Tensor& last() const;

 private:
  Tensor last_;
  bool has_value_ = false;
};

// Per-channel learned scale (the ConvNeXt layer_scale parameter).
class ChannelScale final : public Layer {
 public:
  ChannelScale(Index channels, float init);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  const char* kind() const override { return "channelscale"; }

  Param scale;  // visited with an empty local name so the owner names it

 private:
  Index channels_;
  Tensor input_;
};

// Drops the whole residual branch per sample with probability p during
// training (row mode), scaling survivors by 1/(1-p).
class StochasticDepth final : public Layer {
 public:
  explicit StochasticDepth(float p);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void reseed(std::uint64_t seed) override;
  const char* kind() const override { return "stochasticdepth"; }

 private:
  float p_;
  Rng rng_;
  std::vector<float> keep_;  // per-sample scale of the last train forward
  bool train_pass_ = false;
};

// y = relu(branch(x) + shortcut(x)); shortcut may be empty (identity).
// Child slot names match the torchvision Bottleneck ("conv1", "bn1", ...,
// "downsample").
class Bottleneck final : public Layer {
 public:
  Bottleneck(Index in_ch, Index mid_ch, Index out_ch, int stride, bool has_downsample, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  void visit_buffers(const std::string& prefix, const BufferVisitor& v) override;
  void visit_children(const ChildVisitor& v) override;
  void reseed(std::uint64_t seed) override;
  const char* kind() const override { return "bottleneck"; }

 private:
  LayerPtr conv1_, norm1_, conv2_, norm2_, conv3_, norm3_;
  LayerPtr downsample_;  // Sequential("0" conv, "1" norm) or null
  ReLU relu1_, relu2_;   // in-branch activations (no params, not named)
  Tensor sum_;           // pre-relu sum, cached for backward
  Tensor input_;
};

// ---------------------------------------------------------------------------
// Transformer pieces

// Standard multi-head self-attention over (N, T, D) with fused qkv
// projection. Parameter names follow torch.nn.MultiheadAttention
// (in_proj_weight, in_proj_bias, out_proj.weight, out_proj.bias).
class MultiheadSelfAttention final : public Layer {
 public:
  MultiheadSelfAttention(Index dim, Index heads, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  const char* kind() const override { return "attention"; }

  Param in_proj_weight;  // (3D, D)
  Param in_proj_bias;    // (3D)
  Param out_proj_weight; // (D, D)
  Param out_proj_bias;   // (D)

 private:
  Index dim_, heads_;
  Tensor input_, q_, k_, v_, attn_, context_;  // caches
};

// Transformer encoder block: x + attn(ln_1(x)), then x + mlp(ln_2(x)).
// Child names match the torchvision ViT EncoderBlock.
class EncoderBlock final : public Layer {
 public:
  EncoderBlock(Index dim, Index heads, Index mlp_dim, float dropout_p, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  void visit_buffers(const std::string& prefix, const BufferVisitor& v) override;
  void visit_children(const ChildVisitor& v) override;
  void reseed(std::uint64_t seed) override;
  const char* kind() const override { return "encoderblock"; }

 private:
  LayerPtr ln_1_, attention_, dropout_, ln_2_, mlp_;
  Tensor x_in_, mid_;  // residual caches
};

// Patchify + class token + position embedding + encoder stack + final norm,
// emitting the class-token representation (N, D). Parameter names follow the
// torchvision VisionTransformer.
class ViTBackbone final : public Layer {
 public:
  ViTBackbone(int image_size, int patch_size, Index dim, Index depth, Index heads, Index mlp_dim,
              Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  void visit_buffers(const std::string& prefix, const BufferVisitor& v) override;
  void visit_children(const ChildVisitor& v) override;
  void reseed(std::uint64_t seed) override;
  const char* kind() const override { return "vit"; }

  Param class_token;    // (1, 1, D)
  Param pos_embedding;  // (1, T+1, D)

 private:
  int image_size_, patch_size_;
  Index dim_;
  LayerPtr conv_proj_;
  LayerPtr encoder_;  // Sequential of EncoderBlock, names "encoder_layer_i"
  LayerPtr ln_;
  std::vector<Index> token_dims_;  // (N, T+1, D) of the last forward
};

// ConvNeXt block: dwconv -> (permute) layernorm -> linear -> gelu -> linear
// -> (permute back) -> layer_scale -> stochastic depth -> + x.
class CnBlock final : public Layer {
 public:
  CnBlock(Index channels, float layer_scale_init, float stochastic_depth_p, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void visit_params(const std::string& prefix, const ParamVisitor& v) override;
  void visit_buffers(const std::string& prefix, const BufferVisitor& v) override;
  void visit_children(const ChildVisitor& v) override;
  void reseed(std::uint64_t seed) override;
  const char* kind() const override { return "cnblock"; }

 private:
  Index channels_;
  LayerPtr dwconv_, norm_, pw1_, gelu_, pw2_;
  LayerPtr layer_scale_;  // ChannelScale, named "layer_scale" directly
  LayerPtr stochastic_depth_;
  Tensor input_;
  std::vector<Index> spatial_dims_;
};

}  // namespace wbc::nn
