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

#include "wbc/zoo/build.hpp"

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "wbc/core/error.hpp"
#include "wbc/zoo/checkpoint.hpp"

namespace wbc::zoo {
namespace {

using nn::BatchNorm2d;

using nn::Layer;
using nn::LayerPtr;
using nn::Sequential;

// One ResNet stage: the first block changes width (and possibly stride) via
// a projection shortcut, the rest are identity blocks.
LayerPtr make_stage(Index in_ch, Index mid_ch, Index out_ch, int blocks, int stride, Rng& rng) {
  auto stage = std::make_unique<Sequential>();
  stage->add("0", std::make_unique<nn::Bottleneck>(in_ch, mid_ch, out_ch, stride, true, rng));
  for (int b = 1; b < blocks; ++b)
    stage->add(std::to_string(b),
               std::make_unique<nn::Bottleneck>(out_ch, mid_ch, out_ch, 1, false, rng));
  return stage;
}

Model build_resnet50(const ModelSpec& spec, Rng& rng) {
  auto top = std::make_unique<Sequential>();
  top->add("conv1", std::make_unique<nn::Conv2d>(3, 64, 7, 2, 3, 1, false, rng));
  top->add("bn1", std::make_unique<BatchNorm2d>(64));
  top->add("relu", std::make_unique<nn::ReLU>());
  top->add("maxpool", std::make_unique<nn::MaxPool2d>(3, 2, 1));
  top->add("layer1", make_stage(64, 64, 256, 3, 1, rng));
  top->add("layer2", make_stage(256, 128, 512, 4, 2, rng));
  top->add("layer3", make_stage(512, 256, 1024, 6, 2, rng));
  top->add("layer4", make_stage(1024, 512, 2048, 3, 2, rng));
  top->add("avgpool", std::make_unique<nn::GlobalAvgPool>());
  top->add("tap", std::make_unique<nn::Tap>());
  top->add("fc", std::make_unique<nn::Linear>(2048, spec.num_classes, true, rng));
  return Model{spec, std::move(top), "tap"};
}

// The 13-conv layout shared by VGG16 and VGG16-BN; -1 marks a 2x2 maxpool.
void add_vgg_features(Sequential& f, bool with_bn, Rng& rng) {
  static constexpr int kCfg[] = {64,  64,  -1, 128, 128, -1,  256, 256, 256,
                                 -1,  512, 512, 512, -1,  512, 512, 512, -1};
  int idx = 0;
  Index in = 3;
  for (int v : kCfg) {
    if (v < 0) {
      f.add(std::to_string(idx++), std::make_unique<nn::MaxPool2d>(2, 2));
      continue;
    }
    f.add(std::to_string(idx++), std::make_unique<nn::Conv2d>(in, v, 3, 1, 1, 1, true, rng));
    if (with_bn) f.add(std::to_string(idx++), std::make_unique<BatchNorm2d>(v));
    f.add(std::to_string(idx++), std::make_unique<nn::ReLU>());
    in = v;
  }
}

Model build_vgg16(const ModelSpec& spec, bool with_bn, Rng& rng) {
  auto top = std::make_unique<Sequential>();
  auto features = std::make_unique<Sequential>();
  add_vgg_features(*features, with_bn, rng);
  top->add("features", std::move(features));
  top->add("avgpool", std::make_unique<nn::AdaptiveAvgPool2d>(7));
  top->add("flatten", std::make_unique<nn::Flatten>());
  auto cls = std::make_unique<Sequential>();
  cls->add("0", std::make_unique<nn::Linear>(512 * 7 * 7, 4096, true, rng));
  cls->add("1", std::make_unique<nn::ReLU>());
  cls->add("2", std::make_unique<nn::Dropout>(0.5f));
  cls->add("3", std::make_unique<nn::Linear>(4096, 4096, true, rng));
  cls->add("4", std::make_unique<nn::ReLU>());
  cls->add("5", std::make_unique<nn::Dropout>(0.5f));
  cls->add("tap", std::make_unique<nn::Tap>());
  cls->add("6", std::make_unique<nn::Linear>(4096, spec.num_classes, true, rng));
  top->add("classifier", std::move(cls));
  return Model{spec, std::move(top), "classifier.tap"};
}

Model build_vit_b16(const ModelSpec& spec, Rng& rng) {
  auto top = std::make_unique<Sequential>();
  // The backbone registers under the empty name so its parameters keep the
  // published paths (class_token, conv_proj.*, encoder.*).
  top->add("", std::make_unique<nn::ViTBackbone>(224, 16, 768, 12, 12, 3072, rng));
  top->add("tap", std::make_unique<nn::Tap>());
  auto heads = std::make_unique<Sequential>();
  heads->add("head", std::make_unique<nn::Linear>(768, spec.num_classes, true, rng));
  top->add("heads", std::move(heads));
  return Model{spec, std::move(top), "tap"};
}

Model build_convnext_tiny(const ModelSpec& spec, Rng& rng) {
  static constexpr Index kWidths[4] = {96, 192, 384, 768};
  static constexpr int kDepths[4] = {3, 3, 9, 3};
  constexpr int kTotalBlocks = 18;

  auto top = std::make_unique<Sequential>();
  auto features = std::make_unique<Sequential>();
  auto stem = std::make_unique<Sequential>();
  stem->add("0", std::make_unique<nn::Conv2d>(3, kWidths[0], 4, 4, 0, 1, true, rng));
  stem->add("1", std::make_unique<nn::LayerNorm2d>(kWidths[0]));
  features->add("0", std::move(stem));

  int block_id = 0;
  int feature_idx = 1;
  for (int s = 0; s < 4; ++s) {
    auto stage = std::make_unique<Sequential>();
    for (int b = 0; b < kDepths[s]; ++b) {
      // Drop probability ramps linearly over the block sequence.
      const float sd = 0.1f * static_cast<float>(block_id) / (kTotalBlocks - 1);
      stage->add(std::to_string(b), std::make_unique<nn::CnBlock>(kWidths[s], 1e-6f, sd, rng));
      ++block_id;
    }
    features->add(std::to_string(feature_idx++), std::move(stage));
    if (s < 3) {
      auto ds = std::make_unique<Sequential>();
      ds->add("0", std::make_unique<nn::LayerNorm2d>(kWidths[s]));
      ds->add("1", std::make_unique<nn::Conv2d>(kWidths[s], kWidths[s + 1], 2, 2, 0, 1, true, rng));
      features->add(std::to_string(feature_idx++), std::move(ds));
    }
  }
  top->add("features", std::move(features));
  top->add("avgpool", std::make_unique<nn::AdaptiveAvgPool2d>(1));
  auto cls = std::make_unique<Sequential>();
  cls->add("0", std::make_unique<nn::LayerNorm2d>(kWidths[3]));
  cls->add("1", std::make_unique<nn::Flatten>());
  cls->add("tap", std::make_unique<nn::Tap>());
  cls->add("2", std::make_unique<nn::Linear>(kWidths[3], spec.num_classes, true, rng));
  top->add("classifier", std::move(cls));
  return Model{spec, std::move(top), "classifier.tap"};
}

// Desk-tier CNN for 32x32 synthetic images: three conv+norm stages, global
// average pooling, linear head. Small enough that five 100-epoch seeds train
// on a CPU in minutes, with the same BN/GN/freeze surgery surface as the
// real networks.
Model build_tiny_cnn(const ModelSpec& spec, Rng& rng) {
  auto top = std::make_unique<Sequential>();
  top->add("conv1", std::make_unique<nn::Conv2d>(3, 16, 3, 1, 1, 1, false, rng));
  top->add("bn1", std::make_unique<BatchNorm2d>(16));
  top->add("relu1", std::make_unique<nn::ReLU>());
  top->add("pool1", std::make_unique<nn::MaxPool2d>(2, 2));
  top->add("conv2", std::make_unique<nn::Conv2d>(16, 32, 3, 1, 1, 1, false, rng));
  top->add("bn2", std::make_unique<BatchNorm2d>(32));
  top->add("relu2", std::make_unique<nn::ReLU>());
  top->add("pool2", std::make_unique<nn::MaxPool2d>(2, 2));
  top->add("conv3", std::make_unique<nn::Conv2d>(32, 64, 3, 1, 1, 1, false, rng));
  top->add("bn3", std::make_unique<BatchNorm2d>(64));
  top->add("relu3", std::make_unique<nn::ReLU>());
  top->add("avgpool", std::make_unique<nn::GlobalAvgPool>());
  top->add("tap", std::make_unique<nn::Tap>());
  top->add("fc", std::make_unique<nn::Linear>(64, spec.num_classes, true, rng));
  return Model{spec, std::move(top), "tap"};
}

std::string weights_file_name(const ModelSpec& spec) {
  if (spec.base == Base::kResNet50)
    return spec.norm_strategy == NormStrategy::kReplaceBnWithGn ? "resnet50_gn.ckpt"
                                                                : "resnet50.ckpt";
  switch (spec.base) {
    case Base::kVgg16: return "vgg16.ckpt";
    case Base::kVgg16Bn: return "vgg16_bn.ckpt";
    case Base::kVitB16: return "vit_b16.ckpt";
    case Base::kConvNextTiny: return "convnext_tiny.ckpt";
    default: throw ValidationError("no pretrained weights defined for this base");
  }
}

// The classifier parameters that stay freshly initialized when pretrained
// weights load (they are shaped for 5 classes, not 1000).
std::vector<std::string> head_param_paths(const ModelSpec& spec) {
  auto wb = [](const std::string& stem) {
    return std::vector<std::string>{stem + ".weight", stem + ".bias"};
  };
  switch (spec.base) {
    case Base::kResNet50:
    case Base::kTinyCnn: {
      if (spec.head == Head::kLinear) return wb("fc");
      std::vector<std::string> out;
      for (const char* stem : {"fc.0", "fc.3", "fc.6"})
        for (const std::string& p : wb(stem)) out.push_back(p);
      return out;
    }
    case Base::kVgg16:
    case Base::kVgg16Bn: return wb("classifier.6");
    case Base::kVitB16: return wb("heads.head");
    case Base::kConvNextTiny: return wb("classifier.2");
  }
  throw ValidationError("head_param_paths: bad base");
}

}  // namespace

int replace_bn_with_gn(Model& model, Index num_groups) {
  if (num_groups <= 0) throw ValidationError("replace_bn_with_gn: num_groups must be positive");
  int swapped = 0;
  const std::function<void(Layer&, const std::string&)> walk = [&](Layer& layer,
                                                                   const std::string& prefix) {
    layer.visit_children([&](const std::string& name, LayerPtr& child) {
      const std::string path = nn::join_name(prefix, name);
      if (std::string_view(child->kind()) == "batchnorm2d") {
        const Index channels = static_cast<BatchNorm2d&>(*child).channels();
        if (channels % num_groups != 0)
          throw ValidationError("replace_bn_with_gn: layer '" + path + "' has " +
                                std::to_string(channels) + " channels, not divisible by " +
                                std::to_string(num_groups) + " groups");
        child = std::make_unique<nn::GroupNorm>(num_groups, channels);
        ++swapped;
      } else {
        walk(*child, path);
      }
    });
  };
  walk(*model.root, "");
  return swapped;
}

void add_vgg_fc_head(Model& model, Rng& rng) {
  auto* top = dynamic_cast<Sequential*>(model.root.get());
  if (!top) throw ValidationError("add_vgg_fc_head: model root is not a layer sequence");
  Layer* head = top->find("fc");
  if (!head)
    throw ValidationError(
        "add_vgg_fc_head: model has no single linear head named 'fc' (VGG-family classifiers "
        "are already the FC stack)");
  if (std::string_view(head->kind()) != "linear")
    throw ValidationError("add_vgg_fc_head: head is already VGG_FC");

  auto& linear = static_cast<nn::Linear&>(*head);
  const Index in_features = linear.weight.value.dim(1);
  const Index num_classes = linear.weight.value.dim(0);

  auto stack = std::make_unique<Sequential>();
  stack->add("0", std::make_unique<nn::Linear>(in_features, 4096, true, rng));
  stack->add("1", std::make_unique<nn::ReLU>());
  stack->add("2", std::make_unique<nn::Dropout>(0.5f));
  stack->add("3", std::make_unique<nn::Linear>(4096, 4096, true, rng));
  stack->add("4", std::make_unique<nn::ReLU>());
  stack->add("5", std::make_unique<nn::Dropout>(0.5f));
  stack->add("tap", std::make_unique<nn::Tap>());
  stack->add("6", std::make_unique<nn::Linear>(4096, num_classes, true, rng));
  top->replace("fc", std::move(stack));
  model.feature_tap = "fc.tap";
  model.spec.head = Head::kVggFc;
}

int weight_bearing_layer_count(const Model& model) {
  int count = 0;
  nn::walk_layers(*model.root, [&](const std::string&, Layer& l) {
    const std::string_view k = l.kind();
    if (k == "conv2d" || k == "linear") ++count;
  });
  return count;
}

void apply_freeze_policy(Model& model, const ModelSpec& spec) {
  if (spec.norm_strategy == NormStrategy::kFreezeBn) {
    nn::walk_layers(*model.root, [&](const std::string&, Layer& l) {
      if (std::string_view(l.kind()) == "batchnorm2d") static_cast<BatchNorm2d&>(l).freeze();
    });
  }
  if (!spec.trainable_last_k) return;

  const int k = *spec.trainable_last_k;
  std::vector<Layer*> bearing;
  nn::walk_layers(*model.root, [&](const std::string&, Layer& l) {
    const std::string_view kd = l.kind();
    if (kd == "conv2d" || kd == "linear") bearing.push_back(&l);
  });
  if (k > static_cast<int>(bearing.size()))
    throw ValidationError("apply_freeze_policy: trainable_last_k=" + std::to_string(k) +
                          " exceeds the " + std::to_string(bearing.size()) +
                          " weight-bearing layers");

  for (const nn::NamedParam& np : nn::collect_params(*model.root)) np.param->trainable = false;
  for (std::size_t i = bearing.size() - static_cast<std::size_t>(k); i < bearing.size(); ++i)
    bearing[i]->visit_params("", [](const std::string&, nn::Param& p) { p.trainable = true; });
}

Tensor extract_features(Model& model, const Tensor& images) {
  model.forward(images, nn::Mode::kEval);
  const Tensor& feats = model.tap().last();
  if (feats.rank() != 2)
    throw ValidationError("extract_features: tap activation is not an N x D matrix");
  return feats;
}

Model build_model(const ModelSpec& spec, const std::filesystem::path& weights_cache,
                  std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);

  Model model = [&] {
    switch (spec.base) {
      case Base::kResNet50: return build_resnet50(spec, rng);
      case Base::kVgg16: return build_vgg16(spec, false, rng);
      case Base::kVgg16Bn: return build_vgg16(spec, true, rng);
      case Base::kVitB16: return build_vit_b16(spec, rng);
      case Base::kConvNextTiny: return build_convnext_tiny(spec, rng);
      case Base::kTinyCnn: return build_tiny_cnn(spec, rng);
    }
    throw ValidationError("build_model: bad base enum");
  }();

  if (spec.head == Head::kVggFc &&
      (spec.base == Base::kResNet50 || spec.base == Base::kTinyCnn))
    add_vgg_fc_head(model, rng);

  if (spec.norm_strategy == NormStrategy::kReplaceBnWithGn) {
    // 32 groups matches the published GN-pretrained checkpoint; the desk CNN
    // is narrower (16 channels in its first stage), so it uses 8.
    const Index groups = spec.base == Base::kTinyCnn ? 8 : 32;
    replace_bn_with_gn(model, groups);
  }

  if (spec.pretrained) {
    const std::filesystem::path file = weights_cache / weights_file_name(spec);
    if (weights_cache.empty() || !std::filesystem::exists(file))
      throw IoError("pretrained weights for " + std::string(base_name(spec.base)) +
                    " not found at '" + file.string() +
                    "'. Convert the published weights into the cache with\n"
                    "  python3 tools/export_weights.py --arch " +
                    weights_file_name(spec).substr(0, weights_file_name(spec).size() - 5) +
                    " --out <weights-cache>/" + weights_file_name(spec) +
                    "\n(see README, 'Pretrained weights').");
    load_weights_into(model, read_archive(file), head_param_paths(spec));
  }

  if (spec.norm_strategy == NormStrategy::kFreezeBn || spec.trainable_last_k)
    apply_freeze_policy(model, spec);
  return model;
}

}  // namespace wbc::zoo
