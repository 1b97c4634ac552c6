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

#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "wbc/core/error.hpp"
#include "wbc/zoo/build.hpp"
#include "wbc/zoo/checkpoint.hpp"
#include "wbc/zoo/model.hpp"
#include "wbc/zoo/spec.hpp"

using namespace wbc;
using namespace wbc::zoo;

namespace {

// Normalization-layer count of the standard 50-layer residual network,
// derived from the block plan rather than the built graph: one stem norm,
// three per bottleneck over the (3, 4, 6, 3) stages, one per projection
// shortcut (first block of each stage).
constexpr int kResNet50BnCount = 1 + 3 * (3 + 4 + 6 + 3) + 4;

// Conv/linear count the freeze policy sees: stem conv + 3 convs per block +
// one projection per stage + the classifier.
constexpr int kResNet50WeightLayers = 1 + 3 * (3 + 4 + 6 + 3) + 4 + 1;

std::filesystem::path temp_dir(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() / (std::string("wbcbench_zoo_") + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::string> param_names(Model& m) {
  std::vector<std::string> names;
  for (const nn::NamedParam& np : nn::collect_params(*m.root)) names.push_back(np.name);
  return names;
}

int count_kind(Model& m, std::string_view kind) {
  int n = 0;
  nn::walk_layers(*m.root, [&](const std::string&, nn::Layer& l) {
    if (std::string_view(l.kind()) == kind) ++n;
  });
  return n;
}

}  // namespace

TEST_SUITE("model spec") {
  TEST_CASE("variant table round trip") {
    for (const std::string& id : known_variants()) {
      ModelSpec spec = spec_for_variant(id, /*pretrained=*/false);
      CHECK(spec.variant_id == (id == "a′" ? "a'" : id));
      ModelSpec back = ModelSpec::from_json(spec.to_json());
      CHECK(back == spec);
    }
    CHECK(known_variants().size() == 12);
  }

  TEST_CASE("variant configurations match the ablation table") {
    auto v = [](const char* id) { return spec_for_variant(id, false); };
    CHECK(v("a").base == Base::kResNet50);
    CHECK(v("a").head == Head::kLinear);
    CHECK(v("a").norm_strategy == NormStrategy::kDefault);
    CHECK(v("a'").head == Head::kVggFc);
    CHECK(v("a'").base == Base::kResNet50);
    CHECK(v("i").norm_strategy == NormStrategy::kReplaceBnWithGn);
    CHECK(v("ii").norm_strategy == NormStrategy::kFreezeBn);
    CHECK_FALSE(v("ii").trainable_last_k.has_value());
    CHECK(v("iii").norm_strategy == NormStrategy::kFreezeBn);
    CHECK(v("iii").trainable_last_k == 16);
    CHECK(v("b").base == Base::kVgg16);
    CHECK(v("b").head == Head::kVggFc);
    CHECK(v("b'").base == Base::kVgg16Bn);
    CHECK(v("b'").head == Head::kVggFc);
    CHECK(v("c").base == Base::kVitB16);
    CHECK(v("d").base == Base::kConvNextTiny);
    CHECK(v("desk-gn").base == Base::kTinyCnn);
    CHECK_FALSE(v("desk-bn").pretrained);
  }

  TEST_CASE("unicode prime folds to ASCII") {
    CHECK(spec_for_variant("a′", false).variant_id == "a'");
    CHECK(spec_for_variant("b′", false).variant_id == "b'");
  }

  TEST_CASE("inconsistent specs are rejected") {
    CHECK_THROWS_AS(spec_for_variant("z", false), ValidationError);

    ModelSpec gn_on_vgg = spec_for_variant("b", false);
    gn_on_vgg.norm_strategy = NormStrategy::kReplaceBnWithGn;
    CHECK_THROWS_AS(gn_on_vgg.validate(), ValidationError);

    ModelSpec freeze_vgg = spec_for_variant("b", false);
    freeze_vgg.norm_strategy = NormStrategy::kFreezeBn;
    CHECK_THROWS_AS(freeze_vgg.validate(), ValidationError);

    ModelSpec wrong_classes = spec_for_variant("a", false);
    wrong_classes.num_classes = 7;
    CHECK_THROWS_AS(wrong_classes.validate(), ValidationError);

    ModelSpec mismatch = spec_for_variant("a", false);
    mismatch.head = Head::kVggFc;  // that is variant a', not a
    CHECK_THROWS_AS(mismatch.validate(), ValidationError);

    ModelSpec pretrained_tiny = spec_for_variant("desk-bn", false);
    pretrained_tiny.pretrained = true;
    CHECK_THROWS_AS(pretrained_tiny.validate(), ValidationError);
  }
}

TEST_SUITE("model building") {
  TEST_CASE("resnet50 parameter names follow the published layout") {
    ModelSpec spec = spec_for_variant("a", false);
    Model m = build_model(spec);
    auto names = param_names(m);
    std::set<std::string> name_set(names.begin(), names.end());

    for (const char* expected :
         {"conv1.weight", "bn1.weight", "bn1.bias", "layer1.0.conv1.weight",
          "layer1.0.downsample.0.weight", "layer1.0.downsample.1.weight", "layer2.3.conv3.weight",
          "layer3.5.bn3.bias", "layer4.2.conv2.weight", "fc.weight", "fc.bias"})
      CHECK_MESSAGE(name_set.count(expected) == 1, "missing " << expected);
    CHECK(name_set.count("conv1.bias") == 0);  // stem conv has no bias

    // 161 parameter tensors: 53 convs (no bias) + 53 norms x 2 + fc x 2.
    CHECK(names.size() == 161);
    CHECK(count_kind(m, "batchnorm2d") == kResNet50BnCount);
    CHECK(weight_bearing_layer_count(m) == kResNet50WeightLayers);

    auto buffers = nn::collect_buffers(*m.root);
    CHECK(static_cast<int>(buffers.size()) == 2 * kResNet50BnCount);
    CHECK(buffers[0].name == "bn1.running_mean");
  }

  TEST_CASE("resnet50 forward produces 5 logits and 2048-d features") {
    Model m = build_model(spec_for_variant("a", false));
    Rng rng(7);
    Tensor x = Tensor::randn({2, 3, 224, 224}, rng);
    Tensor logits = m.forward(x, nn::Mode::kEval);
    CHECK(logits.dims() == std::vector<Index>{2, 5});

    Tensor feats = extract_features(m, x);
    CHECK(feats.dims() == std::vector<Index>{2, 2048});

    // Eval mode is deterministic: same input, same features.
    Tensor feats2 = extract_features(m, x);
    for (Index i = 0; i < feats.size(); ++i) {
      CHECK(feats[i] == feats2[i]);
      if (feats[i] != feats2[i]) break;
    }
  }

  TEST_CASE("vgg16 names and shapes") {
    Model m = build_model(spec_for_variant("b", false));
    auto names = param_names(m);
    std::set<std::string> name_set(names.begin(), names.end());
    for (const char* expected :
         {"features.0.weight", "features.0.bias", "features.28.weight", "classifier.0.weight",
          "classifier.3.weight", "classifier.6.weight", "classifier.6.bias"})
      CHECK_MESSAGE(name_set.count(expected) == 1, "missing " << expected);
    CHECK(count_kind(m, "batchnorm2d") == 0);
    // 13 convs + 3 FC, weight+bias each.
    CHECK(names.size() == 32);
    CHECK(weight_bearing_layer_count(m) == 16);

    Rng rng(3);
    Tensor x = Tensor::randn({1, 3, 224, 224}, rng);
    CHECK(m.forward(x, nn::Mode::kEval).dims() == std::vector<Index>{1, 5});
    CHECK(extract_features(m, x).dims() == std::vector<Index>{1, 4096});
  }

  TEST_CASE("vgg16_bn inserts norm after every conv") {
    Model m = build_model(spec_for_variant("b'", false));
    auto names = param_names(m);
    std::set<std::string> name_set(names.begin(), names.end());
    for (const char* expected : {"features.1.weight", "features.41.bias", "features.40.weight"})
      CHECK_MESSAGE(name_set.count(expected) == 1, "missing " << expected);
    CHECK(count_kind(m, "batchnorm2d") == 13);
    CHECK(names.size() == 32 + 2 * 13);
  }

  TEST_CASE("vit names and shapes") {
    Model m = build_model(spec_for_variant("c", false));
    auto names = param_names(m);
    std::set<std::string> name_set(names.begin(), names.end());
    for (const char* expected :
         {"class_token", "conv_proj.weight", "conv_proj.bias", "encoder.pos_embedding",
          "encoder.layers.encoder_layer_0.ln_1.weight",
          "encoder.layers.encoder_layer_11.self_attention.out_proj.weight",
          "encoder.layers.encoder_layer_5.mlp.0.weight", "encoder.ln.weight", "heads.head.weight"})
      CHECK_MESSAGE(name_set.count(expected) == 1, "missing " << expected);
    CHECK(count_kind(m, "encoderblock") == 12);
    CHECK(count_kind(m, "batchnorm2d") == 0);

    Rng rng(5);
    Tensor x = Tensor::randn({1, 3, 224, 224}, rng);
    CHECK(m.forward(x, nn::Mode::kEval).dims() == std::vector<Index>{1, 5});
    CHECK(extract_features(m, x).dims() == std::vector<Index>{1, 768});
  }

  TEST_CASE("convnext names and shapes") {
    Model m = build_model(spec_for_variant("d", false));
    auto names = param_names(m);
    std::set<std::string> name_set(names.begin(), names.end());
    for (const char* expected :
         {"features.0.0.weight", "features.0.1.weight", "features.1.0.block.0.weight",
          "features.1.0.layer_scale", "features.2.0.weight", "features.2.1.weight",
          "features.5.8.block.5.bias", "features.7.2.block.3.weight", "classifier.0.weight",
          "classifier.2.weight"})
      CHECK_MESSAGE(name_set.count(expected) == 1, "missing " << expected);
    CHECK(count_kind(m, "cnblock") == 18);
    CHECK(count_kind(m, "batchnorm2d") == 0);

    Rng rng(6);
    Tensor x = Tensor::randn({1, 3, 224, 224}, rng);
    CHECK(m.forward(x, nn::Mode::kEval).dims() == std::vector<Index>{1, 5});
    CHECK(extract_features(m, x).dims() == std::vector<Index>{1, 768});
  }

  TEST_CASE("tiny cnn trains the desk tier") {
    Model m = build_model(spec_for_variant("desk-bn", false));
    CHECK(count_kind(m, "batchnorm2d") == 3);
    CHECK(weight_bearing_layer_count(m) == 4);
    Rng rng(9);
    Tensor x = Tensor::randn({4, 3, 32, 32}, rng);
    CHECK(m.forward(x, nn::Mode::kTrain).dims() == std::vector<Index>{4, 5});
    CHECK(extract_features(m, x).dims() == std::vector<Index>{4, 64});
  }

  TEST_CASE("missing pretrained weights fail with instructions") {
    ModelSpec spec = spec_for_variant("a", /*pretrained=*/true);
    try {
      build_model(spec, temp_dir("empty_cache"));
      FAIL("expected IoError");
    } catch (const IoError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("resnet50.ckpt") != std::string::npos);
      CHECK(msg.find("export_weights.py") != std::string::npos);
    }
  }
}

TEST_SUITE("model surgery") {
  TEST_CASE("bn to gn swap count matches the architecture oracle") {
    Model m = build_model(spec_for_variant("a", false));
    const int swapped = replace_bn_with_gn(m, 32);
    CHECK(swapped == kResNet50BnCount);
    CHECK(count_kind(m, "batchnorm2d") == 0);
    CHECK(count_kind(m, "groupnorm") == kResNet50BnCount);

    // Canonical paths survive the swap, and no running statistics remain.
    auto names = param_names(m);
    std::set<std::string> name_set(names.begin(), names.end());
    CHECK(name_set.count("bn1.weight") == 1);
    CHECK(name_set.count("layer1.0.downsample.1.weight") == 1);
    CHECK(nn::collect_buffers(*m.root).empty());

    Rng rng(11);
    Tensor x = Tensor::randn({2, 3, 224, 224}, rng);
    CHECK(m.forward(x, nn::Mode::kEval).dims() == std::vector<Index>{2, 5});
  }

  TEST_CASE("gn swap on a bn-free model is a no-op") {
    Model m = build_model(spec_for_variant("b", false));
    CHECK(replace_bn_with_gn(m, 32) == 0);
    CHECK(count_kind(m, "groupnorm") == 0);
  }

  TEST_CASE("gn swap rejects indivisible channel counts") {
    Model m = build_model(spec_for_variant("desk-bn", false));
    // The tiny CNN's first stage has 16 channels; 32 groups cannot divide it.
    try {
      replace_bn_with_gn(m, 32);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("bn1") != std::string::npos);
    }
  }

  TEST_CASE("vgg fc head replaces the linear classifier") {
    Model m = build_model(spec_for_variant("a", false));
    const auto before = count_trainable(m).all();
    Rng rng(13);
    add_vgg_fc_head(m, rng);
    CHECK(m.spec.head == Head::kVggFc);
    CHECK(m.feature_tap == "fc.tap");
    const auto after = count_trainable(m).all();
    CHECK(after > before);

    auto names = param_names(m);
    std::set<std::string> name_set(names.begin(), names.end());
    for (const char* expected : {"fc.0.weight", "fc.3.weight", "fc.6.weight"})
      CHECK_MESSAGE(name_set.count(expected) == 1, "missing " << expected);
    CHECK(name_set.count("fc.weight") == 0);

    Tensor x = Tensor::randn({2, 3, 224, 224}, rng);
    CHECK(m.forward(x, nn::Mode::kEval).dims() == std::vector<Index>{2, 5});
    CHECK(extract_features(m, x).dims() == std::vector<Index>{2, 4096});

    CHECK_THROWS_AS(add_vgg_fc_head(m, rng), ValidationError);  // already VGG_FC
  }

  TEST_CASE("freeze policy pins bn and the trainable mask partitions") {
    Model m = build_model(spec_for_variant("ii", false));
    int frozen_bn = 0;
    nn::walk_layers(*m.root, [&](const std::string&, nn::Layer& l) {
      if (std::string_view(l.kind()) == "batchnorm2d" && static_cast<nn::BatchNorm2d&>(l).frozen())
        ++frozen_bn;
    });
    CHECK(frozen_bn == kResNet50BnCount);

    const TrainableCounts counts = count_trainable(m);
    CHECK(counts.all() == 161);
    CHECK(counts.frozen == 2 * kResNet50BnCount);  // all norm affines, nothing else
    CHECK(counts.trainable == 161 - 2 * kResNet50BnCount);
  }

  TEST_CASE("last-k policy keeps exactly k weight layers trainable") {
    Model m = build_model(spec_for_variant("iii", false));
    // Variant iii: frozen BN plus only the last 16 conv/linear layers
    // trainable. Each trainable conv contributes one tensor (no bias), the
    // classifier two.
    const TrainableCounts counts = count_trainable(m);
    CHECK(counts.trainable == 15 + 2);
    CHECK(counts.all() == 161);

    // The trainable set must sit at the output end of the graph.
    std::vector<std::string> trainable;
    for (const nn::NamedParam& np : nn::collect_params(*m.root))
      if (np.param->trainable) trainable.push_back(np.name);
    CHECK(std::count_if(trainable.begin(), trainable.end(), [](const std::string& n) {
            return n.rfind("layer4.", 0) == 0 || n.rfind("fc.", 0) == 0 ||
                   n.rfind("layer3.4", 0) == 0 || n.rfind("layer3.5", 0) == 0;
          }) == static_cast<std::ptrdiff_t>(trainable.size()));
    CHECK(std::count_if(trainable.begin(), trainable.end(), [](const std::string& n) {
            return n.rfind("fc.", 0) == 0;
          }) == 2);
  }

  TEST_CASE("degenerate k leaves every weight layer trainable, bn still frozen") {
    ModelSpec spec = spec_for_variant("desk-frozen", false);
    spec.trainable_last_k = 4;  // == weight_bearing_layer_count for the tiny CNN
    spec.variant_id = "desk-frozen";
    Model m = build_model(spec_for_variant("desk-frozen", false));
    apply_freeze_policy(m, spec);
    const TrainableCounts counts = count_trainable(m);
    // 3 convs (weight only) + fc (weight+bias) trainable; 3 BN affines frozen.
    CHECK(counts.trainable == 5);
    CHECK(counts.frozen == 6);

    ModelSpec too_deep = spec;
    too_deep.trainable_last_k = 5;
    CHECK_THROWS_AS(apply_freeze_policy(m, too_deep), ValidationError);
  }

  TEST_CASE("frozen bn behaves as a fixed affine in both modes") {
    Model m = build_model(spec_for_variant("desk-frozen", false));
    Rng rng(21);
    Tensor x = Tensor::randn({4, 3, 32, 32}, rng);
    Tensor train_out = m.forward(x, nn::Mode::kTrain);
    Tensor eval_out = m.forward(x, nn::Mode::kEval);
    for (Index i = 0; i < train_out.size(); ++i) {
      CHECK(train_out[i] == eval_out[i]);
      if (train_out[i] != eval_out[i]) break;
    }
    const std::string digest = frozen_state_checksum(m);
    m.forward(x, nn::Mode::kTrain);  // would move running stats if unfrozen
    CHECK(frozen_state_checksum(m) == digest);
  }
}

TEST_SUITE("checkpoints") {
  TEST_CASE("archive round trip preserves values and metadata") {
    const auto dir = temp_dir("archive");
    std::vector<ArchiveEntry> entries;
    entries.push_back({"b.second", {2, 3}, {1, 2, 3, 4, 5, 6}});
    entries.push_back({"a.first", {4}, {-1.5f, 0.25f, 3e-7f, 9.0f}});
    write_archive(dir / "w.ckpt", "{\"note\":\"test\"}", entries);

    Archive a = read_archive(dir / "w.ckpt");
    CHECK(a.metadata_json == "{\"note\":\"test\"}");
    REQUIRE(a.entries.size() == 2);
    CHECK(a.entries[0].name == "a.first");  // sorted
    CHECK(a.find("b.second")->dims == std::vector<Index>{2, 3});
    CHECK(a.find("a.first")->data[3] == 9.0f);
    CHECK(a.find("nope") == nullptr);
  }

  TEST_CASE("corrupt archives are rejected") {
    const auto dir = temp_dir("corrupt");
    std::FILE* f = std::fopen((dir / "bad.ckpt").c_str(), "wb");
    REQUIRE(f);
    std::fputs("not a checkpoint", f);
    std::fclose(f);
    CHECK_THROWS_AS(read_archive(dir / "bad.ckpt"), IoError);
    CHECK_THROWS_AS(read_archive(dir / "absent.ckpt"), IoError);
  }

  TEST_CASE("model checkpoint round trips through the spec") {
    const auto dir = temp_dir("model_ckpt");
    Model m = build_model(spec_for_variant("desk-gn", false), {}, /*seed=*/42);
    // Make the state distinctive.
    Rng rng(77);
    for (const nn::NamedParam& np : nn::collect_params(*m.root))
      for (Index i = 0; i < np.param->value.size(); ++i)
        np.param->value[i] += 0.01f * static_cast<float>(rng.normal());

    const auto path = save_checkpoint(m, dir);
    CHECK(path.filename() == "model.ckpt");

    Model back = load_checkpoint(path);
    CHECK(back.spec == m.spec);
    CHECK(back.feature_tap == m.feature_tap);

    auto orig = nn::collect_params(*m.root);
    auto restored = nn::collect_params(*back.root);
    REQUIRE(orig.size() == restored.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
      CHECK(orig[i].name == restored[i].name);
      bool equal = orig[i].param->value.size() == restored[i].param->value.size();
      for (Index j = 0; equal && j < orig[i].param->value.size(); ++j)
        equal = orig[i].param->value[j] == restored[i].param->value[j];
      CHECK_MESSAGE(equal, "tensor mismatch at " << orig[i].name);
    }

    Rng xr(5);
    Tensor x = Tensor::randn({2, 3, 32, 32}, xr);
    Tensor y1 = m.forward(x, nn::Mode::kEval);
    Tensor y2 = back.forward(x, nn::Mode::kEval);
    for (Index i = 0; i < y1.size(); ++i) {
      CHECK(y1[i] == y2[i]);
      if (y1[i] != y2[i]) break;
    }
  }

  TEST_CASE("frozen variant checkpoint restores the trainable mask") {
    const auto dir = temp_dir("frozen_ckpt");
    Model m = build_model(spec_for_variant("desk-frozen", false));
    save_checkpoint(m, dir);
    Model back = load_checkpoint(dir / "model.ckpt");
    CHECK(count_trainable(back).frozen == count_trainable(m).frozen);
    CHECK(frozen_state_checksum(back) == frozen_state_checksum(m));
    int frozen_bn = 0;
    nn::walk_layers(*back.root, [&](const std::string&, nn::Layer& l) {
      if (std::string_view(l.kind()) == "batchnorm2d" && static_cast<nn::BatchNorm2d&>(l).frozen())
        ++frozen_bn;
    });
    CHECK(frozen_bn == 3);
  }

  TEST_CASE("pretrained load skips the head and fails on gaps") {
    const auto dir = temp_dir("weights");
    // Fabricate a weight archive from one tiny CNN and load it into another.
    Model donor = build_model(spec_for_variant("desk-bn", false), {}, /*seed=*/1);
    save_checkpoint(donor, dir);
    Archive archive = read_archive(dir / "model.ckpt");

    Model receiver = build_model(spec_for_variant("desk-bn", false), {}, /*seed=*/2);
    auto lookup = [](Model& m, const std::string& name) -> nn::Param& {
      for (const nn::NamedParam& np : nn::collect_params(*m.root))
        if (np.name == name) return *np.param;
      throw std::runtime_error("no param " + name);
    };
    const float head_before = lookup(receiver, "fc.weight").value[0];
    CHECK(lookup(receiver, "conv1.weight").value[0] != lookup(donor, "conv1.weight").value[0]);

    load_weights_into(receiver, archive, {"fc.weight", "fc.bias"});
    CHECK(lookup(receiver, "fc.weight").value[0] == head_before);  // head kept fresh
    CHECK(lookup(receiver, "conv1.weight").value[0] == lookup(donor, "conv1.weight").value[0]);

    Archive gappy = archive;
    std::erase_if(gappy.entries, [](const ArchiveEntry& e) { return e.name == "conv2.weight"; });
    Model other = build_model(spec_for_variant("desk-bn", false), {}, /*seed=*/3);
    try {
      load_weights_into(other, gappy, {"fc.weight", "fc.bias"});
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("conv2.weight") != std::string::npos);
    }

    Archive bad_shape = archive;
    for (ArchiveEntry& e : bad_shape.entries)
      if (e.name == "bn1.running_mean") {
        e.dims = {8};
        e.data.resize(8);
      }
    Model third = build_model(spec_for_variant("desk-bn", false), {}, /*seed=*/4);
    try {
      load_weights_into(third, bad_shape, {"fc.weight", "fc.bias"});
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("bn1.running_mean") != std::string::npos);
    }
  }
}
