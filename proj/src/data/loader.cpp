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

#include "wbc/data/loader.hpp"

#include "wbc/data/image.hpp"

namespace wbc::data {

namespace {

// Stream id namespace for augmentation draws.
constexpr std::uint64_t kAugmentStream = 0x41756774ULL;

std::vector<float> standardized_pixels(const std::filesystem::path& root,
                                       const ImageRecord& record, const PreprocessConfig& cfg) {
  cfg.validate();
  const Image img = decode_image(root / record.path);
  std::vector<float> px = resize_bilinear(img, cfg.target_size);
  for (std::size_t i = 0; i < px.size(); i += 3)
    for (int c = 0; c < 3; ++c)
      px[i + c] = (px[i + c] - cfg.channel_mean[c]) / cfg.channel_std[c];
  return px;
}

// HWC standardized floats -> CHW with optional flips.
void write_chw(const std::vector<float>& hwc, int size, bool flip_h, bool flip_v, float* out) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y) {
      const int sy = flip_v ? size - 1 - y : y;
      for (int x = 0; x < size; ++x) {
        const int sx = flip_h ? size - 1 - x : x;
        out[(static_cast<std::size_t>(c) * size + y) * size + x] =
            hwc[(static_cast<std::size_t>(sy) * size + sx) * 3 + c];
      }
    }
}

}  // namespace

LoadedSample load_sample(const std::filesystem::path& root, const ImageRecord& record,
                         const PreprocessConfig& cfg, Rng* rng, bool training) {
  std::vector<float> px = standardized_pixels(root, record, cfg);
  const int size = cfg.target_size;
  if (training && cfg.train_augment) {
    if (!rng) throw ValidationError("load_sample: training augmentation needs an rng");
    const bool flip_h = rng->bernoulli(0.5);
    const bool flip_v = rng->bernoulli(0.5);
    if (flip_h || flip_v) {
      std::vector<float> flipped(px.size());
      for (int y = 0; y < size; ++y) {
        const int sy = flip_v ? size - 1 - y : y;
        for (int x = 0; x < size; ++x) {
          const int sx = flip_h ? size - 1 - x : x;
          for (int c = 0; c < 3; ++c)
            flipped[(static_cast<std::size_t>(y) * size + x) * 3 + c] =
                px[(static_cast<std::size_t>(sy) * size + sx) * 3 + c];
        }
      }
      px = std::move(flipped);
    }
  }
  LoadedSample out{Tensor({size, size, 3}), record.label};
  std::copy(px.begin(), px.end(), out.pixels.data());
  return out;
}

SampleCache::SampleCache(std::filesystem::path root, PreprocessConfig cfg)
    : root_(std::move(root)), cfg_(std::move(cfg)) {
  cfg_.validate();
}

const std::vector<float>& SampleCache::pixels(const ImageRecord& record) {
  auto it = cache_.find(record.path);
  if (it != cache_.end()) return it->second;
  auto [ins, _] = cache_.emplace(record.path, standardized_pixels(root_, record, cfg_));
  return ins->second;
}

Batch collate_batch(SampleCache& cache, const std::vector<ImageRecord>& records,
                    const std::vector<std::size_t>& indices, bool training, std::uint64_t seed,
                    std::uint64_t epoch) {
  const int size = cache.config().target_size;
  const auto n = static_cast<Index>(indices.size());
  Batch batch{Tensor({n, 3, size, size}), {}};
  batch.labels.reserve(indices.size());
  const std::size_t plane = static_cast<std::size_t>(3) * size * size;
  for (std::size_t bi = 0; bi < indices.size(); ++bi) {
    const ImageRecord& rec = records.at(indices[bi]);
    bool flip_h = false, flip_v = false;
    if (training && cache.config().train_augment) {
      auto rng = Rng::stream(seed, {kAugmentStream, epoch, indices[bi]});
      flip_h = rng.bernoulli(0.5);
      flip_v = rng.bernoulli(0.5);
    }
    write_chw(cache.pixels(rec), size, flip_h, flip_v, batch.inputs.data() + bi * plane);
    batch.labels.push_back(static_cast<int>(rec.label));
  }
  return batch;
}

}  // namespace wbc::data
