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

#include <unordered_map>
#include <vector>

#include "wbc/core/rng.hpp"
#include "wbc/core/tensor.hpp"
#include "wbc/data/types.hpp"

namespace wbc::data {

struct LoadedSample {
  Tensor pixels;  // (target_size, target_size, 3), standardized floats
  WbcClass label;
};

// Decode -> resize -> standardize -> (training only) random horizontal and
// vertical flips, each with probability 1/2, drawn from `rng`. The eval path
// never touches rng (it may be null). No color augmentation.
LoadedSample load_sample(const std::filesystem::path& root, const ImageRecord& record,
                         const PreprocessConfig& cfg, Rng* rng, bool training);

// Decoded-and-resized image cache keyed by record path, storing the
// standardized HWC float image before augmentation. One instance per
// manifest; sized for desk-tier datasets (everything fits).
class SampleCache {
 public:
  SampleCache(std::filesystem::path root, PreprocessConfig cfg);

  // Standardized HWC pixels for a record, decoding on first use.
  const std::vector<float>& pixels(const ImageRecord& record);
  const PreprocessConfig& config() const { return cfg_; }

 private:
  std::filesystem::path root_;
  PreprocessConfig cfg_;
  std::unordered_map<std::string, std::vector<float>> cache_;
};

// Collates records into an NCHW batch, applying flips per sample from
// per-sample rng streams derived from (seed, epoch, dataset position) so the
// result is independent of iteration order. Labels returned as class codes.
struct Batch {
  Tensor inputs;                // (N, 3, S, S)
  std::vector<int> labels;      // N class codes
};

Batch collate_batch(SampleCache& cache, const std::vector<ImageRecord>& records,
                    const std::vector<std::size_t>& indices, bool training, std::uint64_t seed,
                    std::uint64_t epoch);

}  // namespace wbc::data
