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

#include <filesystem>
#include <string>
#include <vector>

#include "wbc/zoo/model.hpp"

namespace wbc::zoo {

// Checkpoints are a single little-endian archive:
//
//   magic "WBCKPT1\n", u64 metadata length, metadata JSON (the ModelSpec,
//   or {} for plain weight dumps), u64 entry count, then per entry:
//   u32 name length, name, u32 rank, i64 dims[rank], float32 payload.
//
// Entries are keyed by canonical parameter/buffer path ("layer1.0.conv1
// .weight", "bn1.running_mean") and written in name order. The same format
// serves trained checkpoints and converted pretrained-weight files
// (tools/export_weights.py emits it).

struct ArchiveEntry {
  std::string name;
  std::vector<Index> dims;
  std::vector<float> data;
};

void write_archive(const std::filesystem::path& path, const std::string& metadata_json,
                   std::vector<ArchiveEntry> entries);  // sorts by name

struct Archive {
  std::string metadata_json;
  std::vector<ArchiveEntry> entries;  // name order

  const ArchiveEntry* find(const std::string& name) const;
};

Archive read_archive(const std::filesystem::path& path);

// Writes params + buffers + the spec as metadata to <run_dir>/model.ckpt.
std::filesystem::path save_checkpoint(const Model& model, const std::filesystem::path& run_dir);

// Rebuilds the model from the embedded spec (weights and buffers from the
// archive; no weights-cache needed) and returns it.
Model load_checkpoint(const std::filesystem::path& ckpt_path);

// Copies matching entries into the model's params and buffers. Head
// parameter paths listed in `skip` keep their fresh initialization. Missing
// or shape-mismatched non-head entries raise IoError naming them.
void load_weights_into(Model& model, const Archive& archive, const std::vector<std::string>& skip);

}  // namespace wbc::zoo
