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

#include "wbc/zoo/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "wbc/core/error.hpp"
#include "wbc/zoo/build.hpp"

namespace wbc::zoo {
namespace {

constexpr char kMagic[8] = {'W', 'B', 'C', 'K', 'P', 'T', '1', '\n'};

// The archive is little-endian; this code asserts a little-endian host
// rather than byte-swapping (the benchmark targets x86-64/aarch64).
static_assert(std::endian::native == std::endian::little,
              "checkpoint archives require a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("truncated checkpoint archive: " + path.string());
  return value;
}

}  // namespace

void write_archive(const std::filesystem::path& path, const std::string& metadata_json,
                   std::vector<ArchiveEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const ArchiveEntry& a, const ArchiveEntry& b) { return a.name < b.name; });
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());

  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint64_t>(out, metadata_json.size());
  out.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
  write_pod<std::uint64_t>(out, entries.size());
  for (const ArchiveEntry& e : entries) {
    std::size_t expect = 1;
    for (Index d : e.dims) expect *= static_cast<std::size_t>(d);
    if (expect != e.data.size())
      throw ValidationError("archive entry '" + e.name + "' has " +
                            std::to_string(e.data.size()) + " values for dims implying " +
                            std::to_string(expect));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.dims.size()));
    for (Index d : e.dims) write_pod<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(e.data.data()),
              static_cast<std::streamsize>(sizeof(float) * e.data.size()));
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

const ArchiveEntry* Archive::find(const std::string& name) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), name,
                             [](const ArchiveEntry& e, const std::string& n) { return e.name < n; });
  if (it == entries.end() || it->name != name) return nullptr;
  return &*it;
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());

  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint archive (bad magic): " + path.string());

  Archive archive;
  const auto meta_len = read_pod<std::uint64_t>(in, path);
  archive.metadata_json.resize(meta_len);
  in.read(archive.metadata_json.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw IoError("truncated checkpoint archive: " + path.string());

  const auto n_entries = read_pod<std::uint64_t>(in, path);
  archive.entries.reserve(n_entries);
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    ArchiveEntry e;
    const auto name_len = read_pod<std::uint32_t>(in, path);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(in, path);
    if (rank > 8) throw IoError("corrupt checkpoint (rank " + std::to_string(rank) + ")");
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto extent = read_pod<std::int64_t>(in, path);
      if (extent <= 0) throw IoError("corrupt checkpoint (nonpositive dim): " + path.string());
      e.dims.push_back(extent);
      count *= static_cast<std::size_t>(extent);
    }
    e.data.resize(count);
    in.read(reinterpret_cast<char*>(e.data.data()),
            static_cast<std::streamsize>(sizeof(float) * count));
    if (!in) throw IoError("truncated checkpoint archive: " + path.string());
    archive.entries.push_back(std::move(e));
  }
  // Name order is the on-disk contract, but tolerate hand-built files.
  std::sort(archive.entries.begin(), archive.entries.end(),
            [](const ArchiveEntry& a, const ArchiveEntry& b) { return a.name < b.name; });
  return archive;
}

std::filesystem::path save_checkpoint(const Model& model, const std::filesystem::path& run_dir) {
  std::vector<ArchiveEntry> entries;
  auto push = [&entries](const std::string& name, const Tensor& t) {
    ArchiveEntry e;
    e.name = name;
    e.dims = t.dims();
    e.data.assign(t.data(), t.data() + t.size());
    entries.push_back(std::move(e));
  };
  for (const nn::NamedParam& np : nn::collect_params(*model.root))
    push(np.name, np.param->value);
  for (const nn::NamedBuffer& nb : nn::collect_buffers(*model.root)) push(nb.name, *nb.tensor);

  const std::filesystem::path path = run_dir / "model.ckpt";
  write_archive(path, model.spec.to_json(), std::move(entries));
  return path;
}

Model load_checkpoint(const std::filesystem::path& ckpt_path) {
  Archive archive = read_archive(ckpt_path);
  if (archive.metadata_json.empty() || archive.metadata_json == "{}")
    throw IoError("checkpoint has no embedded model spec: " + ckpt_path.string());
  ModelSpec spec = ModelSpec::from_json(archive.metadata_json);

  // Rebuild the graph without touching the weights cache: surgery and freeze
  // flags come from the spec, values from the archive.
  ModelSpec build_spec = spec;
  build_spec.pretrained = false;
  Model model = build_model(build_spec, {}, 0);
  model.spec = spec;
  load_weights_into(model, archive, {});
  // Freezing again is idempotent and restores the trainable mask in case the
  // 'pretrained' toggle changed any default.
  apply_freeze_policy(model, spec);
  return model;
}

void load_weights_into(Model& model, const Archive& archive,
                       const std::vector<std::string>& skip) {
  const std::unordered_set<std::string> skip_set(skip.begin(), skip.end());
  std::vector<std::string> missing, mismatched;

  auto load_one = [&](const std::string& name, Tensor& dst) {
    if (skip_set.contains(name)) return;
    const ArchiveEntry* e = archive.find(name);
    if (!e) {
      missing.push_back(name);
      return;
    }
    if (e->dims != dst.dims()) {
      mismatched.push_back(name);
      return;
    }
    std::copy(e->data.begin(), e->data.end(), dst.data());
  };
  for (const nn::NamedParam& np : nn::collect_params(*model.root))
    load_one(np.name, np.param->value);
  for (const nn::NamedBuffer& nb : nn::collect_buffers(*model.root)) load_one(nb.name, *nb.tensor);

  if (missing.empty() && mismatched.empty()) return;
  std::string msg = "weight archive does not cover the model:";
  auto preview = [&msg](const char* label, const std::vector<std::string>& names) {
    if (names.empty()) return;
    msg += std::string(" ") + label + " " + std::to_string(names.size()) + " entr" +
           (names.size() == 1 ? "y" : "ies") + " (";
    for (std::size_t i = 0; i < names.size() && i < 5; ++i) {
      if (i) msg += ", ";
      msg += names[i];
    }
    if (names.size() > 5) msg += ", ...";
    msg += ")";
  };
  preview("missing", missing);
  preview("shape-mismatched", mismatched);
  throw IoError(msg);
}

}  // namespace wbc::zoo
