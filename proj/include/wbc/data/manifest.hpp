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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wbc/data/types.hpp"

namespace wbc::data {

// Everything a scan wants to tell the operator besides the manifest itself:
// count drift against the published table, classes missing from a split, and
// directories/files that were skipped. Serializable as JSON.
struct ScanReport {
  std::string dataset;
  bool counts_match_published = true;
  std::array<std::int64_t, kNumClasses> expected_counts{};
  std::array<std::int64_t, kNumClasses> observed_counts{};
  std::vector<std::string> missing_classes;
  std::vector<std::string> skipped;   // relative paths or folder names, with reason
  std::vector<std::string> warnings;  // human-readable summaries of the above

  std::string to_json() const;
};

struct ScanResult {
  DatasetManifest manifest;
  ScanReport report;
};

// Published per-class counts (order: lymphocyte, monocyte, neutrophil,
// eosinophil, basophil) that scans validate against.
std::array<std::int64_t, kNumClasses> published_raabin_counts(RaabinSplit split);
std::array<std::int64_t, kNumClasses> published_lisc_counts();

// Scans the per-class subdirectory layout for one split. `root` may be the
// split directory itself or the dataset root containing a Train/Test-A/Test-B
// subdirectory (several spellings accepted). Count drift against the
// published table is a warning, not an error; a missing root is fatal.
ScanResult scan_raabin(const std::filesystem::path& root, RaabinSplit split);

// Scans the LISC per-class layout. Folders that do not map to one of the five
// classes (e.g. mixed cells) are excluded and listed in the skip report.
// An empty result is fatal.
ScanResult scan_lisc(const std::filesystem::path& root);

// Manifest CSV, header `path,label,dataset`, labels as upper-case class
// names. Fields containing commas, quotes, or newlines are quoted.
void write_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& csv_path);
DatasetManifest read_manifest_csv(const std::filesystem::path& csv_path,
                                  const std::filesystem::path& root);

void write_scan_report(const ScanReport& report, const std::filesystem::path& json_path);

// Exactly n_per_class records per class, sampled without replacement,
// deterministic in `seed`, original record order preserved.
DatasetManifest stratified_sample(const DatasetManifest& manifest, std::int64_t n_per_class,
                                  std::uint64_t seed);

}  // namespace wbc::data
