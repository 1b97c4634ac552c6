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

#include "wbc/data/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wbc/core/error.hpp"
#include "wbc/core/rng.hpp"

namespace fs = std::filesystem;

namespace wbc::data {

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm";
}

std::string relative_slash(const fs::path& p, const fs::path& root) {
  std::string s = p.lexically_relative(root).generic_string();
  return s;
}

// Collects class-labeled records from root/<class-dir>/**.
void collect_class_dirs(const fs::path& root, DatasetId dataset, DatasetManifest& manifest,
                        ScanReport& report) {
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(root)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& entry : entries) {
    if (!fs::is_directory(entry)) {
      report.skipped.push_back(relative_slash(entry, root) + " (not a class directory)");
      continue;
    }
    const auto cls = class_from_directory(entry.filename().string());
    if (!cls) {
      report.skipped.push_back(entry.filename().string() + " (unmapped class directory)");
      continue;
    }
    std::vector<fs::path> files;
    for (const auto& f : fs::recursive_directory_iterator(entry))
      if (f.is_regular_file()) files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      if (!is_image_file(f)) {
        report.skipped.push_back(relative_slash(f, root) + " (not an image)");
        continue;
      }
      manifest.records.push_back({relative_slash(f, root), *cls, dataset});
    }
  }
  std::sort(manifest.records.begin(), manifest.records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
  manifest.finalize();
}

void check_counts(const std::array<std::int64_t, kNumClasses>& expected, ScanResult& result) {
  auto& report = result.report;
  report.expected_counts = expected;
  report.observed_counts = result.manifest.class_counts;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto cls = static_cast<WbcClass>(c);
    if (result.manifest.class_counts[c] != expected[c]) {
      report.counts_match_published = false;
      std::ostringstream os;
      os << "count mismatch for " << class_name(cls) << ": observed "
         << result.manifest.class_counts[c] << ", published " << expected[c];
      report.warnings.push_back(os.str());
    }
    if (result.manifest.class_counts[c] == 0 && expected[c] == 0) {
      report.missing_classes.push_back(std::string(class_name(cls)));
      report.warnings.push_back(std::string("split has no ") + std::string(class_name(cls)) +
                                " samples (expected for this split)");
    } else if (result.manifest.class_counts[c] == 0) {
      report.missing_classes.push_back(std::string(class_name(cls)));
      report.warnings.push_back(std::string("split is missing class ") +
                                std::string(class_name(cls)));
    }
  }
}

fs::path find_split_dir(const fs::path& root, RaabinSplit split) {
  static const std::vector<std::string> train_names = {"Train", "train", "TRAIN"};
  static const std::vector<std::string> test_a_names = {"Test-A", "TestA", "Test_A", "test-a",
                                                        "testA",  "testa", "TEST-A"};
  static const std::vector<std::string> test_b_names = {"Test-B", "TestB", "Test_B", "test-b",
                                                        "testB",  "testb", "TEST-B"};
  const auto& names = split == RaabinSplit::kTrain    ? train_names
                      : split == RaabinSplit::kTestA ? test_a_names
                                                      : test_b_names;
  for (const auto& name : names)
    if (fs::is_directory(root / name)) return root / name;
  // Maybe root already is the split directory: accept it when it directly
  // contains at least one mappable class folder.
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && class_from_directory(e.path().filename().string())) return root;
  throw ValidationError("scan_raabin: no split directory for the requested split under " +
                        root.string());
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

// Splits one CSV line into fields, honoring quotes. Minimal RFC 4180: quoted
// fields may contain commas and doubled quotes (the manifest never contains
// embedded newlines).
std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

std::array<std::int64_t, kNumClasses> published_raabin_counts(RaabinSplit split) {
  switch (split) {
    case RaabinSplit::kTrain: return {2427, 561, 6231, 744, 212};
    case RaabinSplit::kTestA: return {1034, 234, 2660, 322, 89};
    case RaabinSplit::kTestB: return {148, 0, 1971, 0, 0};
  }
  throw ValidationError("published_raabin_counts: invalid split");
}

std::array<std::int64_t, kNumClasses> published_lisc_counts() { return {59, 48, 56, 39, 55}; }

ScanResult scan_raabin(const fs::path& root, RaabinSplit split) {
  if (!fs::is_directory(root))
    throw ValidationError("scan_raabin: root does not exist: " + root.string());
  const fs::path split_dir = find_split_dir(root, split);
  const DatasetId id = split == RaabinSplit::kTrain    ? DatasetId::kRaabinTrain
                       : split == RaabinSplit::kTestA ? DatasetId::kRaabinTestA
                                                       : DatasetId::kRaabinTestB;
  ScanResult result;
  result.manifest.root = split_dir;
  result.report.dataset = std::string(dataset_name(id));
  collect_class_dirs(split_dir, id, result.manifest, result.report);
  check_counts(published_raabin_counts(split), result);
  return result;
}

ScanResult scan_lisc(const fs::path& root) {
  if (!fs::is_directory(root))
    throw ValidationError("scan_lisc: root does not exist: " + root.string());
  ScanResult result;
  result.manifest.root = root;
  result.report.dataset = std::string(dataset_name(DatasetId::kLisc));
  collect_class_dirs(root, DatasetId::kLisc, result.manifest, result.report);
  if (result.manifest.records.empty())
    throw ValidationError("scan_lisc: no mappable images under " + root.string());
  check_counts(published_lisc_counts(), result);
  return result;
}

void write_manifest_csv(const DatasetManifest& manifest, const fs::path& csv_path) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + csv_path.string());
  out << "path,label,dataset\n";
  for (const auto& r : manifest.records)
    out << csv_escape(r.path) << ',' << class_name(r.label) << ',' << dataset_name(r.dataset)
        << '\n';
  if (!out) throw IoError("short write: " + csv_path.string());
}

DatasetManifest read_manifest_csv(const fs::path& csv_path, const fs::path& root) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest: " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty manifest: " + csv_path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label,dataset")
    throw ValidationError("manifest header must be `path,label,dataset`: " + csv_path.string());
  DatasetManifest manifest;
  manifest.root = root;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = csv_split(line);
    if (fields.size() != 3)
      throw ValidationError(csv_path.string() + ":" + std::to_string(line_no) +
                            ": expected 3 fields");
    const auto label = parse_class_name(fields[1]);
    if (!label)
      throw ValidationError(csv_path.string() + ":" + std::to_string(line_no) +
                            ": unknown label " + fields[1]);
    const auto dataset = parse_dataset_name(fields[2]);
    if (!dataset)
      throw ValidationError(csv_path.string() + ":" + std::to_string(line_no) +
                            ": unknown dataset " + fields[2]);
    manifest.records.push_back({fields[0], *label, *dataset});
  }
  manifest.finalize();
  return manifest;
}

std::string ScanReport::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = dataset;
  j["counts_match_published"] = counts_match_published;
  nlohmann::ordered_json expected, observed;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto name = std::string(class_name(static_cast<WbcClass>(c)));
    expected[name] = expected_counts[c];
    observed[name] = observed_counts[c];
  }
  j["expected_counts"] = expected;
  j["observed_counts"] = observed;
  j["missing_classes"] = missing_classes;
  j["skipped"] = skipped;
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

void write_scan_report(const ScanReport& report, const fs::path& json_path) {
  std::ofstream out(json_path, std::ios::binary);
  if (!out) throw IoError("cannot write scan report: " + json_path.string());
  out << report.to_json();
}

DatasetManifest stratified_sample(const DatasetManifest& manifest, std::int64_t n_per_class,
                                  std::uint64_t seed) {
  if (n_per_class < 0) throw ValidationError("stratified_sample: n_per_class must be >= 0");
  std::vector<std::size_t> chosen;
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
      if (static_cast<int>(manifest.records[i].label) == c) pool.push_back(i);
    if (static_cast<std::int64_t>(pool.size()) < n_per_class) {
      std::ostringstream os;
      os << "stratified_sample: " << class_name(static_cast<WbcClass>(c)) << " has only "
         << pool.size() << " records, need " << n_per_class;
      throw ValidationError(os.str());
    }
    auto rng = Rng::stream(seed, {0x5374726174ULL, static_cast<std::uint64_t>(c)});
    rng.shuffle(pool);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + n_per_class);
  }
  std::sort(chosen.begin(), chosen.end());
  DatasetManifest out;
  out.root = manifest.root;
  out.records.reserve(chosen.size());
  for (std::size_t i : chosen) out.records.push_back(manifest.records[i]);
  out.finalize();
  return out;
}

}  // namespace wbc::data
