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

#include "wbc/data/types.hpp"

#include <algorithm>
#include <cctype>

namespace wbc::data {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view class_name(WbcClass c) {
  switch (c) {
    case WbcClass::kLymphocyte: return "LYMPHOCYTE";
    case WbcClass::kMonocyte: return "MONOCYTE";
    case WbcClass::kNeutrophil: return "NEUTROPHIL";
    case WbcClass::kEosinophil: return "EOSINOPHIL";
    case WbcClass::kBasophil: return "BASOPHIL";
  }
  throw ValidationError("class_name: invalid class code");
}

std::optional<WbcClass> parse_class_name(std::string_view s) {
  for (WbcClass c : kAllClasses)
    if (s == class_name(c)) return c;
  return std::nullopt;
}

std::optional<WbcClass> class_from_directory(std::string_view dir) {
  const std::string d = lower(dir);
  auto has_prefix = [&](std::string_view p) { return d.rfind(p, 0) == 0; };
  if (has_prefix("lymp")) return WbcClass::kLymphocyte;
  if (has_prefix("mono")) return WbcClass::kMonocyte;
  if (has_prefix("neut")) return WbcClass::kNeutrophil;
  if (has_prefix("eosi")) return WbcClass::kEosinophil;
  if (has_prefix("baso")) return WbcClass::kBasophil;
  return std::nullopt;
}

std::string_view dataset_name(DatasetId d) {
  switch (d) {
    case DatasetId::kRaabinTrain: return "RAABIN_TRAIN";
    case DatasetId::kRaabinTestA: return "RAABIN_TEST_A";
    case DatasetId::kRaabinTestB: return "RAABIN_TEST_B";
    case DatasetId::kLisc: return "LISC";
    case DatasetId::kSynthSource: return "SYNTH_SOURCE";
    case DatasetId::kSynthShifted: return "SYNTH_SHIFTED";
  }
  throw ValidationError("dataset_name: invalid dataset id");
}

std::optional<DatasetId> parse_dataset_name(std::string_view s) {
  for (auto d : {DatasetId::kRaabinTrain, DatasetId::kRaabinTestA, DatasetId::kRaabinTestB,
                 DatasetId::kLisc, DatasetId::kSynthSource, DatasetId::kSynthShifted})
    if (s == dataset_name(d)) return d;
  return std::nullopt;
}

void DatasetManifest::finalize() {
  if (!std::is_sorted(records.begin(), records.end(),
                      [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; }))
    throw ValidationError("DatasetManifest: records must be ordered by path");
  class_counts.fill(0);
  for (const auto& r : records) ++class_counts[static_cast<int>(r.label)];
}

}  // namespace wbc::data
