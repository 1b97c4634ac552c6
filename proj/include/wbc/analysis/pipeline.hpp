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
#include <map>
#include <string>
#include <vector>

#include "wbc/analysis/figures.hpp"
#include "wbc/analysis/tsne.hpp"
#include "wbc/data/types.hpp"
#include "wbc/train/trainer.hpp"
#include "wbc/zoo/model.hpp"

namespace wbc::analysis {

struct TsneFigureResult {
  EmbeddingSet embedding;
  std::filesystem::path csv_path;
  std::filesystem::path figure_base;  // <figure_base>.svg and .png exist
};

// Samples n_per_class images per class from each manifest (deterministic in
// `seed`), extracts penultimate features for all of them, embeds everything
// in a single t-SNE run, and writes tsne.csv plus the scatter figure into
// out_dir. The embedding has n_per_class * 5 * 2 rows. Perplexity is the
// ledger default (30) clamped to the largest value the sample count admits,
// so tiny inputs still embed.
TsneFigureResult build_tsne_figure(zoo::Model& model, const data::DatasetManifest& manifest_a,
                                   const std::string& tag_a,
                                   const data::DatasetManifest& manifest_b,
                                   const std::string& tag_b,
                                   const data::PreprocessConfig& preprocess,
                                   std::int64_t n_per_class, std::uint64_t seed,
                                   const std::filesystem::path& out_dir);

// The run whose accuracy on dataset_tag is closest to the variant's mean
// accuracy there; ties resolve to the earliest seed. Every run must report
// that dataset.
const train::RunResult& mean_closest_run(const std::vector<train::RunResult>& runs,
                                         const std::string& dataset_tag);

// Renders the report figure set into out_dir: a per-dataset seed box plot,
// the grouped mean +- CI bar chart across variants, and per-variant
// confusion heatmaps taken from the mean-closest run. Returns the written
// files. Pure consumer: identical inputs produce byte-identical files.
std::vector<std::filesystem::path> render_report_figures(
    const std::map<std::string, std::vector<train::RunResult>>& runs_by_variant,
    const std::filesystem::path& out_dir);

}  // namespace wbc::analysis
