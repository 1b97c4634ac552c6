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

#include "wbc/analysis/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "wbc/core/error.hpp"
#include "wbc/core/rng.hpp"
#include "wbc/data/loader.hpp"
#include "wbc/data/manifest.hpp"
#include "wbc/zoo/build.hpp"

namespace wbc::analysis {

namespace {

constexpr std::uint64_t kStreamSampleA = 0x7a;
constexpr std::uint64_t kStreamSampleB = 0x7b;

std::string lower_tag(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

// Appends eval-mode penultimate features of every record to `rows`, batched.
void append_features(zoo::Model& model, const data::DatasetManifest& manifest,
                     const std::string& tag, const data::PreprocessConfig& preprocess,
                     std::vector<std::vector<float>>& rows, std::vector<data::WbcClass>& labels,
                     std::vector<std::string>& datasets) {
  data::PreprocessConfig eval_pre = preprocess;
  eval_pre.train_augment = false;
  data::SampleCache cache(manifest.root, eval_pre);
  const std::size_t n = manifest.records.size();
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < n; start += kBatch) {
    const std::size_t stop = std::min(n, start + kBatch);
    std::vector<std::size_t> indices(stop - start);
    std::iota(indices.begin(), indices.end(), start);
    const data::Batch batch = data::collate_batch(cache, manifest.records, indices, false, 0, 0);
    const Tensor features = zoo::extract_features(model, batch.inputs);
    const Index dim = features.dim(1);
    for (Index i = 0; i < features.dim(0); ++i) {
      std::vector<float> row(static_cast<std::size_t>(dim));
      for (Index j = 0; j < dim; ++j) row[static_cast<std::size_t>(j)] = features[i * dim + j];
      rows.push_back(std::move(row));
      labels.push_back(static_cast<data::WbcClass>(batch.labels[static_cast<std::size_t>(i)]));
      datasets.push_back(tag);
    }
  }
}

}  // namespace

TsneFigureResult build_tsne_figure(zoo::Model& model, const data::DatasetManifest& manifest_a,
                                   const std::string& tag_a,
                                   const data::DatasetManifest& manifest_b,
                                   const std::string& tag_b,
                                   const data::PreprocessConfig& preprocess,
                                   std::int64_t n_per_class, std::uint64_t seed,
                                   const std::filesystem::path& out_dir) {
  if (n_per_class <= 0) throw ValidationError("build_tsne_figure: n_per_class must be positive");
  if (tag_a == tag_b) throw ValidationError("build_tsne_figure: the two dataset tags must differ");

  const data::DatasetManifest sample_a = data::stratified_sample(
      manifest_a, n_per_class, Rng::stream(seed, {kStreamSampleA}).next_u64());
  const data::DatasetManifest sample_b = data::stratified_sample(
      manifest_b, n_per_class, Rng::stream(seed, {kStreamSampleB}).next_u64());

  std::vector<std::vector<float>> rows;
  std::vector<data::WbcClass> labels;
  std::vector<std::string> datasets;
  append_features(model, sample_a, tag_a, preprocess, rows, labels, datasets);
  append_features(model, sample_b, tag_b, preprocess, rows, labels, datasets);

  const Index n = static_cast<Index>(rows.size());
  if (n == 0) throw ValidationError("build_tsne_figure: no samples drawn");
  const Index dim = static_cast<Index>(rows.front().size());
  Tensor features({n, dim});
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j)
      features[i * dim + j] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  TsneConfig cfg;
  cfg.seed = seed;
  cfg.perplexity = std::min(cfg.perplexity, max_perplexity(n));

  EmbeddingSet embedding;
  embedding.coords = tsne_embed(features, cfg);
  embedding.labels = std::move(labels);
  embedding.datasets = std::move(datasets);
  embedding.spec = model.spec;
  embedding.tsne_seed = cfg.seed;
  embedding.perplexity = cfg.perplexity;
  embedding.validate();

  std::filesystem::create_directories(out_dir);
  TsneFigureResult result;
  result.csv_path = out_dir / "tsne.csv";
  result.figure_base = out_dir / "tsne";
  embedding.write_csv(result.csv_path);
  render_tsne_scatter(embedding, result.figure_base);
  result.embedding = std::move(embedding);
  return result;
}

const train::RunResult& mean_closest_run(const std::vector<train::RunResult>& runs,
                                         const std::string& dataset_tag) {
  if (runs.empty()) throw ValidationError("mean_closest_run: no runs");
  std::vector<double> acc(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto it = runs[i].eval_results.find(dataset_tag);
    if (it == runs[i].eval_results.end())
      throw ValidationError("mean_closest_run: seed " + std::to_string(runs[i].seed) +
                            " has no evaluation for dataset '" + dataset_tag + "'");
    acc[i] = it->second.accuracy;
  }
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const double di = std::fabs(acc[i] - mean), db = std::fabs(acc[best] - mean);
    if (di < db || (di == db && runs[i].seed < runs[best].seed)) best = i;
  }
  return runs[best];
}

std::vector<std::filesystem::path> render_report_figures(
    const std::map<std::string, std::vector<train::RunResult>>& runs_by_variant,
    const std::filesystem::path& out_dir) {
  if (runs_by_variant.empty())
    throw ValidationError("render_report_figures: no run results");
  for (const auto& [variant, runs] : runs_by_variant)
    if (runs.empty())
      throw ValidationError("render_report_figures: variant '" + variant + "' has no runs");

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  auto record_pair = [&written](const std::filesystem::path& base) {
    std::filesystem::path svg = base, png = base;
    svg += ".svg";
    png += ".png";
    written.push_back(svg);
    written.push_back(png);
  };

  std::map<std::string, std::vector<eval::RunAccuracies>> accuracy_rows;
  for (const auto& [variant, runs] : runs_by_variant) {
    for (const train::RunResult& run : runs) accuracy_rows[variant].push_back(run.accuracies());
  }
  const eval::ComparisonTable table = eval::compare_variants(accuracy_rows);

  // One grouped bar chart over everything.
  const std::filesystem::path bars_base = out_dir / "accuracy_bars";
  render_grouped_bars(table, bars_base);
  record_pair(bars_base);

  // One box plot per dataset, over the variants that evaluated it.
  for (const std::string& tag : table.datasets) {
    std::map<std::string, std::vector<double>> by_variant;
    for (const auto& [variant, runs] : runs_by_variant) {
      std::vector<double> values;
      for (const train::RunResult& run : runs) {
        const auto it = run.eval_results.find(tag);
        if (it != run.eval_results.end()) values.push_back(it->second.accuracy);
      }
      if (!values.empty()) by_variant[variant] = std::move(values);
    }
    if (by_variant.empty()) continue;
    const std::filesystem::path base = out_dir / ("box_" + lower_tag(tag));
    render_box_plot(by_variant, tag, base);
    record_pair(base);
  }

  // Per-variant confusion heatmaps from the run closest to the variant mean
  // on the first dataset every run of that variant reports.
  for (const auto& [variant, runs] : runs_by_variant) {
    std::string anchor_tag;
    for (const std::string& tag : table.datasets) {
      const bool everywhere = std::all_of(runs.begin(), runs.end(), [&tag](const auto& run) {
        return run.eval_results.count(tag) > 0;
      });
      if (everywhere) {
        anchor_tag = tag;
        break;
      }
    }
    if (anchor_tag.empty()) continue;
    const train::RunResult& best = mean_closest_run(runs, anchor_tag);
    for (const auto& [tag, eval_result] : best.eval_results) {
      const std::filesystem::path base =
          out_dir / ("confusion_" + train::variant_dir_name(variant) + "_" + lower_tag(tag));
      render_confusion_heatmap(eval_result, base);
      record_pair(base);
    }
  }

  return written;
}

}  // namespace wbc::analysis
