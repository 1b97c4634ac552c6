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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wbc/core/tensor.hpp"
#include "wbc/data/types.hpp"
#include "wbc/zoo/spec.hpp"

namespace wbc::analysis {

// Exact (O(N^2)) t-SNE with the classic optimizer: PCA initialization,
// early exaggeration, momentum switch, and per-coordinate gain adaptation.
// Everything runs in double and is bit-deterministic for fixed inputs.
struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  int early_exaggeration_iters = 250;
  double exaggeration = 12.0;
  double learning_rate = 200.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Embeds N x D `features` into N x 2. Requires N > 3 * perplexity (the
// conditional-distribution search is ill-posed beyond that); violations
// raise ValidationError quoting the largest admissible perplexity. The
// output is centered: each coordinate's mean is ~0.
Tensor tsne_embed(const Tensor& features, const TsneConfig& cfg);
Tensor tsne_embed(const Tensor& features, std::uint64_t tsne_seed, double perplexity = 30.0);

// Largest perplexity tsne_embed accepts for N points.
double max_perplexity(Index n);

// Mean silhouette over all points: (b - a) / max(a, b) with a the mean
// distance to the point's own cluster and b the smallest mean distance to
// any other cluster. `coords` is N x D; `labels` assigns clusters. Requires
// at least two clusters and every cluster of size >= 1; singleton clusters
// contribute 0 (the usual convention).
double silhouette_score(const Tensor& coords, const std::vector<int>& labels);

// A 2D embedding annotated with everything needed to reproduce it.
struct EmbeddingSet {
  Tensor coords;  // N x 2
  std::vector<data::WbcClass> labels;
  std::vector<std::string> datasets;  // tag per point
  zoo::ModelSpec spec;
  std::uint64_t tsne_seed = 0;
  double perplexity = 30.0;

  std::size_t size() const { return labels.size(); }
  void validate() const;  // lengths consistent, coords N x 2

  // CSV with header x,y,label,dataset. read_csv restores only the four
  // columns; spec and t-SNE settings live in the run's provenance record.
  void write_csv(const std::filesystem::path& path) const;
  static EmbeddingSet read_csv(const std::filesystem::path& path);
};

// How far apart the embedding places the two copies of each class. Distances
// are Euclidean in embedding space, averaged over pairs of same-class points:
// `cross_domain` over pairs from different datasets, `within_domain` over
// pairs from the same dataset. Their ratio is scale-invariant, so it can be
// compared across independently scaled embeddings; a domain-sensitive model
// yields a larger ratio than a domain-robust one.
struct DomainMixing {
  double cross_domain = 0.0;
  double within_domain = 0.0;
  double ratio = 0.0;
};

DomainMixing cross_domain_mixing(const EmbeddingSet& embedding);

}  // namespace wbc::analysis
