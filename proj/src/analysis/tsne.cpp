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

#include "wbc/analysis/tsne.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "wbc/core/error.hpp"
#include "wbc/core/rng.hpp"

namespace wbc::analysis {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Squared Euclidean distances between all row pairs, clamped at zero.
MatrixXd pairwise_sq_dists(const MatrixXd& x) {
  const VectorXd norms = x.rowwise().squaredNorm();
  MatrixXd d = -2.0 * (x * x.transpose());
  d.colwise() += norms;
  d.rowwise() += norms.transpose();
  return d.cwiseMax(0.0);
}

// Conditional distribution P(j|i) for one row via binary search on the
// precision so the entropy hits log(perplexity).
void row_affinities(const VectorXd& sq_dists, Index i, double perplexity, VectorXd& p_out) {
  const Index n = sq_dists.size();
  const double target_entropy = std::log(perplexity);
  double beta = 1.0;
  double beta_lo = 0.0;
  double beta_hi = std::numeric_limits<double>::infinity();

  for (int it = 0; it < 64; ++it) {
    double sum = 0.0;
    double weighted = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) {
        p_out[j] = 0.0;
        continue;
      }
      const double w = std::exp(-beta * sq_dists[j]);
      p_out[j] = w;
      sum += w;
      weighted += w * sq_dists[j];
    }
    if (sum <= 0.0) sum = std::numeric_limits<double>::min();
    const double entropy = std::log(sum) + beta * weighted / sum;

    const double diff = entropy - target_entropy;
    if (std::fabs(diff) < 1e-7) break;
    if (diff > 0.0) {  // too spread out: sharpen
      beta_lo = beta;
      beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
    } else {
      beta_hi = beta;
      beta = 0.5 * (beta + beta_lo);
    }
  }

  const double sum = std::max(p_out.sum(), std::numeric_limits<double>::min());
  p_out /= sum;
}

// First two principal-component scores via the Gram matrix (exact for any D,
// cheap because N is small in this pipeline).
MatrixXd pca2_scores(const MatrixXd& x) {
  const Index n = x.rows();
  MatrixXd centered = x.rowwise() - x.colwise().mean();
  const MatrixXd gram = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success)
    throw ValidationError("tsne_embed: PCA eigendecomposition failed");

  MatrixXd scores(n, 2);
  for (int k = 0; k < 2; ++k) {
    const Index idx = n - 1 - k;  // eigenvalues ascend
    const double lambda = std::max(solver.eigenvalues()[idx], 0.0);
    VectorXd column = solver.eigenvectors().col(idx) * std::sqrt(lambda);
    // Deterministic sign: the largest-magnitude entry points up.
    Index arg = 0;
    column.cwiseAbs().maxCoeff(&arg);
    if (column[arg] < 0.0) column = -column;
    scores.col(k) = column;
  }
  return scores;
}

}  // namespace

void TsneConfig::validate() const {
  if (!(perplexity > 0.0)) throw ValidationError("TsneConfig: perplexity must be positive");
  if (iterations <= 0) throw ValidationError("TsneConfig: iterations must be positive");
  if (early_exaggeration_iters < 0 || early_exaggeration_iters > iterations)
    throw ValidationError("TsneConfig: early_exaggeration_iters out of range");
  if (!(exaggeration >= 1.0)) throw ValidationError("TsneConfig: exaggeration must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("TsneConfig: learning_rate must be positive");
}

double max_perplexity(Index n) { return static_cast<double>(n - 1) / 3.0; }

Tensor tsne_embed(const Tensor& features, std::uint64_t tsne_seed, double perplexity) {
  TsneConfig cfg;
  cfg.seed = tsne_seed;
  cfg.perplexity = perplexity;
  return tsne_embed(features, cfg);
}

Tensor tsne_embed(const Tensor& features, const TsneConfig& cfg) {
  cfg.validate();
  if (features.rank() != 2)
    throw ValidationError("tsne_embed: features must be N x D, got " + features.dims_string());
  const Index n = features.dim(0);
  const Index d = features.dim(1);
  if (static_cast<double>(n) <= 3.0 * cfg.perplexity)
    throw ValidationError("tsne_embed: perplexity " + std::to_string(cfg.perplexity) +
                          " needs N > 3*perplexity; for N = " + std::to_string(n) +
                          " the largest admissible perplexity is " +
                          std::to_string(max_perplexity(n)));
  for (Index i = 0; i < features.size(); ++i)
    if (!std::isfinite(features[i]))
      throw ValidationError("tsne_embed: features contain a non-finite value");

  const MatrixXd x =
      features.matrix(n, d).cast<double>();

  // Symmetrized joint affinities.
  const MatrixXd sq = pairwise_sq_dists(x);
  MatrixXd cond(n, n);
  VectorXd row(n);
  for (Index i = 0; i < n; ++i) {
    row_affinities(sq.row(i).transpose(), i, cfg.perplexity, row);
    cond.row(i) = row.transpose();
  }
  MatrixXd p = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);

  // PCA init, normalized to tiny scale, with seed-derived jitter breaking
  // exact ties between duplicate feature rows.
  MatrixXd y = pca2_scores(x);
  const double spread = std::sqrt(y.col(0).squaredNorm() / static_cast<double>(n));
  if (spread > 0.0) y /= spread;
  y *= 1e-4;
  Rng jitter = Rng::stream(cfg.seed, {0x75e3u});
  for (Index i = 0; i < n; ++i)
    for (int k = 0; k < 2; ++k) y(i, k) += jitter.normal() * 1e-8;

  MatrixXd velocity = MatrixXd::Zero(n, 2);
  MatrixXd gains = MatrixXd::Ones(n, 2);
  MatrixXd grad(n, 2);
  MatrixXd kernel(n, n);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double exaggeration = iter < cfg.early_exaggeration_iters ? cfg.exaggeration : 1.0;
    const double momentum = iter < cfg.early_exaggeration_iters ? 0.5 : 0.8;

    // Student-t kernel w_ij = 1 / (1 + ||y_i - y_j||^2), w_ii = 0.
    double z = 0.0;
    for (Index i = 0; i < n; ++i) {
      kernel(i, i) = 0.0;
      for (Index j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0);
        const double dy = y(i, 1) - y(j, 1);
        const double w = 1.0 / (1.0 + dx * dx + dy * dy);
        kernel(i, j) = w;
        kernel(j, i) = w;
        z += 2.0 * w;
      }
    }
    z = std::max(z, std::numeric_limits<double>::min());

    grad.setZero();
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = kernel(i, j);
        const double coeff = 4.0 * (exaggeration * p(i, j) - std::max(w / z, 1e-12)) * w;
        grad(i, 0) += coeff * (y(i, 0) - y(j, 0));
        grad(i, 1) += coeff * (y(i, 1) - y(j, 1));
      }
    }

    for (Index i = 0; i < n; ++i) {
      for (int k = 0; k < 2; ++k) {
        const bool same_direction = (grad(i, k) > 0.0) == (velocity(i, k) > 0.0);
        gains(i, k) = same_direction ? std::max(gains(i, k) * 0.8, 0.01) : gains(i, k) + 0.2;
        velocity(i, k) = momentum * velocity(i, k) - cfg.learning_rate * gains(i, k) * grad(i, k);
        y(i, k) += velocity(i, k);
      }
    }
    y.rowwise() -= y.colwise().mean();
  }

  Tensor out({n, 2});
  out.matrix(n, 2) = y.cast<float>();
  return out;
}

double silhouette_score(const Tensor& coords, const std::vector<int>& labels) {
  if (coords.rank() != 2)
    throw ValidationError("silhouette_score: coords must be N x D, got " + coords.dims_string());
  const Index n = coords.dim(0);
  if (static_cast<std::size_t>(n) != labels.size())
    throw ValidationError("silhouette_score: labels and coords disagree on N");
  std::set<int> clusters(labels.begin(), labels.end());
  if (clusters.size() < 2)
    throw ValidationError("silhouette_score: need at least two clusters");

  const MatrixXd x = coords.matrix(n, coords.dim(1)).cast<double>();
  const MatrixXd sq = pairwise_sq_dists(x);

  std::map<int, Index> cluster_size;
  for (int label : labels) ++cluster_size[label];

  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int own = labels[static_cast<std::size_t>(i)];
    if (cluster_size[own] <= 1) continue;  // singleton contributes 0

    std::map<int, double> sums;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      sums[labels[static_cast<std::size_t>(j)]] += std::sqrt(sq(i, j));
    }
    const double a = sums[own] / static_cast<double>(cluster_size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [cluster, sum] : sums) {
      if (cluster == own) continue;
      b = std::min(b, sum / static_cast<double>(cluster_size[cluster]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

void EmbeddingSet::validate() const {
  if (coords.rank() != 2 || coords.dim(1) != 2)
    throw ValidationError("EmbeddingSet: coords must be N x 2, got " + coords.dims_string());
  const std::size_t n = static_cast<std::size_t>(coords.dim(0));
  if (labels.size() != n || datasets.size() != n)
    throw ValidationError("EmbeddingSet: coords, labels, and datasets must share one length");
}

void EmbeddingSet::write_csv(const std::filesystem::path& path) const {
  validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "x,y,label,dataset\n";
  char buf[64];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Index row = static_cast<Index>(i);
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", static_cast<double>(coords[row * 2]),
                  static_cast<double>(coords[row * 2 + 1]));
    out << buf << ',' << data::class_name(labels[i]) << ',' << datasets[i] << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

EmbeddingSet EmbeddingSet::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "x,y,label,dataset")
    throw ValidationError("EmbeddingSet: " + path.string() + " lacks the x,y,label,dataset header");

  std::vector<float> xs, ys;
  EmbeddingSet set;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string x_str, y_str, label_str, dataset_str;
    if (!std::getline(ss, x_str, ',') || !std::getline(ss, y_str, ',') ||
        !std::getline(ss, label_str, ',') || !std::getline(ss, dataset_str))
      throw ValidationError("EmbeddingSet: malformed row in " + path.string() + ": " + line);
    try {
      xs.push_back(std::stof(x_str));
      ys.push_back(std::stof(y_str));
    } catch (const std::exception&) {
      throw ValidationError("EmbeddingSet: non-numeric coordinate in " + path.string());
    }
    const auto label = data::parse_class_name(label_str);
    if (!label)
      throw ValidationError("EmbeddingSet: unknown class \"" + label_str + "\" in " +
                            path.string());
    set.labels.push_back(*label);
    set.datasets.push_back(dataset_str);
  }

  set.coords = Tensor({static_cast<Index>(xs.size()), 2});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    set.coords[static_cast<Index>(i) * 2] = xs[i];
    set.coords[static_cast<Index>(i) * 2 + 1] = ys[i];
  }
  set.validate();
  return set;
}

DomainMixing cross_domain_mixing(const EmbeddingSet& embedding) {
  embedding.validate();
  const Index n = embedding.coords.dim(0);

  double cross_sum = 0.0, within_sum = 0.0;
  std::int64_t cross_count = 0, within_count = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const std::size_t si = static_cast<std::size_t>(i), sj = static_cast<std::size_t>(j);
      if (embedding.labels[si] != embedding.labels[sj]) continue;
      const double dx = embedding.coords[i * 2] - embedding.coords[j * 2];
      const double dy = embedding.coords[i * 2 + 1] - embedding.coords[j * 2 + 1];
      const double dist = std::sqrt(dx * dx + dy * dy);
      if (embedding.datasets[si] == embedding.datasets[sj]) {
        within_sum += dist;
        ++within_count;
      } else {
        cross_sum += dist;
        ++cross_count;
      }
    }
  }
  if (cross_count == 0)
    throw ValidationError("cross_domain_mixing: no same-class pairs across datasets");
  if (within_count == 0)
    throw ValidationError("cross_domain_mixing: no same-class pairs within a dataset");

  DomainMixing m;
  m.cross_domain = cross_sum / static_cast<double>(cross_count);
  m.within_domain = within_sum / static_cast<double>(within_count);
  m.ratio = m.within_domain > 0.0 ? m.cross_domain / m.within_domain
                                  : std::numeric_limits<double>::infinity();
  return m;
}

}  // namespace wbc::analysis
