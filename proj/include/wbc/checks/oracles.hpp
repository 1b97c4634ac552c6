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

#include <cmath>
#include <cstddef>
#include <vector>

// Brute-force reference routines used to verify the fast implementations.
// Everything here is deliberately naive: double precision, two-pass
// statistics, no shared code with the production paths. Do not "optimize"
// by delegating to the library under test.
namespace wbc::checks {

struct OracleShape {
  std::ptrdiff_t n = 0, c = 0, h = 0, w = 0;
};

// Per-channel normalization over the (N,H,W) axes with two-pass mean and
// variance, then the affine transform.
inline std::vector<double> oracle_batch_norm(const std::vector<double>& x, OracleShape s,
                                             const std::vector<double>& gamma,
                                             const std::vector<double>& beta, double eps) {
  const std::ptrdiff_t hw = s.h * s.w;
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    std::ptrdiff_t m = 0;
    for (std::ptrdiff_t n = 0; n < s.n; ++n)
      for (std::ptrdiff_t i = 0; i < hw; ++i) {
        mean += x[(n * s.c + c) * hw + i];
        ++m;
      }
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::ptrdiff_t n = 0; n < s.n; ++n)
      for (std::ptrdiff_t i = 0; i < hw; ++i) {
        const double d = x[(n * s.c + c) * hw + i] - mean;
        var += d * d;
      }
    var /= static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::ptrdiff_t n = 0; n < s.n; ++n)
      for (std::ptrdiff_t i = 0; i < hw; ++i) {
        const std::ptrdiff_t k = (n * s.c + c) * hw + i;
        y[k] = (x[k] - mean) * inv * gamma[c] + beta[c];
      }
  }
  return y;
}

// Per-(sample, group) normalization over the C/G x H x W slab.
inline std::vector<double> oracle_group_norm(const std::vector<double>& x, OracleShape s,
                                             std::ptrdiff_t groups,
                                             const std::vector<double>& gamma,
                                             const std::vector<double>& beta, double eps) {
  const std::ptrdiff_t hw = s.h * s.w;
  const std::ptrdiff_t cpg = s.c / groups;
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t n = 0; n < s.n; ++n) {
    for (std::ptrdiff_t g = 0; g < groups; ++g) {
      double mean = 0.0;
      std::ptrdiff_t m = 0;
      for (std::ptrdiff_t c = g * cpg; c < (g + 1) * cpg; ++c)
        for (std::ptrdiff_t i = 0; i < hw; ++i) {
          mean += x[(n * s.c + c) * hw + i];
          ++m;
        }
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::ptrdiff_t c = g * cpg; c < (g + 1) * cpg; ++c)
        for (std::ptrdiff_t i = 0; i < hw; ++i) {
          const double d = x[(n * s.c + c) * hw + i] - mean;
          var += d * d;
        }
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::ptrdiff_t c = g * cpg; c < (g + 1) * cpg; ++c)
        for (std::ptrdiff_t i = 0; i < hw; ++i) {
          const std::ptrdiff_t k = (n * s.c + c) * hw + i;
          y[k] = (x[k] - mean) * inv * gamma[c] + beta[c];
        }
    }
  }
  return y;
}

// Instance norm = per-(sample, channel) normalization; the degenerate
// group-norm case with G == C, written out separately.
inline std::vector<double> oracle_instance_norm(const std::vector<double>& x, OracleShape s,
                                                double eps) {
  const std::ptrdiff_t hw = s.h * s.w;
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t n = 0; n < s.n; ++n)
    for (std::ptrdiff_t c = 0; c < s.c; ++c) {
      double mean = 0.0;
      for (std::ptrdiff_t i = 0; i < hw; ++i) mean += x[(n * s.c + c) * hw + i];
      mean /= static_cast<double>(hw);
      double var = 0.0;
      for (std::ptrdiff_t i = 0; i < hw; ++i) {
        const double d = x[(n * s.c + c) * hw + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(hw);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::ptrdiff_t i = 0; i < hw; ++i) {
        const std::ptrdiff_t k = (n * s.c + c) * hw + i;
        y[k] = (x[k] - mean) * inv;
      }
    }
  return y;
}

// Mean silhouette coefficient for a 2-d embedding with integer labels;
// O(N^2), euclidean distance.
inline double silhouette_score(const std::vector<double>& xs, const std::vector<double>& ys,
                               const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  auto dist = [&](std::size_t i, std::size_t j) {
    const double dx = xs[i] - xs[j], dy = ys[i] - ys[j];
    return std::sqrt(dx * dx + dy * dy);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double intra = 0.0;
    std::size_t intra_n = 0;
    double best_other = 1e300;
    // one pass per candidate "other" label keeps this simple for few labels
    std::vector<int> seen;
    for (std::size_t j = 0; j < n; ++j)
      if (labels[j] != labels[i]) {
        bool found = false;
        for (int l : seen) found |= (l == labels[j]);
        if (!found) seen.push_back(labels[j]);
      }
    for (int other : seen) {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (labels[j] == other) {
          sum += dist(i, j);
          ++cnt;
        }
      if (cnt > 0) best_other = std::min(best_other, sum / static_cast<double>(cnt));
    }
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) {
        intra += dist(i, j);
        ++intra_n;
      }
    if (intra_n == 0) continue;
    intra /= static_cast<double>(intra_n);
    const double denom = std::max(intra, best_other);
    if (denom > 0) total += (best_other - intra) / denom;
  }
  return total / static_cast<double>(n);
}

// Logistic regression on raw feature vectors by plain gradient descent.
// Used as the linear-probe oracle for the synthetic domain shift: returns
// training accuracy of the fitted probe.
inline double linear_probe_accuracy(const std::vector<std::vector<double>>& features,
                                    const std::vector<int>& labels, int steps = 2000,
                                    double lr = 0.5) {
  const std::size_t n = features.size();
  const std::size_t d = features.empty() ? 0 : features[0].size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < steps; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = b;
      for (std::size_t k = 0; k < d; ++k) z += w[k] * features[i][k];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double err = p - (labels[i] > 0 ? 1.0 : 0.0);
      for (std::size_t k = 0; k < d; ++k) gw[k] += err * features[i][k];
      gb += err;
    }
    for (std::size_t k = 0; k < d; ++k) w[k] -= lr * gw[k] / static_cast<double>(n);
    b -= lr * gb / static_cast<double>(n);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t k = 0; k < d; ++k) z += w[k] * features[i][k];
    if ((z > 0.0) == (labels[i] > 0)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace wbc::checks
