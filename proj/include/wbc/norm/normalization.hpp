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

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <string>

#include "wbc/core/error.hpp"

// Reference train/eval semantics of batch normalization, group normalization
// and frozen batch normalization over NCHW feature maps. These free functions
// are the single normalization code path in the project: the network layers
// route their forwards through them, and the property tests probe them
// directly against brute-force statistics.
//
// Conventions, chosen to match the ImageNet-pretrained weights this project
// consumes (they matter for exact reproduction and the tests depend on them):
//   - Batch statistics normalize with the *biased* variance (divide by m).
//   - The running-variance moving average accumulates the *unbiased* batch
//     variance (divide by m-1).
//   - running = (1 - momentum) * running + momentum * batch, momentum = 0.1.
//   - Statistics accumulate in double regardless of the scalar type.
namespace wbc::norm {

enum class NormMode { kTrain, kEval };

struct Shape4 {
  Eigen::Index n = 0, c = 0, h = 0, w = 0;
  Eigen::Index count() const { return n * c * h * w; }
  Eigen::Index per_channel() const { return n * h * w; }
};

template <typename Scalar>
using VectorX = Eigen::Vector<Scalar, Eigen::Dynamic>;

// Per-channel batch-norm state. `frozen` pins both the statistics and the
// affine parameters: a frozen layer is a fixed per-channel affine map and
// behaves identically in training and evaluation.
template <typename Scalar>
struct BnState {
  VectorX<Scalar> running_mean;
  VectorX<Scalar> running_var;
  VectorX<Scalar> gamma;
  VectorX<Scalar> beta;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);
  bool frozen = false;

  static BnState identity(Eigen::Index channels) {
    BnState s;
    s.running_mean = VectorX<Scalar>::Zero(channels);
    s.running_var = VectorX<Scalar>::Ones(channels);
    s.gamma = VectorX<Scalar>::Ones(channels);
    s.beta = VectorX<Scalar>::Zero(channels);
    return s;
  }

  Eigen::Index channels() const { return running_mean.size(); }

  void validate() const {
    const Eigen::Index c = running_mean.size();
    if (running_var.size() != c || gamma.size() != c || beta.size() != c)
      throw ValidationError("batch norm state has mismatched per-channel vector sizes");
    if (!(eps > Scalar(0))) throw ValidationError("batch norm eps must be positive");
    if (!(momentum > Scalar(0) && momentum < Scalar(1)))
      throw ValidationError("batch norm momentum must lie in (0,1)");
    for (Eigen::Index i = 0; i < c; ++i) {
      if (running_var[i] < Scalar(0))
        throw ValidationError("batch norm running variance must be nonnegative");
    }
  }
};

// Group-norm parameters. Stateless across batches by construction: there are
// no running statistics to drift when the input distribution moves.
template <typename Scalar>
struct GnParams {
  Eigen::Index num_groups = 32;
  VectorX<Scalar> gamma;
  VectorX<Scalar> beta;
  Scalar eps = Scalar(1e-5);

  static GnParams identity(Eigen::Index channels, Eigen::Index groups) {
    GnParams p;
    p.num_groups = groups;
    p.gamma = VectorX<Scalar>::Ones(channels);
    p.beta = VectorX<Scalar>::Zero(channels);
    p.validate();
    return p;
  }

  Eigen::Index channels() const { return gamma.size(); }

  void validate() const {
    if (num_groups <= 0) throw ValidationError("group norm needs a positive group count");
    if (gamma.size() != beta.size())
      throw ValidationError("group norm gamma/beta sizes differ");
    if (gamma.size() % num_groups != 0)
      throw ValidationError("group norm: channel count " + std::to_string(gamma.size()) +
                            " not divisible by num_groups " + std::to_string(num_groups));
    if (!(eps > Scalar(0))) throw ValidationError("group norm eps must be positive");
  }
};

namespace detail {

template <typename Scalar>
inline void check_shape(std::span<const Scalar> x, std::span<Scalar> y, const Shape4& s,
                        Eigen::Index channels, const char* who) {
  if (s.c != channels)
    throw ValidationError(std::string(who) + ": input has " + std::to_string(s.c) +
                          " channels, state has " + std::to_string(channels));
  if (static_cast<Eigen::Index>(x.size()) != s.count() ||
      static_cast<Eigen::Index>(y.size()) != s.count())
    throw ValidationError(std::string(who) + ": buffer size does not match shape");
}

}  // namespace detail

// Normalizes x channel-wise. TRAIN mode (and not frozen) uses statistics of
// the current batch over (N,H,W) and advances the running averages; EVAL mode
// or a frozen state uses the stored running statistics and mutates nothing.
// The affine transform (gamma, beta) is applied last.
template <typename Scalar>
void batch_norm_forward(std::span<const Scalar> x, std::span<Scalar> y, const Shape4& s,
                        BnState<Scalar>& state, NormMode mode) {
  state.validate();
  detail::check_shape(x, y, s, state.channels(), "batch_norm_forward");
  const Eigen::Index hw = s.h * s.w;
  const Eigen::Index m = s.per_channel();
  const bool use_batch_stats = (mode == NormMode::kTrain) && !state.frozen;
  if (use_batch_stats && m < 2)
    throw ValidationError("batch_norm_forward: batch statistics undefined for fewer than 2 "
                          "values per channel (got " + std::to_string(m) + ")");

  for (Eigen::Index c = 0; c < s.c; ++c) {
    Scalar mean, inv_std;
    if (use_batch_stats) {
      double sum = 0.0, sum_sq = 0.0;
      for (Eigen::Index n = 0; n < s.n; ++n) {
        const Scalar* slab = x.data() + (n * s.c + c) * hw;
        for (Eigen::Index i = 0; i < hw; ++i) {
          const double v = static_cast<double>(slab[i]);
          sum += v;
          sum_sq += v * v;
        }
      }
      const double mu = sum / static_cast<double>(m);
      double var = sum_sq / static_cast<double>(m) - mu * mu;
      if (var < 0.0) var = 0.0;  // guard against cancellation on constant input
      mean = static_cast<Scalar>(mu);
      inv_std = Scalar(1) / std::sqrt(static_cast<Scalar>(var) + state.eps);
      const double var_unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
      state.running_mean[c] = (Scalar(1) - state.momentum) * state.running_mean[c] +
                              state.momentum * static_cast<Scalar>(mu);
      state.running_var[c] = (Scalar(1) - state.momentum) * state.running_var[c] +
                             state.momentum * static_cast<Scalar>(var_unbiased);
    } else {
      mean = state.running_mean[c];
      inv_std = Scalar(1) / std::sqrt(state.running_var[c] + state.eps);
    }
    // Subtract the mean before scaling: the fused x*scale+shift form loses
    // precision when inv_std is large (near-constant input).
    const Scalar scale = state.gamma[c] * inv_std;
    const Scalar shift = state.beta[c];
    for (Eigen::Index n = 0; n < s.n; ++n) {
      const Scalar* src = x.data() + (n * s.c + c) * hw;
      Scalar* dst = y.data() + (n * s.c + c) * hw;
      for (Eigen::Index i = 0; i < hw; ++i) dst[i] = (src[i] - mean) * scale + shift;
    }
  }
}

// Normalizes each (sample, group) slab over its C/G x H x W values. There is
// no train/eval distinction and no state mutation.
template <typename Scalar>
void group_norm_forward(std::span<const Scalar> x, std::span<Scalar> y, const Shape4& s,
                        const GnParams<Scalar>& params) {
  params.validate();
  detail::check_shape(x, y, s, params.channels(), "group_norm_forward");
  const Eigen::Index hw = s.h * s.w;
  const Eigen::Index channels_per_group = s.c / params.num_groups;
  const Eigen::Index group_count = channels_per_group * hw;

  for (Eigen::Index n = 0; n < s.n; ++n) {
    for (Eigen::Index g = 0; g < params.num_groups; ++g) {
      const Eigen::Index c0 = g * channels_per_group;
      double sum = 0.0, sum_sq = 0.0;
      for (Eigen::Index c = c0; c < c0 + channels_per_group; ++c) {
        const Scalar* slab = x.data() + (n * s.c + c) * hw;
        for (Eigen::Index i = 0; i < hw; ++i) {
          const double v = static_cast<double>(slab[i]);
          sum += v;
          sum_sq += v * v;
        }
      }
      const double mu = sum / static_cast<double>(group_count);
      double var = sum_sq / static_cast<double>(group_count) - mu * mu;
      if (var < 0.0) var = 0.0;
      const Scalar mean = static_cast<Scalar>(mu);
      const Scalar inv_std = Scalar(1) / std::sqrt(static_cast<Scalar>(var) + params.eps);
      for (Eigen::Index c = c0; c < c0 + channels_per_group; ++c) {
        const Scalar scale = params.gamma[c] * inv_std;
        const Scalar shift = params.beta[c];
        const Scalar* src = x.data() + (n * s.c + c) * hw;
        Scalar* dst = y.data() + (n * s.c + c) * hw;
        for (Eigen::Index i = 0; i < hw; ++i) dst[i] = (src[i] - mean) * scale + shift;
      }
    }
  }
}

// Layer norm over (C,H,W), i.e. group norm with a single group.
template <typename Scalar>
void layer_norm_forward(std::span<const Scalar> x, std::span<Scalar> y, const Shape4& s,
                        const VectorX<Scalar>& gamma, const VectorX<Scalar>& beta, Scalar eps) {
  GnParams<Scalar> p;
  p.num_groups = 1;
  p.gamma = gamma;
  p.beta = beta;
  p.eps = eps;
  group_norm_forward(x, y, s, p);
}

// Pins the statistics and affine parameters at their current (pretrained)
// values. Subsequent TRAIN-mode forwards behave exactly like EVAL-mode ones,
// and gamma/beta must be excluded from the trainable parameter set by the
// caller.
template <typename Scalar>
BnState<Scalar> freeze_bn_state(BnState<Scalar> state) {
  state.frozen = true;
  return state;
}

}  // namespace wbc::norm
