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

#include "wbc/nn/layers.hpp"

#include <cmath>
#include <limits>

#include "wbc/core/error.hpp"
#include "wbc/norm/normalization.hpp"

namespace wbc::nn {

namespace {

// Torch-style default init for conv/linear weights and biases.
Tensor uniform_init(std::vector<Index> dims, float bound, Rng& rng) {
  Tensor t(std::move(dims));
  for (Index i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(rng.uniform(-static_cast<double>(bound), bound));
  return t;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

Index conv_out_extent(Index in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// (N,C,H,W) -> (N,H,W,C) and back; the ConvNeXt block normalizes and mixes
// channels per spatial position, which wants channels-last rows.
Tensor nchw_to_nhwc(const Tensor& x) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, h, w, c});
  const Index hw = h * w;
  for (Index b = 0; b < n; ++b) {
    const float* src = x.data() + b * c * hw;
    float* dst = y.data() + b * hw * c;
    for (Index ch = 0; ch < c; ++ch)
      for (Index p = 0; p < hw; ++p) dst[p * c + ch] = src[ch * hw + p];
  }
  return y;
}

Tensor nhwc_to_nchw(const Tensor& x) {
  const Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor y({n, c, h, w});
  const Index hw = h * w;
  for (Index b = 0; b < n; ++b) {
    const float* src = x.data() + b * hw * c;
    float* dst = y.data() + b * c * hw;
    for (Index ch = 0; ch < c; ++ch)
      for (Index p = 0; p < hw; ++p) dst[ch * hw + p] = src[p * c + ch];
  }
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(Index in_ch, Index out_ch, int kernel, int stride, int padding, Index groups,
               bool bias, Rng& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      groups_(groups),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      has_bias_(bias) {
  require(groups > 0 && in_ch % groups == 0 && out_ch % groups == 0,
          "conv2d: channel counts must divide by groups");
  require(kernel > 0 && stride > 0 && padding >= 0, "conv2d: bad kernel/stride/padding");
  const Index fan_in = (in_ch / groups) * kernel * kernel;
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  weight = Param(uniform_init({out_ch, in_ch / groups, kernel, kernel}, bound, rng));
  if (has_bias_) this->bias = Param(uniform_init({out_ch}, bound, rng));
}

namespace {

// Unrolls one (sample, group) slab into a (ch_per_group*k*k, oh*ow) matrix.
void im2col(const float* x, Index in_c_total, Index h, Index w, Index c0, Index c_count,
            int kernel, int stride, int padding, Index oh, Index ow, float* col) {
  (void)in_c_total;
  for (Index ci = 0; ci < c_count; ++ci) {
    const float* plane = x + (c0 + ci) * h * w;
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        float* row = col + ((ci * kernel + kh) * kernel + kw) * oh * ow;
        for (Index y = 0; y < oh; ++y) {
          const Index iy = y * stride - padding + kh;
          if (iy < 0 || iy >= h) {
            for (Index xo = 0; xo < ow; ++xo) row[y * ow + xo] = 0.0f;
            continue;
          }
          for (Index xo = 0; xo < ow; ++xo) {
            const Index ix = xo * stride - padding + kw;
            row[y * ow + xo] = (ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-add of the unrolled gradient back onto the input slab.
void col2im_add(const float* col, Index h, Index w, Index c0, Index c_count, int kernel,
                int stride, int padding, Index oh, Index ow, float* dx) {
  for (Index ci = 0; ci < c_count; ++ci) {
    float* plane = dx + (c0 + ci) * h * w;
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        const float* row = col + ((ci * kernel + kh) * kernel + kw) * oh * ow;
        for (Index y = 0; y < oh; ++y) {
          const Index iy = y * stride - padding + kh;
          if (iy < 0 || iy >= h) continue;
          for (Index xo = 0; xo < ow; ++xo) {
            const Index ix = xo * stride - padding + kw;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += row[y * ow + xo];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() == 4 && x.dim(1) == in_ch_,
          "conv2d: expected (N," + std::to_string(in_ch_) + ",H,W), got " + x.dims_string());
  input_ = x;
  has_input_ = true;
  const Index n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const Index oh = conv_out_extent(h, kernel_, stride_, padding_);
  const Index ow = conv_out_extent(w, kernel_, stride_, padding_);
  require(oh > 0 && ow > 0, "conv2d: output would be empty for input " + x.dims_string());
  const Index cg = in_ch_ / groups_, og = out_ch_ / groups_;
  const Index patch = cg * kernel_ * kernel_;

  Tensor y({n, out_ch_, oh, ow});
  Tensor col({patch, oh * ow});
  for (Index b = 0; b < n; ++b) {
    const float* xb = x.data() + b * in_ch_ * h * w;
    for (Index g = 0; g < groups_; ++g) {
      im2col(xb, in_ch_, h, w, g * cg, cg, kernel_, stride_, padding_, oh, ow, col.data());
      Eigen::Map<const RowMatrixF> wmat(weight.value.data() + g * og * patch, og, patch);
      Eigen::Map<const RowMatrixF> cmat(col.data(), patch, oh * ow);
      Eigen::Map<RowMatrixF> ymat(y.data() + (b * out_ch_ + g * og) * oh * ow, og, oh * ow);
      ymat.noalias() = wmat * cmat;
      if (has_bias_)
        for (Index o = 0; o < og; ++o) ymat.row(o).array() += bias.value[g * og + o];
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  require(has_input_, "conv2d: backward before forward");
  const Index n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const Index oh = dy.dim(2), ow = dy.dim(3);
  const Index cg = in_ch_ / groups_, og = out_ch_ / groups_;
  const Index patch = cg * kernel_ * kernel_;

  Tensor dx(input_.dims());
  Tensor col({patch, oh * ow});
  Tensor dcol({patch, oh * ow});
  for (Index b = 0; b < n; ++b) {
    const float* xb = input_.data() + b * in_ch_ * h * w;
    float* dxb = dx.data() + b * in_ch_ * h * w;
    for (Index g = 0; g < groups_; ++g) {
      im2col(xb, in_ch_, h, w, g * cg, cg, kernel_, stride_, padding_, oh, ow, col.data());
      Eigen::Map<const RowMatrixF> cmat(col.data(), patch, oh * ow);
      Eigen::Map<const RowMatrixF> dymat(dy.data() + (b * out_ch_ + g * og) * oh * ow, og,
                                         oh * ow);
      Eigen::Map<RowMatrixF> dwmat(weight.grad.data() + g * og * patch, og, patch);
      dwmat.noalias() += dymat * cmat.transpose();
      Eigen::Map<const RowMatrixF> wmat(weight.value.data() + g * og * patch, og, patch);
      Eigen::Map<RowMatrixF> dcmat(dcol.data(), patch, oh * ow);
      dcmat.noalias() = wmat.transpose() * dymat;
      col2im_add(dcol.data(), h, w, g * cg, cg, kernel_, stride_, padding_, oh, ow, dxb);
      if (has_bias_)
        for (Index o = 0; o < og; ++o) bias.grad[g * og + o] += dymat.row(o).sum();
    }
  }
  return dx;
}

void Conv2d::visit_params(const std::string& prefix, const ParamVisitor& v) {
  v(join_name(prefix, "weight"), weight);
  if (has_bias_) v(join_name(prefix, "bias"), bias);
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(Index in_features, Index out_features, bool bias, Rng& rng)
    : in_(in_features), out_(out_features), has_bias_(bias) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_features));
  weight = Param(uniform_init({out_features, in_features}, bound, rng));
  if (has_bias_) this->bias = Param(uniform_init({out_features}, bound, rng));
}

Tensor Linear::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() >= 1 && x.dims().back() == in_,
          "linear: expected last dim " + std::to_string(in_) + ", got " + x.dims_string());
  input_ = x;
  has_input_ = true;
  auto xm = x.rows_by_last_dim();
  std::vector<Index> out_dims = x.dims();
  out_dims.back() = out_;
  Tensor y(out_dims);
  auto ym = y.rows_by_last_dim();
  ym.noalias() = xm * weight.value.matrix(out_, in_).transpose();
  if (has_bias_) ym.rowwise() += bias.value.matrix(1, out_).row(0);
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  require(has_input_, "linear: backward before forward");
  auto dym = dy.rows_by_last_dim();
  auto xm = input_.rows_by_last_dim();
  weight.grad.matrix(out_, in_).noalias() += dym.transpose() * xm;
  if (has_bias_) bias.grad.matrix(1, out_).row(0) += dym.colwise().sum();
  Tensor dx(input_.dims());
  dx.rows_by_last_dim().noalias() = dym * weight.value.matrix(out_, in_);
  return dx;
}

void Linear::visit_params(const std::string& prefix, const ParamVisitor& v) {
  v(join_name(prefix, "weight"), weight);
  if (has_bias_) v(join_name(prefix, "bias"), bias);
}

// ---------------------------------------------------------------------------
// Activations

Tensor ReLU::forward(const Tensor& x, Mode mode) {
  (void)mode;
  input_ = x;
  Tensor y(x.dims());
  y.flat() = x.flat().cwiseMax(0.0f);
  return y;
}

Tensor ReLU::backward(const Tensor& dy) {
  Tensor dx(dy.dims());
  dx.flat() = dy.flat() * (input_.flat() > 0.0f).cast<float>();
  return dx;
}

Tensor Gelu::forward(const Tensor& x, Mode mode) {
  (void)mode;
  input_ = x;
  Tensor y(x.dims());
  constexpr float kInvSqrt2 = 0.70710678118654752f;
  for (Index i = 0; i < x.size(); ++i)
    y[i] = 0.5f * x[i] * (1.0f + std::erf(x[i] * kInvSqrt2));
  return y;
}

Tensor Gelu::backward(const Tensor& dy) {
  Tensor dx(dy.dims());
  constexpr float kInvSqrt2 = 0.70710678118654752f;
  constexpr float kInvSqrt2Pi = 0.39894228040143268f;
  for (Index i = 0; i < dy.size(); ++i) {
    const float x = input_[i];
    const float cdf = 0.5f * (1.0f + std::erf(x * kInvSqrt2));
    const float pdf = kInvSqrt2Pi * std::exp(-0.5f * x * x);
    dx[i] = dy[i] * (cdf + x * pdf);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pooling and shape

MaxPool2d::MaxPool2d(int kernel, int stride, int padding)
    : kernel_(kernel), stride_(stride), padding_(padding) {}

Tensor MaxPool2d::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() == 4, "maxpool2d: expected rank-4 input, got " + x.dims_string());
  in_dims_ = x.dims();
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = conv_out_extent(h, kernel_, stride_, padding_);
  const Index ow = conv_out_extent(w, kernel_, stride_, padding_);
  Tensor y({n, c, oh, ow});
  argmax_.assign(static_cast<std::size_t>(y.size()), -1);
  Index out = 0;
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const float* plane = x.data() + (b * c + ch) * h * w;
      const Index plane_base = (b * c + ch) * h * w;
      for (Index py = 0; py < oh; ++py) {
        for (Index px = 0; px < ow; ++px, ++out) {
          float best = -std::numeric_limits<float>::infinity();
          Index best_idx = -1;
          for (int kh = 0; kh < kernel_; ++kh) {
            const Index iy = py * stride_ - padding_ + kh;
            if (iy < 0 || iy >= h) continue;
            for (int kw = 0; kw < kernel_; ++kw) {
              const Index ix = px * stride_ - padding_ + kw;
              if (ix < 0 || ix >= w) continue;
              const float v = plane[iy * w + ix];
              if (v > best) {
                best = v;
                best_idx = plane_base + iy * w + ix;
              }
            }
          }
          y[out] = (best_idx >= 0) ? best : 0.0f;
          argmax_[static_cast<std::size_t>(out)] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& dy) {
  Tensor dx(in_dims_);
  for (Index i = 0; i < dy.size(); ++i) {
    const Index src = argmax_[static_cast<std::size_t>(i)];
    if (src >= 0) dx[src] += dy[i];
  }
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() == 4, "globalavgpool: expected rank-4 input, got " + x.dims_string());
  in_dims_ = x.dims();
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      const float* plane = x.data() + (b * c + ch) * hw;
      double sum = 0.0;
      for (Index i = 0; i < hw; ++i) sum += plane[i];
      y[b * c + ch] = static_cast<float>(sum / static_cast<double>(hw));
    }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) {
  Tensor dx(in_dims_);
  const Index c = in_dims_[1], hw = in_dims_[2] * in_dims_[3];
  const float inv = 1.0f / static_cast<float>(hw);
  for (Index b = 0; b < in_dims_[0]; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      float* plane = dx.data() + (b * c + ch) * hw;
      const float g = dy[b * c + ch] * inv;
      for (Index i = 0; i < hw; ++i) plane[i] = g;
    }
  return dx;
}

AdaptiveAvgPool2d::AdaptiveAvgPool2d(int out_size) : out_size_(out_size) {}

namespace {
inline Index adapt_start(Index i, Index in, Index out) { return (i * in) / out; }
inline Index adapt_end(Index i, Index in, Index out) { return ((i + 1) * in + out - 1) / out; }
}  // namespace

Tensor AdaptiveAvgPool2d::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() == 4, "adaptiveavgpool2d: expected rank-4 input, got " + x.dims_string());
  in_dims_ = x.dims();
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index o = out_size_;
  Tensor y({n, c, o, o});
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      const float* plane = x.data() + (b * c + ch) * h * w;
      float* out = y.data() + (b * c + ch) * o * o;
      for (Index py = 0; py < o; ++py) {
        const Index y0 = adapt_start(py, h, o), y1 = adapt_end(py, h, o);
        for (Index px = 0; px < o; ++px) {
          const Index x0 = adapt_start(px, w, o), x1 = adapt_end(px, w, o);
          double sum = 0.0;
          for (Index iy = y0; iy < y1; ++iy)
            for (Index ix = x0; ix < x1; ++ix) sum += plane[iy * w + ix];
          out[py * o + px] = static_cast<float>(sum / static_cast<double>((y1 - y0) * (x1 - x0)));
        }
      }
    }
  return y;
}

Tensor AdaptiveAvgPool2d::backward(const Tensor& dy) {
  Tensor dx(in_dims_);
  const Index n = in_dims_[0], c = in_dims_[1], h = in_dims_[2], w = in_dims_[3];
  const Index o = out_size_;
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      float* plane = dx.data() + (b * c + ch) * h * w;
      const float* g = dy.data() + (b * c + ch) * o * o;
      for (Index py = 0; py < o; ++py) {
        const Index y0 = adapt_start(py, h, o), y1 = adapt_end(py, h, o);
        for (Index px = 0; px < o; ++px) {
          const Index x0 = adapt_start(px, w, o), x1 = adapt_end(px, w, o);
          const float share = g[py * o + px] / static_cast<float>((y1 - y0) * (x1 - x0));
          for (Index iy = y0; iy < y1; ++iy)
            for (Index ix = x0; ix < x1; ++ix) plane[iy * w + ix] += share;
        }
      }
    }
  return dx;
}

Tensor Flatten::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() >= 2, "flatten: expected rank >= 2, got " + x.dims_string());
  in_dims_ = x.dims();
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

Tensor Flatten::backward(const Tensor& dy) { return dy.reshaped(in_dims_); }

Dropout::Dropout(float p) : p_(p), rng_(0) {
  require(p >= 0.0f && p < 1.0f, "dropout: p must lie in [0,1)");
}

Tensor Dropout::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::kEval || p_ == 0.0f) {
    train_pass_ = false;
    return x;
  }
  train_pass_ = true;
  mask_ = Tensor(x.dims());
  const float inv_keep = 1.0f / (1.0f - p_);
  for (Index i = 0; i < mask_.size(); ++i)
    mask_[i] = (rng_.uniform() >= static_cast<double>(p_)) ? inv_keep : 0.0f;
  Tensor y(x.dims());
  y.flat() = x.flat() * mask_.flat();
  return y;
}

Tensor Dropout::backward(const Tensor& dy) {
  if (!train_pass_) return dy;
  Tensor dx(dy.dims());
  dx.flat() = dy.flat() * mask_.flat();
  return dx;
}

void Dropout::reseed(std::uint64_t seed) { rng_ = Rng(seed); }

// ---------------------------------------------------------------------------
// Normalization layers

BatchNorm2d::BatchNorm2d(Index channels) : channels_(channels) {
  weight = Param(Tensor({channels}, 1.0f));
  bias = Param(Tensor({channels}, 0.0f));
  running_mean = Tensor({channels}, 0.0f);
  running_var = Tensor({channels}, 1.0f);
}

namespace {

template <typename Vec>
void copy_to_eigen(const Tensor& t, Vec& v) {
  v.resize(t.size());
  for (Index i = 0; i < t.size(); ++i) v[i] = t[i];
}

void copy_from_eigen(const norm::VectorX<float>& v, Tensor& t) {
  for (Index i = 0; i < t.size(); ++i) t[i] = v[i];
}

}  // namespace

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  require(x.rank() == 4 && x.dim(1) == channels_,
          "batchnorm2d: expected (N," + std::to_string(channels_) + ",H,W), got " +
              x.dims_string());
  input_ = x;
  norm::BnState<float> state;
  copy_to_eigen(running_mean, state.running_mean);
  copy_to_eigen(running_var, state.running_var);
  copy_to_eigen(weight.value, state.gamma);
  copy_to_eigen(bias.value, state.beta);
  state.frozen = frozen_;

  const norm::Shape4 s{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  Tensor y(x.dims());
  norm::batch_norm_forward<float>({x.data(), static_cast<std::size_t>(x.size())},
                                  {y.data(), static_cast<std::size_t>(y.size())}, s, state,
                                  mode == Mode::kTrain ? norm::NormMode::kTrain
                                                       : norm::NormMode::kEval);
  used_batch_stats_ = (mode == Mode::kTrain) && !frozen_;
  if (used_batch_stats_) {
    copy_from_eigen(state.running_mean, running_mean);
    copy_from_eigen(state.running_var, running_var);
  }

  // Stash the statistics the forward normalized with; backward needs them.
  saved_mean_.resize(static_cast<std::size_t>(channels_));
  saved_inv_std_.resize(static_cast<std::size_t>(channels_));
  const Index hw = s.h * s.w;
  const Index m = s.per_channel();
  for (Index c = 0; c < channels_; ++c) {
    if (used_batch_stats_) {
      double sum = 0.0, sum_sq = 0.0;
      for (Index n = 0; n < s.n; ++n) {
        const float* slab = x.data() + (n * channels_ + c) * hw;
        for (Index i = 0; i < hw; ++i) {
          const double v = slab[i];
          sum += v;
          sum_sq += v * v;
        }
      }
      const double mu = sum / static_cast<double>(m);
      double var = sum_sq / static_cast<double>(m) - mu * mu;
      if (var < 0.0) var = 0.0;
      saved_mean_[static_cast<std::size_t>(c)] = static_cast<float>(mu);
      saved_inv_std_[static_cast<std::size_t>(c)] =
          1.0f / std::sqrt(static_cast<float>(var) + state.eps);
    } else {
      saved_mean_[static_cast<std::size_t>(c)] = running_mean[c];
      saved_inv_std_[static_cast<std::size_t>(c)] = 1.0f / std::sqrt(running_var[c] + state.eps);
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  require(!saved_mean_.empty(), "batchnorm2d: backward before forward");
  const Index n = input_.dim(0), hw = input_.dim(2) * input_.dim(3);
  const Index m = n * hw;
  Tensor dx(input_.dims());
  for (Index c = 0; c < channels_; ++c) {
    const float mean = saved_mean_[static_cast<std::size_t>(c)];
    const float inv_std = saved_inv_std_[static_cast<std::size_t>(c)];
    const float gamma = weight.value[c];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (Index b = 0; b < n; ++b) {
      const float* xs = input_.data() + (b * channels_ + c) * hw;
      const float* gs = dy.data() + (b * channels_ + c) * hw;
      for (Index i = 0; i < hw; ++i) {
        const double xhat = (xs[i] - mean) * inv_std;
        sum_dy += gs[i];
        sum_dy_xhat += gs[i] * xhat;
      }
    }
    weight.grad[c] += static_cast<float>(sum_dy_xhat);
    bias.grad[c] += static_cast<float>(sum_dy);
    if (used_batch_stats_) {
      const float mean_dy = static_cast<float>(sum_dy / static_cast<double>(m));
      const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / static_cast<double>(m));
      for (Index b = 0; b < n; ++b) {
        const float* xs = input_.data() + (b * channels_ + c) * hw;
        const float* gs = dy.data() + (b * channels_ + c) * hw;
        float* ds = dx.data() + (b * channels_ + c) * hw;
        for (Index i = 0; i < hw; ++i) {
          const float xhat = (xs[i] - mean) * inv_std;
          ds[i] = gamma * inv_std * (gs[i] - mean_dy - xhat * mean_dy_xhat);
        }
      }
    } else {
      // Running statistics are constants: the layer is a per-channel affine.
      const float k = gamma * inv_std;
      for (Index b = 0; b < n; ++b) {
        const float* gs = dy.data() + (b * channels_ + c) * hw;
        float* ds = dx.data() + (b * channels_ + c) * hw;
        for (Index i = 0; i < hw; ++i) ds[i] = k * gs[i];
      }
    }
  }
  return dx;
}

void BatchNorm2d::visit_params(const std::string& prefix, const ParamVisitor& v) {
  v(join_name(prefix, "weight"), weight);
  v(join_name(prefix, "bias"), bias);
}

void BatchNorm2d::visit_buffers(const std::string& prefix, const BufferVisitor& v) {
  v(join_name(prefix, "running_mean"), running_mean);
  v(join_name(prefix, "running_var"), running_var);
}

void BatchNorm2d::freeze() {
  frozen_ = true;
  weight.trainable = false;
  bias.trainable = false;
}

// ---------------------------------------------------------------------------
// GroupNorm

GroupNorm::GroupNorm(Index num_groups, Index channels) : groups_(num_groups), channels_(channels) {
  norm::GnParams<float>::identity(channels, num_groups);  // validates divisibility
  weight = Param(Tensor({channels}, 1.0f));
  bias = Param(Tensor({channels}, 0.0f));
}

Tensor GroupNorm::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() == 4 && x.dim(1) == channels_,
          "groupnorm: expected (N," + std::to_string(channels_) + ",H,W), got " +
              x.dims_string());
  input_ = x;
  norm::GnParams<float> params;
  params.num_groups = groups_;
  copy_to_eigen(weight.value, params.gamma);
  copy_to_eigen(bias.value, params.beta);

  const norm::Shape4 s{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  Tensor y(x.dims());
  norm::group_norm_forward<float>({x.data(), static_cast<std::size_t>(x.size())},
                                  {y.data(), static_cast<std::size_t>(y.size())}, s, params);

  // Recompute the per-(sample, group) statistics with the same accumulation
  // order so backward sees exactly what forward used.
  const Index n = s.n, hw = s.h * s.w;
  const Index cpg = channels_ / groups_;
  const Index gcount = cpg * hw;
  saved_mean_.resize(static_cast<std::size_t>(n * groups_));
  saved_inv_std_.resize(static_cast<std::size_t>(n * groups_));
  for (Index b = 0; b < n; ++b) {
    for (Index g = 0; g < groups_; ++g) {
      double sum = 0.0, sum_sq = 0.0;
      for (Index c = g * cpg; c < (g + 1) * cpg; ++c) {
        const float* slab = x.data() + (b * channels_ + c) * hw;
        for (Index i = 0; i < hw; ++i) {
          const double v = slab[i];
          sum += v;
          sum_sq += v * v;
        }
      }
      const double mu = sum / static_cast<double>(gcount);
      double var = sum_sq / static_cast<double>(gcount) - mu * mu;
      if (var < 0.0) var = 0.0;
      saved_mean_[static_cast<std::size_t>(b * groups_ + g)] = static_cast<float>(mu);
      saved_inv_std_[static_cast<std::size_t>(b * groups_ + g)] =
          1.0f / std::sqrt(static_cast<float>(var) + params.eps);
    }
  }
  return y;
}

Tensor GroupNorm::backward(const Tensor& dy) {
  require(!saved_mean_.empty(), "groupnorm: backward before forward");
  const Index n = input_.dim(0), hw = input_.dim(2) * input_.dim(3);
  const Index cpg = channels_ / groups_;
  const Index gcount = cpg * hw;
  Tensor dx(input_.dims());
  std::vector<double> dgamma(static_cast<std::size_t>(channels_), 0.0);
  std::vector<double> dbeta(static_cast<std::size_t>(channels_), 0.0);
  for (Index b = 0; b < n; ++b) {
    for (Index g = 0; g < groups_; ++g) {
      const float mean = saved_mean_[static_cast<std::size_t>(b * groups_ + g)];
      const float inv_std = saved_inv_std_[static_cast<std::size_t>(b * groups_ + g)];
      // u = dy * gamma; dx = inv_std * (u - mean(u) - xhat * mean(u .* xhat))
      double sum_u = 0.0, sum_u_xhat = 0.0;
      for (Index c = g * cpg; c < (g + 1) * cpg; ++c) {
        const float gamma = weight.value[c];
        const float* xs = input_.data() + (b * channels_ + c) * hw;
        const float* gs = dy.data() + (b * channels_ + c) * hw;
        for (Index i = 0; i < hw; ++i) {
          const double xhat = (xs[i] - mean) * inv_std;
          const double u = gs[i] * gamma;
          sum_u += u;
          sum_u_xhat += u * xhat;
          dgamma[static_cast<std::size_t>(c)] += gs[i] * xhat;
          dbeta[static_cast<std::size_t>(c)] += gs[i];
        }
      }
      const float mean_u = static_cast<float>(sum_u / static_cast<double>(gcount));
      const float mean_u_xhat = static_cast<float>(sum_u_xhat / static_cast<double>(gcount));
      for (Index c = g * cpg; c < (g + 1) * cpg; ++c) {
        const float gamma = weight.value[c];
        const float* xs = input_.data() + (b * channels_ + c) * hw;
        const float* gs = dy.data() + (b * channels_ + c) * hw;
        float* ds = dx.data() + (b * channels_ + c) * hw;
        for (Index i = 0; i < hw; ++i) {
          const float xhat = (xs[i] - mean) * inv_std;
          ds[i] = inv_std * (gs[i] * gamma - mean_u - xhat * mean_u_xhat);
        }
      }
    }
  }
  for (Index c = 0; c < channels_; ++c) {
    weight.grad[c] += static_cast<float>(dgamma[static_cast<std::size_t>(c)]);
    bias.grad[c] += static_cast<float>(dbeta[static_cast<std::size_t>(c)]);
  }
  return dx;
}

void GroupNorm::visit_params(const std::string& prefix, const ParamVisitor& v) {
  v(join_name(prefix, "weight"), weight);
  v(join_name(prefix, "bias"), bias);
}

// ---------------------------------------------------------------------------
// Layer norms

LayerNorm2d::LayerNorm2d(Index channels, float eps) : channels_(channels), eps_(eps) {
  weight = Param(Tensor({channels}, 1.0f));
  bias = Param(Tensor({channels}, 0.0f));
}

Tensor LayerNorm2d::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() == 4 && x.dim(1) == channels_,
          "layernorm2d: expected (N," + std::to_string(channels_) + ",H,W), got " +
              x.dims_string());
  input_ = x;
  const Index n = x.dim(0), c = channels_, hw = x.dim(2) * x.dim(3);
  Tensor y(x.dims());
  saved_mean_.resize(static_cast<std::size_t>(n * hw));
  saved_inv_std_.resize(static_cast<std::size_t>(n * hw));
  for (Index b = 0; b < n; ++b) {
    const float* xb = x.data() + b * c * hw;
    float* yb = y.data() + b * c * hw;
    for (Index p = 0; p < hw; ++p) {
      double sum = 0.0, sum_sq = 0.0;
      for (Index ch = 0; ch < c; ++ch) {
        const double v = xb[ch * hw + p];
        sum += v;
        sum_sq += v * v;
      }
      const double mu = sum / static_cast<double>(c);
      double var = sum_sq / static_cast<double>(c) - mu * mu;
      if (var < 0.0) var = 0.0;
      const float mean = static_cast<float>(mu);
      const float inv_std = 1.0f / std::sqrt(static_cast<float>(var) + eps_);
      saved_mean_[static_cast<std::size_t>(b * hw + p)] = mean;
      saved_inv_std_[static_cast<std::size_t>(b * hw + p)] = inv_std;
      for (Index ch = 0; ch < c; ++ch)
        yb[ch * hw + p] = (xb[ch * hw + p] - mean) * inv_std * weight.value[ch] + bias.value[ch];
    }
  }
  return y;
}

Tensor LayerNorm2d::backward(const Tensor& dy) {
  require(!saved_mean_.empty(), "layernorm2d: backward before forward");
  const Index n = input_.dim(0), c = channels_, hw = input_.dim(2) * input_.dim(3);
  Tensor dx(input_.dims());
  std::vector<double> dgamma(static_cast<std::size_t>(c), 0.0);
  std::vector<double> dbeta(static_cast<std::size_t>(c), 0.0);
  for (Index b = 0; b < n; ++b) {
    const float* xb = input_.data() + b * c * hw;
    const float* gb = dy.data() + b * c * hw;
    float* db = dx.data() + b * c * hw;
    for (Index p = 0; p < hw; ++p) {
      const float mean = saved_mean_[static_cast<std::size_t>(b * hw + p)];
      const float inv_std = saved_inv_std_[static_cast<std::size_t>(b * hw + p)];
      double sum_u = 0.0, sum_u_xhat = 0.0;
      for (Index ch = 0; ch < c; ++ch) {
        const double xhat = (xb[ch * hw + p] - mean) * inv_std;
        const double u = gb[ch * hw + p] * weight.value[ch];
        sum_u += u;
        sum_u_xhat += u * xhat;
        dgamma[static_cast<std::size_t>(ch)] += gb[ch * hw + p] * xhat;
        dbeta[static_cast<std::size_t>(ch)] += gb[ch * hw + p];
      }
      const float mean_u = static_cast<float>(sum_u / static_cast<double>(c));
      const float mean_u_xhat = static_cast<float>(sum_u_xhat / static_cast<double>(c));
      for (Index ch = 0; ch < c; ++ch) {
        const float xhat = (xb[ch * hw + p] - mean) * inv_std;
        db[ch * hw + p] =
            inv_std * (gb[ch * hw + p] * weight.value[ch] - mean_u - xhat * mean_u_xhat);
      }
    }
  }
  for (Index ch = 0; ch < c; ++ch) {
    weight.grad[ch] += static_cast<float>(dgamma[static_cast<std::size_t>(ch)]);
    bias.grad[ch] += static_cast<float>(dbeta[static_cast<std::size_t>(ch)]);
  }
  return dx;
}

void LayerNorm2d::visit_params(const std::string& prefix, const ParamVisitor& v) {
  v(join_name(prefix, "weight"), weight);
  v(join_name(prefix, "bias"), bias);
}

LayerNormLastDim::LayerNormLastDim(Index dim, float eps) : dim_(dim), eps_(eps) {
  weight = Param(Tensor({dim}, 1.0f));
  bias = Param(Tensor({dim}, 0.0f));
}

Tensor LayerNormLastDim::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() >= 1 && x.dims().back() == dim_,
          "layernorm: expected last dim " + std::to_string(dim_) + ", got " + x.dims_string());
  input_ = x;
  const Index rows = x.size() / dim_;
  Tensor y(x.dims());
  saved_mean_.resize(static_cast<std::size_t>(rows));
  saved_inv_std_.resize(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    const float* xr = x.data() + r * dim_;
    float* yr = y.data() + r * dim_;
    double sum = 0.0, sum_sq = 0.0;
    for (Index j = 0; j < dim_; ++j) {
      const double v = xr[j];
      sum += v;
      sum_sq += v * v;
    }
    const double mu = sum / static_cast<double>(dim_);
    double var = sum_sq / static_cast<double>(dim_) - mu * mu;
    if (var < 0.0) var = 0.0;
    const float mean = static_cast<float>(mu);
    const float inv_std = 1.0f / std::sqrt(static_cast<float>(var) + eps_);
    saved_mean_[static_cast<std::size_t>(r)] = mean;
    saved_inv_std_[static_cast<std::size_t>(r)] = inv_std;
    for (Index j = 0; j < dim_; ++j)
      yr[j] = (xr[j] - mean) * inv_std * weight.value[j] + bias.value[j];
  }
  return y;
}

Tensor LayerNormLastDim::backward(const Tensor& dy) {
  require(!saved_mean_.empty(), "layernorm: backward before forward");
  const Index rows = input_.size() / dim_;
  Tensor dx(input_.dims());
  std::vector<double> dgamma(static_cast<std::size_t>(dim_), 0.0);
  std::vector<double> dbeta(static_cast<std::size_t>(dim_), 0.0);
  for (Index r = 0; r < rows; ++r) {
    const float* xr = input_.data() + r * dim_;
    const float* gr = dy.data() + r * dim_;
    float* dr = dx.data() + r * dim_;
    const float mean = saved_mean_[static_cast<std::size_t>(r)];
    const float inv_std = saved_inv_std_[static_cast<std::size_t>(r)];
    double sum_u = 0.0, sum_u_xhat = 0.0;
    for (Index j = 0; j < dim_; ++j) {
      const double xhat = (xr[j] - mean) * inv_std;
      const double u = gr[j] * weight.value[j];
      sum_u += u;
      sum_u_xhat += u * xhat;
      dgamma[static_cast<std::size_t>(j)] += gr[j] * xhat;
      dbeta[static_cast<std::size_t>(j)] += gr[j];
    }
    const float mean_u = static_cast<float>(sum_u / static_cast<double>(dim_));
    const float mean_u_xhat = static_cast<float>(sum_u_xhat / static_cast<double>(dim_));
    for (Index j = 0; j < dim_; ++j) {
      const float xhat = (xr[j] - mean) * inv_std;
      dr[j] = inv_std * (gr[j] * weight.value[j] - mean_u - xhat * mean_u_xhat);
    }
  }
  for (Index j = 0; j < dim_; ++j) {
    weight.grad[j] += static_cast<float>(dgamma[static_cast<std::size_t>(j)]);
    bias.grad[j] += static_cast<float>(dbeta[static_cast<std::size_t>(j)]);
  }
  return dx;
}

void LayerNormLastDim::visit_params(const std::string& prefix, const ParamVisitor& v) {
  v(join_name(prefix, "weight"), weight);
  v(join_name(prefix, "bias"), bias);
}

// ---------------------------------------------------------------------------
// Containers

Layer* Sequential::add(const std::string& name, LayerPtr layer) {
  slots_.emplace_back(name, std::move(layer));
  return slots_.back().second.get();
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& slot : slots_) h = slot.second->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor g = dy;
  for (auto it = slots_.rbegin(); it != slots_.rend(); ++it) g = it->second->backward(g);
  return g;
}

void Sequential::visit_params(const std::string& prefix, const ParamVisitor& v) {
  for (auto& slot : slots_) slot.second->visit_params(join_name(prefix, slot.first), v);
}

void Sequential::visit_buffers(const std::string& prefix, const BufferVisitor& v) {
  for (auto& slot : slots_) slot.second->visit_buffers(join_name(prefix, slot.first), v);
}

void Sequential::visit_children(const ChildVisitor& v) {
  for (auto& slot : slots_) v(slot.first, slot.second);
}

Layer* Sequential::find(const std::string& name) {
  for (auto& slot : slots_)
    if (slot.first == name) return slot.second.get();
  return nullptr;
}

Layer* Sequential::replace(const std::string& name, LayerPtr layer) {
  for (auto& slot : slots_)
    if (slot.first == name) {
      slot.second = std::move(layer);
      return slot.second.get();
    }
  throw ValidationError("sequential has no child named '" + name + "'");
}

void Sequential::reseed(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& slot : slots_) slot.second->reseed(splitmix64(s));
}

Tensor Tap::forward(const Tensor& x, Mode mode) {
  (void)mode;
  last_ = x;
  has_value_ = true;
  return x;
}

Tensor Tap::backward(const Tensor& dy) { return dy; }

const Tensor& Tap::last() const {
  if (!has_value_) throw ValidationError("feature tap read before any forward pass");
  return last_;
}

ChannelScale::ChannelScale(Index channels, float init) : channels_(channels) {
  scale = Param(Tensor({channels, 1, 1}, init));
}

Tensor ChannelScale::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() == 4 && x.dim(1) == channels_,
          "channelscale: expected (N," + std::to_string(channels_) + ",H,W), got " +
              x.dims_string());
  input_ = x;
  const Index n = x.dim(0), hw = x.dim(2) * x.dim(3);
  Tensor y(x.dims());
  for (Index b = 0; b < n; ++b)
    for (Index c = 0; c < channels_; ++c) {
      const float s = scale.value[c];
      const float* xs = x.data() + (b * channels_ + c) * hw;
      float* ys = y.data() + (b * channels_ + c) * hw;
      for (Index i = 0; i < hw; ++i) ys[i] = s * xs[i];
    }
  return y;
}

Tensor ChannelScale::backward(const Tensor& dy) {
  const Index n = input_.dim(0), hw = input_.dim(2) * input_.dim(3);
  Tensor dx(input_.dims());
  for (Index c = 0; c < channels_; ++c) {
    const float s = scale.value[c];
    double ds = 0.0;
    for (Index b = 0; b < n; ++b) {
      const float* xs = input_.data() + (b * channels_ + c) * hw;
      const float* gs = dy.data() + (b * channels_ + c) * hw;
      float* dd = dx.data() + (b * channels_ + c) * hw;
      for (Index i = 0; i < hw; ++i) {
        ds += gs[i] * xs[i];
        dd[i] = s * gs[i];
      }
    }
    scale.grad[c] += static_cast<float>(ds);
  }
  return dx;
}

void ChannelScale::visit_params(const std::string& prefix, const ParamVisitor& v) {
  // Visited under the owner's name: the scale vector IS the module parameter.
  v(prefix, scale);
}

StochasticDepth::StochasticDepth(float p) : p_(p), rng_(0) {
  require(p >= 0.0f && p < 1.0f, "stochasticdepth: p must lie in [0,1)");
}

Tensor StochasticDepth::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::kEval || p_ == 0.0f) {
    train_pass_ = false;
    return x;
  }
  train_pass_ = true;
  const Index n = x.dim(0);
  const Index per = x.size() / n;
  keep_.resize(static_cast<std::size_t>(n));
  Tensor y(x.dims());
  for (Index b = 0; b < n; ++b) {
    const float s =
        (rng_.uniform() >= static_cast<double>(p_)) ? 1.0f / (1.0f - p_) : 0.0f;
    keep_[static_cast<std::size_t>(b)] = s;
    const float* xs = x.data() + b * per;
    float* ys = y.data() + b * per;
    for (Index i = 0; i < per; ++i) ys[i] = s * xs[i];
  }
  return y;
}

Tensor StochasticDepth::backward(const Tensor& dy) {
  if (!train_pass_) return dy;
  const Index n = dy.dim(0);
  const Index per = dy.size() / n;
  Tensor dx(dy.dims());
  for (Index b = 0; b < n; ++b) {
    const float s = keep_[static_cast<std::size_t>(b)];
    const float* gs = dy.data() + b * per;
    float* ds = dx.data() + b * per;
    for (Index i = 0; i < per; ++i) ds[i] = s * gs[i];
  }
  return dx;
}

void StochasticDepth::reseed(std::uint64_t seed) { rng_ = Rng(seed); }

// ---------------------------------------------------------------------------
// Bottleneck

Bottleneck::Bottleneck(Index in_ch, Index mid_ch, Index out_ch, int stride, bool has_downsample,
                       Rng& rng) {
  conv1_ = std::make_unique<Conv2d>(in_ch, mid_ch, 1, 1, 0, 1, false, rng);
  norm1_ = std::make_unique<BatchNorm2d>(mid_ch);
  conv2_ = std::make_unique<Conv2d>(mid_ch, mid_ch, 3, stride, 1, 1, false, rng);
  norm2_ = std::make_unique<BatchNorm2d>(mid_ch);
  conv3_ = std::make_unique<Conv2d>(mid_ch, out_ch, 1, 1, 0, 1, false, rng);
  norm3_ = std::make_unique<BatchNorm2d>(out_ch);
  if (has_downsample) {
    auto ds = std::make_unique<Sequential>();
    ds->add("0", std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0, 1, false, rng));
    ds->add("1", std::make_unique<BatchNorm2d>(out_ch));
    downsample_ = std::move(ds);
  }
}

Tensor Bottleneck::forward(const Tensor& x, Mode mode) {
  input_ = x;
  Tensor b = conv1_->forward(x, mode);
  b = norm1_->forward(b, mode);
  b = relu1_.forward(b, mode);
  b = conv2_->forward(b, mode);
  b = norm2_->forward(b, mode);
  b = relu2_.forward(b, mode);
  b = conv3_->forward(b, mode);
  b = norm3_->forward(b, mode);
  if (downsample_) {
    Tensor s = downsample_->forward(x, mode);
    b.flat() += s.flat();
  } else {
    b.flat() += x.flat();
  }
  sum_ = b;
  Tensor y(b.dims());
  y.flat() = b.flat().cwiseMax(0.0f);
  return y;
}

Tensor Bottleneck::backward(const Tensor& dy) {
  Tensor dsum(dy.dims());
  dsum.flat() = dy.flat() * (sum_.flat() > 0.0f).cast<float>();
  Tensor db = norm3_->backward(dsum);
  db = conv3_->backward(db);
  db = relu2_.backward(db);
  db = norm2_->backward(db);
  db = conv2_->backward(db);
  db = relu1_.backward(db);
  db = norm1_->backward(db);
  db = conv1_->backward(db);
  if (downsample_) {
    Tensor ds = downsample_->backward(dsum);
    db.flat() += ds.flat();
  } else {
    db.flat() += dsum.flat();
  }
  return db;
}

void Bottleneck::visit_params(const std::string& prefix, const ParamVisitor& v) {
  conv1_->visit_params(join_name(prefix, "conv1"), v);
  norm1_->visit_params(join_name(prefix, "bn1"), v);
  conv2_->visit_params(join_name(prefix, "conv2"), v);
  norm2_->visit_params(join_name(prefix, "bn2"), v);
  conv3_->visit_params(join_name(prefix, "conv3"), v);
  norm3_->visit_params(join_name(prefix, "bn3"), v);
  if (downsample_) downsample_->visit_params(join_name(prefix, "downsample"), v);
}

void Bottleneck::visit_buffers(const std::string& prefix, const BufferVisitor& v) {
  norm1_->visit_buffers(join_name(prefix, "bn1"), v);
  norm2_->visit_buffers(join_name(prefix, "bn2"), v);
  norm3_->visit_buffers(join_name(prefix, "bn3"), v);
  if (downsample_) downsample_->visit_buffers(join_name(prefix, "downsample"), v);
}

void Bottleneck::visit_children(const ChildVisitor& v) {
  v("conv1", conv1_);
  v("bn1", norm1_);
  v("conv2", conv2_);
  v("bn2", norm2_);
  v("conv3", conv3_);
  v("bn3", norm3_);
  if (downsample_) v("downsample", downsample_);
}

void Bottleneck::reseed(std::uint64_t seed) {
  std::uint64_t s = seed;
  conv1_->reseed(splitmix64(s));
  norm1_->reseed(splitmix64(s));
  conv2_->reseed(splitmix64(s));
  norm2_->reseed(splitmix64(s));
  conv3_->reseed(splitmix64(s));
  norm3_->reseed(splitmix64(s));
  if (downsample_) downsample_->reseed(splitmix64(s));
}

// ---------------------------------------------------------------------------
// Multi-head self-attention

MultiheadSelfAttention::MultiheadSelfAttention(Index dim, Index heads, Rng& rng)
    : dim_(dim), heads_(heads) {
  require(dim % heads == 0, "attention: dim must divide by heads");
  // Xavier-uniform fused projection, zero biases, torch-style output proj.
  const float in_bound = std::sqrt(6.0f / static_cast<float>(dim + 3 * dim));
  in_proj_weight = Param(uniform_init({3 * dim, dim}, in_bound, rng));
  in_proj_bias = Param(Tensor({3 * dim}, 0.0f));
  const float out_bound = 1.0f / std::sqrt(static_cast<float>(dim));
  out_proj_weight = Param(uniform_init({dim, dim}, out_bound, rng));
  out_proj_bias = Param(Tensor({dim}, 0.0f));
}

Tensor MultiheadSelfAttention::forward(const Tensor& x, Mode mode) {
  (void)mode;
  require(x.rank() == 3 && x.dim(2) == dim_,
          "attention: expected (N,T," + std::to_string(dim_) + "), got " + x.dims_string());
  input_ = x;
  const Index n = x.dim(0), t = x.dim(1);
  const Index dh = dim_ / heads_;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  // Fused qkv projection over all tokens.
  Tensor qkv({n, t, 3 * dim_});
  qkv.rows_by_last_dim().noalias() =
      x.rows_by_last_dim() * in_proj_weight.value.matrix(3 * dim_, dim_).transpose();
  qkv.rows_by_last_dim().rowwise() += in_proj_bias.value.matrix(1, 3 * dim_).row(0);

  q_ = Tensor({n, heads_, t, dh});
  k_ = Tensor({n, heads_, t, dh});
  v_ = Tensor({n, heads_, t, dh});
  for (Index b = 0; b < n; ++b)
    for (Index h = 0; h < heads_; ++h)
      for (Index tt = 0; tt < t; ++tt) {
        const float* row = qkv.data() + (b * t + tt) * 3 * dim_;
        float* qd = q_.data() + ((b * heads_ + h) * t + tt) * dh;
        float* kd = k_.data() + ((b * heads_ + h) * t + tt) * dh;
        float* vd = v_.data() + ((b * heads_ + h) * t + tt) * dh;
        for (Index j = 0; j < dh; ++j) {
          qd[j] = row[h * dh + j];
          kd[j] = row[dim_ + h * dh + j];
          vd[j] = row[2 * dim_ + h * dh + j];
        }
      }

  attn_ = Tensor({n, heads_, t, t});
  context_ = Tensor({n, t, dim_});
  for (Index b = 0; b < n; ++b)
    for (Index h = 0; h < heads_; ++h) {
      Eigen::Map<const RowMatrixF> qm(q_.data() + (b * heads_ + h) * t * dh, t, dh);
      Eigen::Map<const RowMatrixF> km(k_.data() + (b * heads_ + h) * t * dh, t, dh);
      Eigen::Map<const RowMatrixF> vm(v_.data() + (b * heads_ + h) * t * dh, t, dh);
      Eigen::Map<RowMatrixF> am(attn_.data() + (b * heads_ + h) * t * t, t, t);
      am.noalias() = qm * km.transpose() * scale;
      // Row-wise stable softmax.
      for (Index r = 0; r < t; ++r) {
        const float mx = am.row(r).maxCoeff();
        am.row(r) = (am.row(r).array() - mx).exp();
        am.row(r) /= am.row(r).sum();
      }
      // Merge heads back into (N,T,D).
      RowMatrixF ctx = am * vm;  // (t, dh)
      for (Index tt = 0; tt < t; ++tt) {
        float* dst = context_.data() + (b * t + tt) * dim_ + h * dh;
        for (Index j = 0; j < dh; ++j) dst[j] = ctx(tt, j);
      }
    }

  Tensor y({n, t, dim_});
  y.rows_by_last_dim().noalias() =
      context_.rows_by_last_dim() * out_proj_weight.value.matrix(dim_, dim_).transpose();
  y.rows_by_last_dim().rowwise() += out_proj_bias.value.matrix(1, dim_).row(0);
  return y;
}

Tensor MultiheadSelfAttention::backward(const Tensor& dy) {
  const Index n = input_.dim(0), t = input_.dim(1);
  const Index dh = dim_ / heads_;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  // Output projection.
  auto dym = dy.rows_by_last_dim();
  out_proj_weight.grad.matrix(dim_, dim_).noalias() +=
      dym.transpose() * context_.rows_by_last_dim();
  out_proj_bias.grad.matrix(1, dim_).row(0) += dym.colwise().sum();
  Tensor dctx({n, t, dim_});
  dctx.rows_by_last_dim().noalias() = dym * out_proj_weight.value.matrix(dim_, dim_);

  Tensor dqkv({n, t, 3 * dim_});
  for (Index b = 0; b < n; ++b)
    for (Index h = 0; h < heads_; ++h) {
      Eigen::Map<const RowMatrixF> qm(q_.data() + (b * heads_ + h) * t * dh, t, dh);
      Eigen::Map<const RowMatrixF> km(k_.data() + (b * heads_ + h) * t * dh, t, dh);
      Eigen::Map<const RowMatrixF> vm(v_.data() + (b * heads_ + h) * t * dh, t, dh);
      Eigen::Map<const RowMatrixF> am(attn_.data() + (b * heads_ + h) * t * t, t, t);

      // Slice this head's context gradient.
      RowMatrixF dctx_h(t, dh);
      for (Index tt = 0; tt < t; ++tt) {
        const float* src = dctx.data() + (b * t + tt) * dim_ + h * dh;
        for (Index j = 0; j < dh; ++j) dctx_h(tt, j) = src[j];
      }

      RowMatrixF dattn = dctx_h * vm.transpose();         // (t, t)
      RowMatrixF dv = am.transpose() * dctx_h;            // (t, dh)
      // Softmax backward, row-wise.
      RowMatrixF dscores(t, t);
      for (Index r = 0; r < t; ++r) {
        const float dot = (dattn.row(r).array() * am.row(r).array()).sum();
        dscores.row(r) = am.row(r).array() * (dattn.row(r).array() - dot);
      }
      RowMatrixF dq = dscores * km * scale;               // (t, dh)
      RowMatrixF dk = dscores.transpose() * qm * scale;   // (t, dh)

      for (Index tt = 0; tt < t; ++tt) {
        float* row = dqkv.data() + (b * t + tt) * 3 * dim_;
        for (Index j = 0; j < dh; ++j) {
          row[h * dh + j] = dq(tt, j);
          row[dim_ + h * dh + j] = dk(tt, j);
          row[2 * dim_ + h * dh + j] = dv(tt, j);
        }
      }
    }

  auto dqkvm = dqkv.rows_by_last_dim();
  in_proj_weight.grad.matrix(3 * dim_, dim_).noalias() +=
      dqkvm.transpose() * input_.rows_by_last_dim();
  in_proj_bias.grad.matrix(1, 3 * dim_).row(0) += dqkvm.colwise().sum();
  Tensor dx(input_.dims());
  dx.rows_by_last_dim().noalias() = dqkvm * in_proj_weight.value.matrix(3 * dim_, dim_);
  return dx;
}

void MultiheadSelfAttention::visit_params(const std::string& prefix, const ParamVisitor& v) {
  v(join_name(prefix, "in_proj_weight"), in_proj_weight);
  v(join_name(prefix, "in_proj_bias"), in_proj_bias);
  v(join_name(prefix, "out_proj.weight"), out_proj_weight);
  v(join_name(prefix, "out_proj.bias"), out_proj_bias);
}

// ---------------------------------------------------------------------------
// Transformer encoder block

EncoderBlock::EncoderBlock(Index dim, Index heads, Index mlp_dim, float dropout_p, Rng& rng) {
  ln_1_ = std::make_unique<LayerNormLastDim>(dim, 1e-6f);
  attention_ = std::make_unique<MultiheadSelfAttention>(dim, heads, rng);
  dropout_ = std::make_unique<Dropout>(dropout_p);
  ln_2_ = std::make_unique<LayerNormLastDim>(dim, 1e-6f);
  auto mlp = std::make_unique<Sequential>();
  mlp->add("0", std::make_unique<Linear>(dim, mlp_dim, true, rng));
  mlp->add("1", std::make_unique<Gelu>());
  mlp->add("2", std::make_unique<Dropout>(dropout_p));
  mlp->add("3", std::make_unique<Linear>(mlp_dim, dim, true, rng));
  mlp->add("4", std::make_unique<Dropout>(dropout_p));
  mlp_ = std::move(mlp);
}

Tensor EncoderBlock::forward(const Tensor& x, Mode mode) {
  x_in_ = x;
  Tensor h = ln_1_->forward(x, mode);
  h = attention_->forward(h, mode);
  h = dropout_->forward(h, mode);
  h.flat() += x.flat();
  mid_ = h;
  Tensor y = ln_2_->forward(h, mode);
  y = mlp_->forward(y, mode);
  y.flat() += mid_.flat();
  return y;
}

Tensor EncoderBlock::backward(const Tensor& dy) {
  Tensor dmlp = mlp_->backward(dy);
  dmlp = ln_2_->backward(dmlp);
  Tensor dmid = dy;
  dmid.flat() += dmlp.flat();
  Tensor datt = dropout_->backward(dmid);
  datt = attention_->backward(datt);
  datt = ln_1_->backward(datt);
  Tensor dx = dmid;
  dx.flat() += datt.flat();
  return dx;
}

void EncoderBlock::visit_params(const std::string& prefix, const ParamVisitor& v) {
  ln_1_->visit_params(join_name(prefix, "ln_1"), v);
  attention_->visit_params(join_name(prefix, "self_attention"), v);
  ln_2_->visit_params(join_name(prefix, "ln_2"), v);
  mlp_->visit_params(join_name(prefix, "mlp"), v);
}

void EncoderBlock::visit_buffers(const std::string& prefix, const BufferVisitor& v) {
  (void)prefix;
  (void)v;
}

void EncoderBlock::visit_children(const ChildVisitor& v) {
  v("ln_1", ln_1_);
  v("self_attention", attention_);
  v("ln_2", ln_2_);
  v("mlp", mlp_);
}

void EncoderBlock::reseed(std::uint64_t seed) {
  std::uint64_t s = seed;
  dropout_->reseed(splitmix64(s));
  mlp_->reseed(splitmix64(s));
}

// ---------------------------------------------------------------------------
// ViT backbone

ViTBackbone::ViTBackbone(int image_size, int patch_size, Index dim, Index depth, Index heads,
                         Index mlp_dim, Rng& rng)
    : image_size_(image_size), patch_size_(patch_size), dim_(dim) {
  require(image_size % patch_size == 0, "vit: image size must divide by patch size");
  const Index tokens = static_cast<Index>(image_size / patch_size) *
                       static_cast<Index>(image_size / patch_size);
  conv_proj_ = std::make_unique<Conv2d>(3, dim, patch_size, patch_size, 0, 1, true, rng);
  class_token = Param(Tensor({1, 1, dim}, 0.0f));
  Tensor pos({1, tokens + 1, dim});
  for (Index i = 0; i < pos.size(); ++i)
    pos[i] = static_cast<float>(rng.normal(0.0, 0.02));
  pos_embedding = Param(std::move(pos));
  auto enc = std::make_unique<Sequential>();
  for (Index d = 0; d < depth; ++d)
    enc->add("encoder_layer_" + std::to_string(d),
             std::make_unique<EncoderBlock>(dim, heads, mlp_dim, 0.0f, rng));
  encoder_ = std::move(enc);
  ln_ = std::make_unique<LayerNormLastDim>(dim, 1e-6f);
}

Tensor ViTBackbone::forward(const Tensor& x, Mode mode) {
  require(x.rank() == 4 && x.dim(1) == 3 && x.dim(2) == image_size_ && x.dim(3) == image_size_,
          "vit: expected (N,3," + std::to_string(image_size_) + "," +
              std::to_string(image_size_) + "), got " + x.dims_string());
  const Index n = x.dim(0);
  Tensor patches = conv_proj_->forward(x, mode);  // (N, D, hp, wp)
  const Index t = patches.dim(2) * patches.dim(3);

  Tensor tokens({n, t + 1, dim_});
  for (Index b = 0; b < n; ++b) {
    float* row0 = tokens.data() + b * (t + 1) * dim_;
    for (Index j = 0; j < dim_; ++j) row0[j] = class_token.value[j];
    for (Index tt = 0; tt < t; ++tt) {
      float* dst = tokens.data() + (b * (t + 1) + 1 + tt) * dim_;
      for (Index j = 0; j < dim_; ++j) dst[j] = patches.data()[(b * dim_ + j) * t + tt];
    }
  }
  for (Index b = 0; b < n; ++b) {
    float* dst = tokens.data() + b * (t + 1) * dim_;
    for (Index i = 0; i < (t + 1) * dim_; ++i) dst[i] += pos_embedding.value[i];
  }
  token_dims_ = {n, t + 1, dim_};

  Tensor h = encoder_->forward(tokens, mode);
  h = ln_->forward(h, mode);

  Tensor y({n, dim_});
  for (Index b = 0; b < n; ++b) {
    const float* src = h.data() + b * (t + 1) * dim_;
    float* dst = y.data() + b * dim_;
    for (Index j = 0; j < dim_; ++j) dst[j] = src[j];
  }
  return y;
}

Tensor ViTBackbone::backward(const Tensor& dy) {
  const Index n = token_dims_[0], t1 = token_dims_[1];
  const Index t = t1 - 1;
  Tensor dtok({n, t1, dim_});
  for (Index b = 0; b < n; ++b) {
    float* dst = dtok.data() + b * t1 * dim_;
    const float* src = dy.data() + b * dim_;
    for (Index j = 0; j < dim_; ++j) dst[j] = src[j];
  }
  Tensor g = ln_->backward(dtok);
  g = encoder_->backward(g);

  for (Index b = 0; b < n; ++b) {
    const float* src = g.data() + b * t1 * dim_;
    for (Index i = 0; i < t1 * dim_; ++i) pos_embedding.grad[i] += src[i];
    for (Index j = 0; j < dim_; ++j) class_token.grad[j] += src[j];
  }

  const Index hp = image_size_ / patch_size_;
  Tensor dpatch({n, dim_, hp, hp});
  for (Index b = 0; b < n; ++b)
    for (Index tt = 0; tt < t; ++tt) {
      const float* src = g.data() + (b * t1 + 1 + tt) * dim_;
      for (Index j = 0; j < dim_; ++j) dpatch.data()[(b * dim_ + j) * t + tt] = src[j];
    }
  return conv_proj_->backward(dpatch);
}

void ViTBackbone::visit_params(const std::string& prefix, const ParamVisitor& v) {
  v(join_name(prefix, "class_token"), class_token);
  conv_proj_->visit_params(join_name(prefix, "conv_proj"), v);
  v(join_name(prefix, "encoder.pos_embedding"), pos_embedding);
  encoder_->visit_params(join_name(prefix, "encoder.layers"), v);
  ln_->visit_params(join_name(prefix, "encoder.ln"), v);
}

void ViTBackbone::visit_buffers(const std::string& prefix, const BufferVisitor& v) {
  encoder_->visit_buffers(join_name(prefix, "encoder.layers"), v);
}

void ViTBackbone::visit_children(const ChildVisitor& v) {
  v("conv_proj", conv_proj_);
  v("encoder.layers", encoder_);
  v("encoder.ln", ln_);
}

void ViTBackbone::reseed(std::uint64_t seed) {
  std::uint64_t s = seed;
  encoder_->reseed(splitmix64(s));
}

// ---------------------------------------------------------------------------
// ConvNeXt block

CnBlock::CnBlock(Index channels, float layer_scale_init, float stochastic_depth_p, Rng& rng)
    : channels_(channels) {
  dwconv_ = std::make_unique<Conv2d>(channels, channels, 7, 1, 3, channels, true, rng);
  norm_ = std::make_unique<LayerNormLastDim>(channels, 1e-6f);
  pw1_ = std::make_unique<Linear>(channels, 4 * channels, true, rng);
  gelu_ = std::make_unique<Gelu>();
  pw2_ = std::make_unique<Linear>(4 * channels, channels, true, rng);
  layer_scale_ = std::make_unique<ChannelScale>(channels, layer_scale_init);
  stochastic_depth_ = std::make_unique<StochasticDepth>(stochastic_depth_p);
}

Tensor CnBlock::forward(const Tensor& x, Mode mode) {
  require(x.rank() == 4 && x.dim(1) == channels_,
          "cnblock: expected (N," + std::to_string(channels_) + ",H,W), got " + x.dims_string());
  input_ = x;
  spatial_dims_ = x.dims();
  Tensor b = dwconv_->forward(x, mode);
  b = nchw_to_nhwc(b);
  b = norm_->forward(b, mode);
  b = pw1_->forward(b, mode);
  b = gelu_->forward(b, mode);
  b = pw2_->forward(b, mode);
  b = nhwc_to_nchw(b);
  b = layer_scale_->forward(b, mode);
  b = stochastic_depth_->forward(b, mode);
  b.flat() += x.flat();
  return b;
}

Tensor CnBlock::backward(const Tensor& dy) {
  Tensor db = stochastic_depth_->backward(dy);
  db = layer_scale_->backward(db);
  db = nchw_to_nhwc(db);
  db = pw2_->backward(db);
  db = gelu_->backward(db);
  db = pw1_->backward(db);
  db = norm_->backward(db);
  db = nhwc_to_nchw(db);
  db = dwconv_->backward(db);
  db.flat() += dy.flat();
  return db;
}

void CnBlock::visit_params(const std::string& prefix, const ParamVisitor& v) {
  dwconv_->visit_params(join_name(prefix, "block.0"), v);
  norm_->visit_params(join_name(prefix, "block.2"), v);
  pw1_->visit_params(join_name(prefix, "block.3"), v);
  pw2_->visit_params(join_name(prefix, "block.5"), v);
  layer_scale_->visit_params(join_name(prefix, "layer_scale"), v);
}

void CnBlock::visit_buffers(const std::string& prefix, const BufferVisitor& v) {
  (void)prefix;
  (void)v;
}

void CnBlock::visit_children(const ChildVisitor& v) {
  v("block.0", dwconv_);
  v("block.2", norm_);
  v("block.3", pw1_);
  v("block.5", pw2_);
  v("layer_scale", layer_scale_);
  v("stochastic_depth", stochastic_depth_);
}

void CnBlock::reseed(std::uint64_t seed) {
  std::uint64_t s = seed;
  stochastic_depth_->reseed(splitmix64(s));
}

}  // namespace wbc::nn
