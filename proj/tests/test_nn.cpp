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

#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "wbc/core/rng.hpp"
#include "wbc/core/tensor.hpp"
#include "wbc/nn/layer.hpp"
#include "wbc/nn/layers.hpp"
#include "wbc/nn/loss.hpp"
#include "wbc/nn/optimizer.hpp"

using namespace wbc;
using namespace wbc::nn;

namespace {

// Scalar probe loss L = sum(c .* layer(x)); smooth in x and in the
// parameters, so central differences approximate every gradient we need.
double probe_loss(Layer& layer, const Tensor& x, const Tensor& c, Mode mode) {
  Tensor y = layer.forward(x, mode);
  double s = 0.0;
  for (Index i = 0; i < y.size(); ++i) s += static_cast<double>(c[i]) * y[i];
  return s;
}

bool grad_close(double analytic, double numeric) {
  const double tol = 1e-2 + 2e-2 * std::max(std::abs(analytic), std::abs(numeric));
  return std::abs(analytic - numeric) <= tol;
}

// Finite-difference check of dL/dx and dL/dparam against backward(), sampling
// up to `max_coords` evenly spaced coordinates per tensor. Two central
// differences at h and h/2 feed a Richardson extrapolation that cancels the
// O(h^2) curvature term. A coordinate whose extrapolated value misses the
// analytic gradient is a failure only when the two raw differences agree with
// each other; if they disagree the loss is locally nonsmooth there (a relu or
// pooling argmax flipped inside the probe window) and the coordinate is
// skipped. A real backward bug cannot hide behind that filter: it produces
// self-consistent finite differences that still miss, and the test demands
// that most sampled coordinates were actually checkable.
void gradcheck(Layer& layer, Tensor x, Mode mode, Index max_coords = 48, double h = 1e-2) {
  Rng rng(1234);
  Tensor y0 = layer.forward(x, mode);
  Tensor c = Tensor::randn(y0.dims(), rng);

  AdamW::zero_grad(layer);
  layer.forward(x, mode);
  Tensor dx = layer.backward(c);
  REQUIRE(dx.same_dims(x));
  Index checked = 0, skipped = 0;
  auto check_coords = [&](Tensor& target, const Tensor& analytic_grad, const std::string& what) {
    const Index stride = std::max<Index>(1, target.size() / max_coords);
    for (Index i = 0; i < target.size(); i += stride) {
      const float orig = target[i];
      target[i] = orig + static_cast<float>(h);
      const double lp1 = probe_loss(layer, x, c, mode);
      target[i] = orig - static_cast<float>(h);
      const double lm1 = probe_loss(layer, x, c, mode);
      target[i] = orig + static_cast<float>(h / 2);
      const double lp2 = probe_loss(layer, x, c, mode);
      target[i] = orig - static_cast<float>(h / 2);
      const double lm2 = probe_loss(layer, x, c, mode);
      target[i] = orig;
      const double d1 = (lp1 - lm1) / (2.0 * h);
      const double d2 = (lp2 - lm2) / h;
      const double numeric = (4.0 * d2 - d1) / 3.0;
      const double analytic = analytic_grad[i];
      if (grad_close(analytic, numeric)) {
        ++checked;
        continue;
      }
      const bool fd_consistent =
          std::abs(d1 - d2) <= 0.03 * std::max({1.0, std::abs(d1), std::abs(d2)});
      if (!fd_consistent) {
        ++skipped;  // nonsmooth neighborhood; the probe itself is unreliable
        continue;
      }
      ++checked;
      INFO(what << " coord " << i << ": analytic " << analytic << " numeric " << numeric);
      CHECK(grad_close(analytic, numeric));
    }
  };

  check_coords(x, dx, "input");
  for (auto& np : collect_params(layer)) {
    if (!np.param->trainable) continue;
    check_coords(np.param->value, np.param->grad, np.name);
  }
  INFO("checked " << checked << " skipped " << skipped);
  CHECK(checked >= 3 * (checked + skipped) / 5);
  // Restore caches to a consistent state for any follow-up use.
  layer.forward(x, mode);
}

// Direct convolution in double, the forward oracle for the im2col path.
Tensor conv_reference(const Tensor& x, const Tensor& w, const Tensor* bias, int k, int s, int p,
                      Index groups) {
  const Index n = x.dim(0), in_c = x.dim(1), h = x.dim(2), width = x.dim(3);
  const Index out_c = w.dim(0);
  const Index cg = in_c / groups, og = out_c / groups;
  const Index oh = (h + 2 * p - k) / s + 1;
  const Index ow = (width + 2 * p - k) / s + 1;
  Tensor y({n, out_c, oh, ow});
  for (Index b = 0; b < n; ++b)
    for (Index o = 0; o < out_c; ++o) {
      const Index g = o / og;
      for (Index py = 0; py < oh; ++py)
        for (Index px = 0; px < ow; ++px) {
          double acc = bias ? static_cast<double>((*bias)[o]) : 0.0;
          for (Index ci = 0; ci < cg; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const Index iy = py * s - p + kh;
                const Index ix = px * s - p + kw;
                if (iy < 0 || iy >= h || ix < 0 || ix >= width) continue;
                acc += static_cast<double>(x.at4(b, g * cg + ci, iy, ix)) *
                       w.at4(o, ci, kh, kw);
              }
          y.at4(b, o, py, px) = static_cast<float>(acc);
        }
    }
  return y;
}

std::vector<std::string> param_names(Layer& layer) {
  std::vector<std::string> names;
  for (auto& np : collect_params(layer)) names.push_back(np.name);
  return names;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_SUITE("conv") {
  TEST_CASE("im2col forward matches direct convolution") {
    struct Cfg {
      Index in, out;
      int k, s, p;
      Index g;
      bool bias;
      Index h, w;
    };
    const Cfg cases[] = {
        {3, 4, 3, 1, 1, 1, true, 7, 7},   {4, 6, 3, 2, 0, 2, true, 9, 8},
        {6, 6, 5, 1, 2, 6, false, 6, 6},  {2, 8, 1, 1, 0, 1, true, 5, 5},
        {8, 4, 3, 2, 1, 4, true, 11, 7},  {3, 5, 7, 4, 3, 1, false, 16, 16},
    };
    Rng rng(7);
    for (const auto& cfg : cases) {
      CAPTURE(cfg.in);
      CAPTURE(cfg.out);
      CAPTURE(cfg.k);
      Conv2d conv(cfg.in, cfg.out, cfg.k, cfg.s, cfg.p, cfg.g, cfg.bias, rng);
      Tensor x = Tensor::randn({2, cfg.in, cfg.h, cfg.w}, rng);
      Tensor got = conv.forward(x, Mode::kEval);
      Tensor want = conv_reference(x, conv.weight.value, cfg.bias ? &conv.bias.value : nullptr,
                                   cfg.k, cfg.s, cfg.p, cfg.g);
      REQUIRE(got.same_dims(want));
      float max_diff = 0.0f;
      for (Index i = 0; i < got.size(); ++i)
        max_diff = std::max(max_diff, std::abs(got[i] - want[i]));
      CHECK(max_diff < 1e-4f);
    }
  }

  TEST_CASE("conv gradcheck, dense / strided / grouped / depthwise") {
    Rng rng(11);
    SUBCASE("dense 3x3") {
      Conv2d conv(3, 4, 3, 1, 1, 1, true, rng);
      gradcheck(conv, Tensor::randn({2, 3, 6, 6}, rng), Mode::kTrain);
    }
    SUBCASE("strided grouped") {
      Conv2d conv(4, 6, 3, 2, 1, 2, true, rng);
      gradcheck(conv, Tensor::randn({2, 4, 7, 7}, rng), Mode::kTrain);
    }
    SUBCASE("depthwise 7x7, convnext shape") {
      Conv2d conv(4, 4, 7, 1, 3, 4, true, rng);
      gradcheck(conv, Tensor::randn({1, 4, 8, 8}, rng), Mode::kTrain);
    }
    SUBCASE("1x1 projection") {
      Conv2d conv(6, 3, 1, 1, 0, 1, false, rng);
      gradcheck(conv, Tensor::randn({2, 6, 4, 4}, rng), Mode::kTrain);
    }
  }

  TEST_CASE("conv validates its configuration") {
    Rng rng(1);
    CHECK_THROWS_AS(Conv2d(3, 4, 3, 1, 1, 2, true, rng), ValidationError);  // 3 % 2 != 0
    Conv2d conv(3, 4, 3, 1, 1, 1, true, rng);
    Tensor wrong({2, 5, 6, 6});
    CHECK_THROWS_AS(conv.forward(wrong, Mode::kEval), ValidationError);
  }

  TEST_CASE("default init bound is 1/sqrt(fan_in)") {
    Rng rng(3);
    Conv2d conv(8, 16, 3, 1, 1, 1, true, rng);
    const float bound = 1.0f / std::sqrt(8.0f * 9.0f);
    float mx = 0.0f;
    for (Index i = 0; i < conv.weight.value.size(); ++i)
      mx = std::max(mx, std::abs(conv.weight.value[i]));
    CHECK(mx <= bound);
    CHECK(mx > 0.5f * bound);  // draws actually fill the range
  }
}

TEST_SUITE("basic layers") {
  TEST_CASE("linear gradcheck over rank-3 input") {
    Rng rng(21);
    Linear lin(5, 3, true, rng);
    gradcheck(lin, Tensor::randn({2, 4, 5}, rng), Mode::kTrain);
  }

  TEST_CASE("linear forward matches double loops") {
    Rng rng(22);
    Linear lin(4, 3, true, rng);
    Tensor x = Tensor::randn({6, 4}, rng);
    Tensor y = lin.forward(x, Mode::kEval);
    for (Index r = 0; r < 6; ++r)
      for (Index o = 0; o < 3; ++o) {
        double acc = lin.bias.value[o];
        for (Index j = 0; j < 4; ++j)
          acc += static_cast<double>(x[r * 4 + j]) * lin.weight.value[o * 4 + j];
        CHECK(std::abs(y[r * 3 + o] - acc) < 1e-5);
      }
  }

  TEST_CASE("relu and gelu gradcheck") {
    Rng rng(23);
    ReLU relu;
    // Keep coordinates away from the kink so central differences are valid.
    Tensor x = Tensor::randn({3, 4, 5}, rng);
    for (Index i = 0; i < x.size(); ++i)
      if (std::abs(x[i]) < 0.1f) x[i] = (x[i] < 0 ? -0.1f : 0.1f);
    gradcheck(relu, x, Mode::kTrain);

    Gelu gelu;
    gradcheck(gelu, Tensor::randn({3, 4, 5}, rng), Mode::kTrain);
  }

  TEST_CASE("gelu matches the exact erf definition") {
    Gelu gelu;
    Tensor x({5});
    x[0] = -2.0f; x[1] = -0.5f; x[2] = 0.0f; x[3] = 0.5f; x[4] = 2.0f;
    Tensor y = gelu.forward(x, Mode::kEval);
    for (Index i = 0; i < 5; ++i) {
      const double want = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
      CHECK(std::abs(y[i] - want) < 1e-6);
    }
    CHECK(y[2] == 0.0f);
  }

  TEST_CASE("maxpool known values and gradcheck") {
    MaxPool2d pool(2, 2);
    Tensor x({1, 1, 4, 4});
    for (Index i = 0; i < 16; ++i) x[i] = static_cast<float>(i);
    Tensor y = pool.forward(x, Mode::kEval);
    REQUIRE(y.dims() == std::vector<Index>{1, 1, 2, 2});
    CHECK(y[0] == 5.0f);
    CHECK(y[1] == 7.0f);
    CHECK(y[2] == 13.0f);
    CHECK(y[3] == 15.0f);

    // Backward routes each gradient to the argmax cell only.
    Tensor dy({1, 1, 2, 2});
    dy[0] = 1.0f; dy[1] = 2.0f; dy[2] = 3.0f; dy[3] = 4.0f;
    Tensor dx = pool.backward(dy);
    CHECK(dx[5] == 1.0f);
    CHECK(dx[7] == 2.0f);
    CHECK(dx[13] == 3.0f);
    CHECK(dx[15] == 4.0f);
    float total = 0.0f;
    for (Index i = 0; i < 16; ++i) total += dx[i];
    CHECK(total == 10.0f);

    // Padded resnet-style pooling, gradcheck on well-separated values.
    Rng rng(29);
    MaxPool2d pool3(3, 2, 1);
    Tensor xr = Tensor::randn({2, 3, 7, 7}, rng, 5.0f);
    gradcheck(pool3, xr, Mode::kTrain);
  }

  TEST_CASE("global average pool") {
    Rng rng(31);
    GlobalAvgPool gap;
    Tensor x({2, 3, 4, 4}, 2.5f);
    Tensor y = gap.forward(x, Mode::kEval);
    REQUIRE(y.dims() == std::vector<Index>{2, 3});
    for (Index i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(2.5f));
    gradcheck(gap, Tensor::randn({2, 3, 5, 5}, rng), Mode::kTrain);
  }

  TEST_CASE("adaptive average pool identity and downsample") {
    Rng rng(32);
    Tensor x = Tensor::randn({2, 3, 7, 7}, rng);
    AdaptiveAvgPool2d same(7);
    Tensor y = same.forward(x, Mode::kEval);
    CHECK((y.flat() == x.flat()).all());

    AdaptiveAvgPool2d down(3);
    gradcheck(down, Tensor::randn({2, 2, 5, 5}, rng), Mode::kTrain);
  }

  TEST_CASE("flatten round trip") {
    Rng rng(33);
    Flatten fl;
    Tensor x = Tensor::randn({2, 3, 4, 5}, rng);
    Tensor y = fl.forward(x, Mode::kEval);
    CHECK(y.dims() == std::vector<Index>{2, 60});
    Tensor dx = fl.backward(y);
    CHECK(dx.dims() == x.dims());
    CHECK((dx.flat() == x.flat()).all());
  }
}

TEST_SUITE("stochastic layers") {
  TEST_CASE("dropout semantics") {
    Dropout drop(0.5f);
    drop.reseed(99);
    Rng rng(41);
    Tensor x = Tensor::randn({4, 100}, rng);

    Tensor y_eval = drop.forward(x, Mode::kEval);
    CHECK((y_eval.flat() == x.flat()).all());

    Tensor y = drop.forward(x, Mode::kTrain);
    Index zeros = 0;
    for (Index i = 0; i < y.size(); ++i) {
      if (y[i] == 0.0f) {
        ++zeros;
      } else {
        CHECK(y[i] == doctest::Approx(x[i] * 2.0f));  // 1/(1-p) scaling
      }
    }
    CHECK(zeros > 120);
    CHECK(zeros < 280);

    // Backward applies the same mask as the forward that preceded it.
    Tensor ones({4, 100}, 1.0f);
    Tensor g = drop.backward(ones);
    for (Index i = 0; i < g.size(); ++i) CHECK(g[i] == (y[i] == 0.0f ? 0.0f : 2.0f));

    // Same seed, same mask.
    Dropout drop2(0.5f);
    drop2.reseed(99);
    Tensor y2 = drop2.forward(x, Mode::kTrain);
    CHECK((y2.flat() == y.flat()).all());
  }

  TEST_CASE("stochastic depth keeps or drops whole samples") {
    StochasticDepth sd(0.4f);
    sd.reseed(7);
    Tensor x({8, 3, 2, 2}, 1.0f);
    Tensor y = sd.forward(x, Mode::kTrain);
    const Index per = 12;
    Index kept = 0;
    for (Index b = 0; b < 8; ++b) {
      const float first = y[b * per];
      const bool is_kept = first != 0.0f;
      kept += is_kept ? 1 : 0;
      for (Index i = 0; i < per; ++i) {
        if (is_kept)
          CHECK(y[b * per + i] == doctest::Approx(1.0f / 0.6f));
        else
          CHECK(y[b * per + i] == 0.0f);
      }
    }
    CHECK(kept >= 2);  // p=0.4 over 8 samples; all-drop would be (0.4)^8
    Tensor y_eval = sd.forward(x, Mode::kEval);
    CHECK((y_eval.flat() == x.flat()).all());
  }
}

TEST_SUITE("norm layers") {
  TEST_CASE("batchnorm train-mode gradcheck") {
    Rng rng(51);
    BatchNorm2d bn(3);
    // Non-identity affine so dgamma/dbeta and the mean/var paths all matter.
    for (Index c = 0; c < 3; ++c) {
      bn.weight.value[c] = 0.5f + 0.3f * static_cast<float>(c);
      bn.bias.value[c] = -0.2f + 0.1f * static_cast<float>(c);
    }
    gradcheck(bn, Tensor::randn({4, 3, 5, 5}, rng), Mode::kTrain);
  }

  TEST_CASE("batchnorm eval-mode gradcheck (fixed affine)") {
    Rng rng(52);
    BatchNorm2d bn(3);
    for (Index c = 0; c < 3; ++c) {
      bn.running_mean[c] = 0.3f * static_cast<float>(c);
      bn.running_var[c] = 1.0f + 0.2f * static_cast<float>(c);
    }
    gradcheck(bn, Tensor::randn({2, 3, 4, 4}, rng), Mode::kEval);
  }

  TEST_CASE("frozen batchnorm ignores mode and stops tracking") {
    Rng rng(53);
    BatchNorm2d bn(4);
    Tensor warm = Tensor::randn({4, 4, 6, 6}, rng);
    bn.forward(warm, Mode::kTrain);  // give the running stats some history
    bn.freeze();
    CHECK(bn.frozen());
    CHECK_FALSE(bn.weight.trainable);
    CHECK_FALSE(bn.bias.trainable);

    Tensor rm = bn.running_mean, rv = bn.running_var;
    Tensor x = Tensor::randn({4, 4, 6, 6}, rng);
    Tensor y_train = bn.forward(x, Mode::kTrain);
    Tensor y_eval = bn.forward(x, Mode::kEval);
    CHECK((y_train.flat() == y_eval.flat()).all());
    CHECK((bn.running_mean.flat() == rm.flat()).all());
    CHECK((bn.running_var.flat() == rv.flat()).all());
  }

  TEST_CASE("batchnorm updates running stats in train mode only") {
    Rng rng(54);
    BatchNorm2d bn(2);
    Tensor x = Tensor::randn({8, 2, 4, 4}, rng);
    Tensor rm0 = bn.running_mean;
    bn.forward(x, Mode::kEval);
    CHECK((bn.running_mean.flat() == rm0.flat()).all());
    bn.forward(x, Mode::kTrain);
    CHECK_FALSE((bn.running_mean.flat() == rm0.flat()).all());
  }

  TEST_CASE("groupnorm gradcheck and divisibility guard") {
    Rng rng(55);
    GroupNorm gn(3, 6);
    for (Index c = 0; c < 6; ++c) gn.weight.value[c] = 0.8f + 0.1f * static_cast<float>(c);
    gradcheck(gn, Tensor::randn({2, 6, 4, 4}, rng), Mode::kTrain);
    CHECK_THROWS_AS(GroupNorm(4, 6), ValidationError);
  }

  TEST_CASE("layernorm2d gradcheck") {
    Rng rng(56);
    LayerNorm2d ln(5);
    for (Index c = 0; c < 5; ++c) ln.bias.value[c] = 0.05f * static_cast<float>(c);
    gradcheck(ln, Tensor::randn({2, 5, 3, 3}, rng), Mode::kTrain);
  }

  TEST_CASE("layernorm over last dim gradcheck") {
    Rng rng(57);
    LayerNormLastDim ln(6);
    for (Index c = 0; c < 6; ++c) ln.weight.value[c] = 1.0f + 0.1f * static_cast<float>(c);
    gradcheck(ln, Tensor::randn({2, 5, 6}, rng), Mode::kTrain);
  }

  TEST_CASE("channel-first and last-dim layer norms agree through a permute") {
    Rng rng(58);
    Tensor x = Tensor::randn({2, 4, 3, 3}, rng);
    LayerNorm2d a(4);
    LayerNormLastDim b(4);
    Tensor ya = a.forward(x, Mode::kEval);

    // Manually permute NCHW -> NHWC, normalize, permute back.
    const Index n = 2, c = 4, hw = 9;
    Tensor xp({n * hw, c});
    for (Index bi = 0; bi < n; ++bi)
      for (Index ch = 0; ch < c; ++ch)
        for (Index p = 0; p < hw; ++p) xp[(bi * hw + p) * c + ch] = x[(bi * c + ch) * hw + p];
    Tensor yb = b.forward(xp, Mode::kEval);
    for (Index bi = 0; bi < n; ++bi)
      for (Index ch = 0; ch < c; ++ch)
        for (Index p = 0; p < hw; ++p)
          CHECK(std::abs(ya[(bi * c + ch) * hw + p] - yb[(bi * hw + p) * c + ch]) < 1e-6f);
  }
}

TEST_SUITE("composite layers") {
  TEST_CASE("bottleneck gradcheck, identity shortcut") {
    Rng rng(61);
    Bottleneck block(8, 2, 8, 1, false, rng);
    // Small probe step: the in-branch relus put kinks near most batch-normed
    // activations, and the kink-smearing FD error scales with h.
    gradcheck(block, Tensor::randn({2, 8, 4, 4}, rng), Mode::kTrain, 32, 5e-4);
  }

  TEST_CASE("bottleneck gradcheck, strided downsample") {
    Rng rng(62);
    Bottleneck block(4, 2, 8, 2, true, rng);
    gradcheck(block, Tensor::randn({2, 4, 6, 6}, rng), Mode::kTrain, 32, 5e-4);
  }

  TEST_CASE("bottleneck parameter names follow the torch layout") {
    Rng rng(63);
    Bottleneck block(4, 2, 8, 2, true, rng);
    const std::vector<std::string> want = {
        "conv1.weight", "bn1.weight", "bn1.bias",  "conv2.weight", "bn2.weight",
        "bn2.bias",     "conv3.weight", "bn3.weight", "bn3.bias",
        "downsample.0.weight", "downsample.1.weight", "downsample.1.bias"};
    CHECK(param_names(block) == want);

    std::vector<std::string> buffer_names;
    for (auto& nb : collect_buffers(block)) buffer_names.push_back(nb.name);
    const std::vector<std::string> want_buf = {
        "bn1.running_mean", "bn1.running_var", "bn2.running_mean", "bn2.running_var",
        "bn3.running_mean", "bn3.running_var", "downsample.1.running_mean",
        "downsample.1.running_var"};
    CHECK(buffer_names == want_buf);
  }

  TEST_CASE("self-attention gradcheck") {
    Rng rng(64);
    MultiheadSelfAttention attn(8, 2, rng);
    gradcheck(attn, Tensor::randn({2, 5, 8}, rng), Mode::kTrain, 32);
  }

  TEST_CASE("attention rows are convex combinations of values") {
    Rng rng(65);
    MultiheadSelfAttention attn(4, 1, rng);
    // With zero projections except identity-ish value path this is hard to
    // stage exactly; instead check the bound |out| <= max|v| * ||W_out||_inf
    // indirectly through softmax normalization: constant value vectors give a
    // constant context regardless of the queries.
    for (Index i = 0; i < attn.in_proj_weight.value.size(); ++i)
      attn.in_proj_weight.value[i] = 0.0f;
    for (Index j = 0; j < 4; ++j) attn.in_proj_bias.value[2 * 4 + j] = 0.5f;  // v rows constant
    for (Index i = 0; i < attn.out_proj_weight.value.size(); ++i)
      attn.out_proj_weight.value[i] = 0.0f;
    for (Index j = 0; j < 4; ++j) attn.out_proj_weight.value[j * 4 + j] = 1.0f;
    Tensor x = Tensor::randn({1, 3, 4}, rng);
    Tensor y = attn.forward(x, Mode::kEval);
    for (Index i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(0.5f).epsilon(1e-5));
  }

  TEST_CASE("encoder block gradcheck and names") {
    Rng rng(66);
    EncoderBlock block(8, 2, 16, 0.0f, rng);
    gradcheck(block, Tensor::randn({2, 4, 8}, rng), Mode::kTrain, 24);

    const std::vector<std::string> want = {
        "ln_1.weight", "ln_1.bias",
        "self_attention.in_proj_weight", "self_attention.in_proj_bias",
        "self_attention.out_proj.weight", "self_attention.out_proj.bias",
        "ln_2.weight", "ln_2.bias",
        "mlp.0.weight", "mlp.0.bias", "mlp.3.weight", "mlp.3.bias"};
    CHECK(param_names(block) == want);
  }

  TEST_CASE("vit backbone forward shape, gradcheck, names") {
    Rng rng(67);
    ViTBackbone vit(12, 4, 8, 2, 2, 16, rng);
    Tensor x = Tensor::randn({2, 3, 12, 12}, rng);
    Tensor y = vit.forward(x, Mode::kEval);
    CHECK(y.dims() == std::vector<Index>{2, 8});

    gradcheck(vit, Tensor::randn({1, 3, 12, 12}, rng), Mode::kTrain, 16);

    auto names = param_names(vit);
    auto has = [&](const std::string& n) {
      return std::find(names.begin(), names.end(), n) != names.end();
    };
    CHECK(has("class_token"));
    CHECK(has("conv_proj.weight"));
    CHECK(has("conv_proj.bias"));
    CHECK(has("encoder.pos_embedding"));
    CHECK(has("encoder.layers.encoder_layer_0.self_attention.in_proj_weight"));
    CHECK(has("encoder.layers.encoder_layer_1.mlp.3.bias"));
    CHECK(has("encoder.ln.weight"));
  }

  TEST_CASE("convnext block gradcheck and names") {
    Rng rng(68);
    CnBlock block(4, 0.5f, 0.0f, rng);
    gradcheck(block, Tensor::randn({2, 4, 5, 5}, rng), Mode::kTrain, 24);

    const std::vector<std::string> want = {
        "block.0.weight", "block.0.bias", "block.2.weight", "block.2.bias",
        "block.3.weight", "block.3.bias", "block.5.weight", "block.5.bias",
        "layer_scale"};
    CHECK(param_names(block) == want);

    // layer_scale carries the torchvision (C,1,1) shape.
    for (auto& np : collect_params(block))
      if (np.name == "layer_scale") CHECK(np.param->value.dims() == std::vector<Index>{4, 1, 1});
  }

  TEST_CASE("channel scale gradcheck") {
    Rng rng(69);
    ChannelScale cs(3, 0.7f);
    gradcheck(cs, Tensor::randn({2, 3, 4, 4}, rng), Mode::kTrain);
  }

  TEST_CASE("sequential mini CNN full-stack gradcheck") {
    Rng rng(70);
    Sequential net;
    net.add("0", std::make_unique<Conv2d>(3, 4, 3, 1, 1, 1, false, rng));
    net.add("1", std::make_unique<BatchNorm2d>(4));
    net.add("2", std::make_unique<ReLU>());
    net.add("3", std::make_unique<MaxPool2d>(2, 2));
    net.add("4", std::make_unique<Conv2d>(4, 6, 3, 2, 1, 1, false, rng));
    net.add("5", std::make_unique<GroupNorm>(3, 6));
    net.add("6", std::make_unique<ReLU>());
    net.add("7", std::make_unique<GlobalAvgPool>());
    net.add("8", std::make_unique<Linear>(6, 5, true, rng));
    gradcheck(net, Tensor::randn({4, 3, 8, 8}, rng), Mode::kTrain, 24, 5e-4);

    auto names = param_names(net);
    CHECK(names.front() == "0.weight");
    CHECK(names.back() == "8.bias");
  }

  TEST_CASE("walk_layers yields dotted paths, parents first") {
    Rng rng(71);
    auto inner = std::make_unique<Sequential>();
    inner->add("0", std::make_unique<ReLU>());
    inner->add("1", std::make_unique<Gelu>());
    Sequential outer;
    outer.add("body", std::move(inner));
    outer.add("head", std::make_unique<Linear>(3, 2, true, rng));

    std::vector<std::string> seen;
    walk_layers(outer, [&](const std::string& name, Layer& l) {
      seen.push_back(name + ":" + l.kind());
    });
    const std::vector<std::string> want = {":sequential", "body:sequential", "body.0:relu",
                                           "body.1:gelu", "head:linear"};
    CHECK(seen == want);
  }

  TEST_CASE("tap records the penultimate activation") {
    Rng rng(72);
    Sequential net;
    net.add("0", std::make_unique<Linear>(4, 3, true, rng));
    auto* tap = static_cast<Tap*>(net.add("1", std::make_unique<Tap>()));
    net.add("2", std::make_unique<Linear>(3, 2, true, rng));

    Tap fresh;
    CHECK_THROWS_AS(fresh.last(), ValidationError);

    Tensor x = Tensor::randn({5, 4}, rng);
    net.forward(x, Mode::kEval);
    CHECK(tap->last().dims() == std::vector<Index>{5, 3});

    // The tap is transparent to both passes.
    Tensor y1 = net.forward(x, Mode::kEval);
    Tensor dy({5, 2}, 1.0f);
    Tensor dx = net.backward(dy);
    CHECK(dx.dims() == x.dims());
  }
}

TEST_SUITE("loss") {
  TEST_CASE("uniform logits give ln(K) and centered gradient") {
    Tensor logits({4, 5}, 0.0f);
    std::vector<int> labels = {0, 1, 2, 3};
    auto res = softmax_cross_entropy(logits, labels);
    CHECK(res.loss == doctest::Approx(std::log(5.0)).epsilon(1e-9));
    // d/dlogit = (1/K - onehot)/N
    for (Index r = 0; r < 4; ++r)
      for (Index j = 0; j < 5; ++j) {
        const double want = (0.2 - (j == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0)) / 4.0;
        CHECK(res.dlogits[r * 5 + j] == doctest::Approx(want).epsilon(1e-5));
      }
  }

  TEST_CASE("loss gradient matches finite differences") {
    Rng rng(81);
    Tensor logits = Tensor::randn({3, 5}, rng);
    std::vector<int> labels = {4, 0, 2};
    auto res = softmax_cross_entropy(logits, labels);
    const double h = 1e-3;
    for (Index i = 0; i < logits.size(); ++i) {
      const float orig = logits[i];
      logits[i] = orig + static_cast<float>(h);
      const double lp = softmax_cross_entropy(logits, labels).loss;
      logits[i] = orig - static_cast<float>(h);
      const double lm = softmax_cross_entropy(logits, labels).loss;
      logits[i] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      CHECK(std::abs(numeric - res.dlogits[i]) < 1e-4);
    }
  }

  TEST_CASE("predictions take the row argmax with first-wins ties") {
    Tensor logits({2, 3}, 0.0f);
    logits[1] = 5.0f;               // row 0 -> class 1
    logits[3] = 2.0f; logits[5] = 2.0f;  // row 1 tie between 0 and 2 -> 0
    auto res = softmax_cross_entropy(logits, {1, 0});
    CHECK(res.predicted == std::vector<int>{1, 0});
  }

  TEST_CASE("confident correct logits drive loss toward zero") {
    Tensor logits({1, 5}, 0.0f);
    logits[2] = 30.0f;
    auto res = softmax_cross_entropy(logits, {2});
    CHECK(res.loss < 1e-9);
  }

  TEST_CASE("class weights follow the weighted-mean convention") {
    Rng rng(82);
    Tensor logits = Tensor::randn({4, 3}, rng);
    std::vector<int> labels = {0, 1, 2, 1};
    std::vector<double> w = {1.0, 2.0, 0.5};
    auto weighted = softmax_cross_entropy(logits, labels, w);

    // Oracle: weighted mean of the individual unweighted losses.
    double num = 0.0, den = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      Tensor row({1, 3});
      for (Index j = 0; j < 3; ++j) row[j] = logits[static_cast<Index>(r) * 3 + j];
      const double li = softmax_cross_entropy(row, {labels[r]}).loss;
      num += w[static_cast<std::size_t>(labels[r])] * li;
      den += w[static_cast<std::size_t>(labels[r])];
    }
    CHECK(weighted.loss == doctest::Approx(num / den).epsilon(1e-9));
  }

  TEST_CASE("loss input validation") {
    Tensor logits({2, 3}, 0.0f);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0}), ValidationError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 3}), ValidationError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 1}, {1.0}), ValidationError);
  }
}

TEST_SUITE("optimizer") {
  TEST_CASE("first Adam step has magnitude ~lr, independent of grad scale") {
    Rng rng(91);
    Linear lin(1, 1, false, rng);
    lin.weight.value[0] = 1.0f;
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    lin.weight.grad[0] = 0.37f;  // arbitrary positive gradient
    opt.step(lin, 0.01);
    // mhat = g, vhat = g^2 -> step = lr * g/(|g| + eps) ~ lr
    CHECK(lin.weight.value[0] == doctest::Approx(1.0f - 0.01f).epsilon(1e-4));
  }

  TEST_CASE("zero gradient leaves only decoupled weight decay") {
    Rng rng(92);
    Linear lin(1, 1, false, rng);
    lin.weight.value[0] = 2.0f;
    AdamW opt;  // wd = 0.005
    const double lr = 0.1;
    for (int t = 0; t < 5; ++t) {
      AdamW::zero_grad(lin);
      opt.step(lin, lr);
    }
    const double want = 2.0 * std::pow(1.0 - lr * 0.005, 5);
    CHECK(lin.weight.value[0] == doctest::Approx(want).epsilon(1e-6));
  }

  TEST_CASE("non-trainable parameters are never touched") {
    Rng rng(93);
    Linear lin(3, 2, true, rng);
    lin.bias.trainable = false;
    Tensor bias0 = lin.bias.value;
    for (int t = 0; t < 3; ++t) {
      AdamW::zero_grad(lin);
      lin.weight.grad.flat().setConstant(0.5f);
      lin.bias.grad.flat().setConstant(0.5f);
      AdamW opt;
      opt.step(lin, 0.01);
    }
    CHECK((lin.bias.value.flat() == bias0.flat()).all());
  }

  TEST_CASE("optimizer drives a least-squares problem down") {
    Rng rng(94);
    Linear lin(4, 1, true, rng);
    Tensor x = Tensor::randn({16, 4}, rng);
    // Target: y = sum of inputs.
    std::vector<float> target(16);
    for (Index r = 0; r < 16; ++r) {
      float s = 0.0f;
      for (Index j = 0; j < 4; ++j) s += x[r * 4 + j];
      target[static_cast<std::size_t>(r)] = s;
    }
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    double first_loss = -1.0, last_loss = -1.0;
    for (int it = 0; it < 400; ++it) {
      AdamW::zero_grad(lin);
      Tensor y = lin.forward(x, Mode::kTrain);
      Tensor dy({16, 1});
      double loss = 0.0;
      for (Index r = 0; r < 16; ++r) {
        const float err = y[r] - target[static_cast<std::size_t>(r)];
        loss += 0.5 * err * err / 16.0;
        dy[r] = err / 16.0f;
      }
      if (it == 0) first_loss = loss;
      last_loss = loss;
      lin.backward(dy);
      opt.step(lin, 0.05);
    }
    CHECK(last_loss < 1e-3);
    CHECK(last_loss < first_loss / 100.0);
  }

  TEST_CASE("moment state is keyed by name and step count advances") {
    Rng rng(95);
    Linear lin(2, 2, true, rng);
    AdamW opt;
    CHECK(opt.steps() == 0);
    lin.weight.grad.flat().setConstant(1.0f);
    opt.step(lin, 0.001);
    opt.step(lin, 0.001);
    CHECK(opt.steps() == 2);
    CHECK_THROWS_AS(opt.step(lin, -1.0), ValidationError);
  }
}
