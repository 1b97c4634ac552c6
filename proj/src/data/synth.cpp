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

#include "wbc/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wbc/core/error.hpp"

namespace fs = std::filesystem;

namespace wbc::data {

namespace {

struct Rgb {
  float r, g, b;
};

// Antialiased coverage of a disk at distance d from its edge.
float disk_coverage(float dist_to_center, float radius) {
  const float aa = 1.2f;  // edge softness in pixels
  const float t = (radius - dist_to_center) / aa + 0.5f;
  return std::clamp(t, 0.0f, 1.0f);
}

void blend(Rgb& dst, const Rgb& src, float alpha) {
  dst.r += (src.r - dst.r) * alpha;
  dst.g += (src.g - dst.g) * alpha;
  dst.b += (src.b - dst.b) * alpha;
}

struct Disk {
  float cx, cy, radius;
  Rgb color;
};

// Giemsa-like palette.
constexpr Rgb kBackground = {0.88f, 0.82f, 0.86f};
constexpr Rgb kNucleus = {0.38f, 0.22f, 0.52f};
constexpr Rgb kEosGranule = {0.90f, 0.35f, 0.25f};
constexpr Rgb kBasoGranule = {0.25f, 0.12f, 0.40f};

Rgb cytoplasm_color(WbcClass cls) {
  switch (cls) {
    case WbcClass::kLymphocyte: return {0.70f, 0.72f, 0.90f};
    case WbcClass::kMonocyte: return {0.78f, 0.76f, 0.88f};
    case WbcClass::kNeutrophil: return {0.85f, 0.78f, 0.82f};
    case WbcClass::kEosinophil: return {0.86f, 0.77f, 0.75f};
    case WbcClass::kBasophil: return {0.76f, 0.70f, 0.86f};
  }
  throw ValidationError("cytoplasm_color: invalid class");
}

}  // namespace

Image render_synth_cell(int size, WbcClass cls, Rng& rng, const ShiftParams* shift) {
  const float s = static_cast<float>(size);
  const float jitter = 0.08f * s;
  const float cx = 0.5f * s + static_cast<float>(rng.uniform(-jitter, jitter));
  const float cy = 0.5f * s + static_cast<float>(rng.uniform(-jitter, jitter));

  auto color_jitter = [&](Rgb c, float amount) {
    c.r += static_cast<float>(rng.uniform(-amount, amount));
    c.g += static_cast<float>(rng.uniform(-amount, amount));
    c.b += static_cast<float>(rng.uniform(-amount, amount));
    return c;
  };

  float cell_radius = 0.0f;
  std::vector<Disk> nucleus, granules, bites;
  const Rgb nucleus_color = color_jitter(kNucleus, 0.03f);

  switch (cls) {
    case WbcClass::kLymphocyte: {
      cell_radius = s * static_cast<float>(rng.uniform(0.28, 0.34));
      const float nr = 0.82f * cell_radius;
      const float off = 0.06f * cell_radius;
      nucleus.push_back({cx + static_cast<float>(rng.uniform(-off, off)),
                         cy + static_cast<float>(rng.uniform(-off, off)), nr, nucleus_color});
      break;
    }
    case WbcClass::kMonocyte: {
      cell_radius = s * static_cast<float>(rng.uniform(0.36, 0.42));
      const float nr = 0.72f * cell_radius;
      nucleus.push_back({cx, cy, nr, nucleus_color});
      const float angle = static_cast<float>(rng.uniform(0.0, 6.283185307179586));
      bites.push_back({cx + 0.62f * nr * std::cos(angle), cy + 0.62f * nr * std::sin(angle),
                       0.55f * nr, {0, 0, 0}});
      break;
    }
    case WbcClass::kNeutrophil: {
      cell_radius = s * static_cast<float>(rng.uniform(0.32, 0.38));
      const int lobes = 3 + static_cast<int>(rng.uniform_int(3));
      const float base = static_cast<float>(rng.uniform(0.0, 6.283185307179586));
      for (int l = 0; l < lobes; ++l) {
        const float angle = base + 6.2831853f * static_cast<float>(l) / static_cast<float>(lobes) +
                            static_cast<float>(rng.uniform(-0.3, 0.3));
        const float d = 0.45f * cell_radius * static_cast<float>(rng.uniform(0.8, 1.1));
        nucleus.push_back({cx + d * std::cos(angle), cy + d * std::sin(angle),
                           0.30f * cell_radius * static_cast<float>(rng.uniform(0.9, 1.15)),
                           nucleus_color});
      }
      break;
    }
    case WbcClass::kEosinophil: {
      cell_radius = s * static_cast<float>(rng.uniform(0.32, 0.38));
      const float angle = static_cast<float>(rng.uniform(0.0, 6.283185307179586));
      for (int l = 0; l < 2; ++l) {
        const float a = angle + 3.14159265f * static_cast<float>(l) +
                        static_cast<float>(rng.uniform(-0.25, 0.25));
        const float d = 0.45f * cell_radius;
        nucleus.push_back({cx + d * std::cos(a), cy + d * std::sin(a), 0.38f * cell_radius,
                           nucleus_color});
      }
      const int count = 50 + static_cast<int>(rng.uniform_int(20));
      const Rgb gc = color_jitter(kEosGranule, 0.04f);
      for (int i = 0; i < count; ++i) {
        const float a = static_cast<float>(rng.uniform(0.0, 6.283185307179586));
        const float d = cell_radius * 0.92f * std::sqrt(static_cast<float>(rng.uniform(0.0, 1.0)));
        granules.push_back({cx + d * std::cos(a), cy + d * std::sin(a),
                            cell_radius * static_cast<float>(rng.uniform(0.06, 0.09)), gc});
      }
      break;
    }
    case WbcClass::kBasophil: {
      cell_radius = s * static_cast<float>(rng.uniform(0.30, 0.36));
      nucleus.push_back({cx, cy, 0.60f * cell_radius, nucleus_color});
      const int count = 80 + static_cast<int>(rng.uniform_int(25));
      const Rgb gc = color_jitter(kBasoGranule, 0.04f);
      for (int i = 0; i < count; ++i) {
        const float a = static_cast<float>(rng.uniform(0.0, 6.283185307179586));
        const float d = cell_radius * 0.95f * std::sqrt(static_cast<float>(rng.uniform(0.0, 1.0)));
        granules.push_back({cx + d * std::cos(a), cy + d * std::sin(a),
                            cell_radius * static_cast<float>(rng.uniform(0.07, 0.11)), gc});
      }
      break;
    }
  }

  Rgb background = kBackground;
  Rgb cytoplasm = color_jitter(cytoplasm_color(cls), 0.03f);
  if (shift) {
    background.r += shift->background_tint[0];
    background.g += shift->background_tint[1];
    background.b += shift->background_tint[2];
  }

  // Pre-draw per-pixel noise so the draw count is identical with and without
  // granule overdraw decisions (it is: all geometry is already fixed above).
  std::vector<float> noise(static_cast<std::size_t>(size) * size * 3);
  for (auto& n : noise) n = static_cast<float>(rng.normal(0.0, 0.02));

  Image img;
  img.width = size;
  img.height = size;
  img.pixels.resize(static_cast<std::size_t>(size) * size * 3);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float px = static_cast<float>(x) + 0.5f;
      const float py = static_cast<float>(y) + 0.5f;
      const float dc = std::hypot(px - cx, py - cy);

      Rgb color = background;
      blend(color, cytoplasm, disk_coverage(dc, cell_radius));

      if (cls == WbcClass::kBasophil) {
        // Nucleus first, granules on top (granules obscure the nucleus).
        for (const auto& dsk : nucleus)
          blend(color, dsk.color, disk_coverage(std::hypot(px - dsk.cx, py - dsk.cy), dsk.radius));
        for (const auto& dsk : granules)
          blend(color, dsk.color, disk_coverage(std::hypot(px - dsk.cx, py - dsk.cy), dsk.radius));
      } else {
        for (const auto& dsk : granules)
          blend(color, dsk.color, disk_coverage(std::hypot(px - dsk.cx, py - dsk.cy), dsk.radius));
        for (const auto& dsk : nucleus) {
          float cov = disk_coverage(std::hypot(px - dsk.cx, py - dsk.cy), dsk.radius);
          for (const auto& bite : bites)
            cov *= 1.0f - disk_coverage(std::hypot(px - bite.cx, py - bite.cy), bite.radius);
          blend(color, dsk.color, cov);
        }
      }

      const std::size_t k = (static_cast<std::size_t>(y) * size + x) * 3;
      float rgb[3] = {color.r + noise[k], color.g + noise[k + 1], color.b + noise[k + 2]};
      if (shift) {
        for (int c = 0; c < 3; ++c)
          rgb[c] = rgb[c] * shift->channel_scale[c] + shift->channel_offset[c];
      }
      for (int c = 0; c < 3; ++c) {
        const float q = std::clamp(rgb[c], 0.0f, 1.0f) * 255.0f + 0.5f;
        img.pixels[k + c] = static_cast<std::uint8_t>(q);
      }
    }
  }
  return img;
}

namespace {

std::string synth_fingerprint(const SynthConfig& cfg) {
  nlohmann::ordered_json j;
  j["n_per_class_train"] = cfg.n_per_class_train;
  j["n_per_class_test"] = cfg.n_per_class_test;
  j["image_size"] = cfg.image_size;
  j["seed"] = cfg.seed;
  j["channel_scale"] = cfg.shift_params.channel_scale;
  j["channel_offset"] = cfg.shift_params.channel_offset;
  j["background_tint"] = cfg.shift_params.background_tint;
  return j.dump(2) + "\n";
}

std::string class_dir(WbcClass c) {
  std::string name(class_name(c));
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return name;
}

std::string sample_rel_path(const char* split, WbcClass c, std::int64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "img_%05lld.png", static_cast<long long>(index));
  return std::string(split) + "/" + class_dir(c) + "/" + buf;
}

}  // namespace

SynthManifests make_synthetic_domain_pair(const SynthConfig& cfg) {
  cfg.validate();
  const fs::path fingerprint_path = cfg.cache_dir / "synth_config.json";
  const std::string fingerprint = synth_fingerprint(cfg);

  bool render = true;
  {
    std::ifstream in(fingerprint_path, std::ios::binary);
    if (in) {
      std::string existing((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
      render = existing != fingerprint;
    }
  }

  // Stream ids: (split kind, class, sample index). The shifted test domain
  // reuses the test stream so each pair shares geometry exactly.
  constexpr std::uint64_t kTrainKind = 0, kTestKind = 1;

  SynthManifests out;
  out.train.root = cfg.cache_dir;
  out.test_source.root = cfg.cache_dir;
  out.test_shifted.root = cfg.cache_dir;

  for (WbcClass c : kAllClasses) {
    if (render) {
      fs::create_directories(cfg.cache_dir / "train" / class_dir(c));
      fs::create_directories(cfg.cache_dir / "test_source" / class_dir(c));
      fs::create_directories(cfg.cache_dir / "test_shifted" / class_dir(c));
    }
    const auto code = static_cast<std::uint64_t>(c);
    for (std::int64_t i = 0; i < cfg.n_per_class_train; ++i) {
      const std::string rel = sample_rel_path("train", c, i);
      if (render) {
        auto rng = Rng::stream(cfg.seed, {kTrainKind, code, static_cast<std::uint64_t>(i)});
        encode_png(render_synth_cell(cfg.image_size, c, rng, nullptr), cfg.cache_dir / rel);
      }
      out.train.records.push_back({rel, c, DatasetId::kSynthSource});
    }
    for (std::int64_t i = 0; i < cfg.n_per_class_test; ++i) {
      const std::string rel_src = sample_rel_path("test_source", c, i);
      const std::string rel_shift = sample_rel_path("test_shifted", c, i);
      if (render) {
        auto rng_src = Rng::stream(cfg.seed, {kTestKind, code, static_cast<std::uint64_t>(i)});
        encode_png(render_synth_cell(cfg.image_size, c, rng_src, nullptr),
                   cfg.cache_dir / rel_src);
        auto rng_shift = Rng::stream(cfg.seed, {kTestKind, code, static_cast<std::uint64_t>(i)});
        encode_png(render_synth_cell(cfg.image_size, c, rng_shift, &cfg.shift_params),
                   cfg.cache_dir / rel_shift);
      }
      out.test_source.records.push_back({rel_src, c, DatasetId::kSynthSource});
      out.test_shifted.records.push_back({rel_shift, c, DatasetId::kSynthShifted});
    }
  }

  auto by_path = [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; };
  std::sort(out.train.records.begin(), out.train.records.end(), by_path);
  std::sort(out.test_source.records.begin(), out.test_source.records.end(), by_path);
  std::sort(out.test_shifted.records.begin(), out.test_shifted.records.end(), by_path);
  out.train.finalize();
  out.test_source.finalize();
  out.test_shifted.finalize();

  if (render) {
    std::ofstream fp(fingerprint_path, std::ios::binary);
    if (!fp) throw IoError("cannot write " + fingerprint_path.string());
    fp << fingerprint;
  }
  return out;
}

}  // namespace wbc::data
