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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wbc/analysis/tsne.hpp"
#include "wbc/data/image.hpp"
#include "wbc/eval/evaluator.hpp"

namespace wbc::analysis {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// The five-color class palette used across every figure, indexed by class
// code (lymphocyte, monocyte, neutrophil, eosinophil, basophil).
extern const std::array<Rgb, 5> kClassPalette;
Rgb class_color(data::WbcClass c);

inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kGray{190, 190, 190};

enum class Marker { kCircle, kTriangle, kSquare, kDiamond, kCross };

// Marker for the k-th dataset in a figure (cycles after five).
Marker dataset_marker(std::size_t dataset_index);

// A drawing surface writing every primitive to both an RGB raster (saved as
// PNG) and an SVG element list. Coordinates are pixels, y growing downward.
// Text renders from a built-in 5x7 bitmap font in the raster and as <text>
// in the SVG; both backends produce byte-identical files for equal inputs.
class Figure {
 public:
  Figure(int width, int height);

  void line(double x1, double y1, double x2, double y2, Rgb color, double width = 1.0);
  void rect(double x, double y, double w, double h, Rgb fill);
  void rect_outline(double x, double y, double w, double h, Rgb color, double width = 1.0);
  void circle(double cx, double cy, double r, Rgb fill);
  void polygon(const std::vector<std::pair<double, double>>& points, Rgb fill);
  void marker(double cx, double cy, Marker shape, Rgb color, double size = 4.0);

  // (x, y) is the top-left corner of the rendered string.
  void text(double x, double y, const std::string& s, Rgb color, int scale = 1);
  void text_centered(double cx, double y, const std::string& s, Rgb color, int scale = 1);
  static double text_width(const std::string& s, int scale = 1);
  static double text_height(int scale = 1);

  void save_svg(const std::filesystem::path& path) const;
  void save_png(const std::filesystem::path& path) const;
  // Writes <base>.svg and <base>.png.
  void save(const std::filesystem::path& base) const;

  int width() const { return width_; }
  int height() const { return height_; }

 private:
  void raster_fill(int x0, int y0, int x1, int y1, Rgb color);  // clipped box fill
  void raster_glyph(int x, int y, char c, Rgb color, int scale);

  int width_;
  int height_;
  data::Image raster_;
  std::vector<std::string> svg_;
};

// Scatter of a 2D embedding: marker encodes the dataset, color the class,
// with a legend for both. Writes <base>.svg and <base>.png.
void render_tsne_scatter(const EmbeddingSet& embedding, const std::filesystem::path& base);

// Per-variant box plot (median, quartile box, min/max whiskers) of one
// dataset's accuracies with every run overlaid as a dot.
void render_box_plot(const std::map<std::string, std::vector<double>>& accuracies_by_variant,
                     const std::string& dataset_tag, const std::filesystem::path& base);

// Grouped bar chart of the comparison table: one group per variant, one bar
// per dataset, error bars where the CI is defined.
void render_grouped_bars(const eval::ComparisonTable& table, const std::filesystem::path& base);

// 5x5 confusion heatmap with exact counts in every cell, shaded by the
// row-normalized rate.
void render_confusion_heatmap(const eval::EvalResult& result, const std::filesystem::path& base);

}  // namespace wbc::analysis
