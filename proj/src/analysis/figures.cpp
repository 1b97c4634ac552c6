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

#include "wbc/analysis/figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "wbc/core/error.hpp"
#include "wbc/zoo/spec.hpp"

namespace wbc::analysis {

namespace {

std::string fmt(double v, int decimals = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string hex_color(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

Rgb blend(Rgb a, Rgb b, double t) {
  auto mix = [t](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround((1.0 - t) * x + t * y));
  };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

// 5x7 glyphs, one byte per row, bit 4 = leftmost column. Lowercase maps to
// uppercase; anything else renders as a hollow box.
const std::array<std::uint8_t, 7>* glyph_for(char c) {
  static const std::map<char, std::array<std::uint8_t, 7>> table = {
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x06, 0x08, 0x10, 0x1F}},
      {'3', {0x0E, 0x11, 0x01, 0x06, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0E, 0x11, 0x10, 0x0E, 0x01, 0x11, 0x0E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'\'', {0x0C, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00}},
      {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
  };
  static const std::array<std::uint8_t, 7> box = {0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F};
  const char upper = (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c;
  const auto it = table.find(upper);
  return it == table.end() ? &box : &it->second;
}

constexpr int kGlyphAdvance = 6;  // 5 columns + 1 column of spacing, in font units
constexpr int kGlyphHeight = 7;

// Axis ticks at a "nice" step covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / std::max(1, target);
  const double magnitude = std::pow(10.0, std::floor(std::log10(raw)));
  const double normalized = raw / magnitude;
  double step = 10.0;
  if (normalized < 1.5)
    step = 1.0;
  else if (normalized < 3.0)
    step = 2.0;
  else if (normalized < 7.0)
    step = 5.0;
  step *= magnitude;
  std::vector<double> ticks;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9; v += step)
    ticks.push_back(std::fabs(v) < step * 1e-9 ? 0.0 : v);
  return ticks;
}

// Type-7 (linear interpolation) quantile of a sorted list.
double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of an empty list");
  if (sorted.size() == 1) return sorted[0];
  const double h = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - std::floor(h);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Orders variant ids by their position in the published table, with unknown
// ids after, lexicographically.
std::vector<std::string> ordered_variant_keys(const std::vector<std::string>& keys) {
  const std::vector<std::string> known = zoo::known_variants();
  std::vector<std::string> sorted = keys;
  auto rank = [&known](const std::string& id) {
    for (std::size_t i = 0; i < known.size(); ++i)
      if (known[i] == id) return i;
    return known.size();
  };
  std::sort(sorted.begin(), sorted.end(), [&](const std::string& a, const std::string& b) {
    const std::size_t ra = rank(a), rb = rank(b);
    return ra != rb ? ra < rb : a < b;
  });
  return sorted;
}

std::string to_upper(std::string s) {
  for (char& c : s)
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  return s;
}

}  // namespace

const std::array<Rgb, 5> kClassPalette = {{
    {31, 119, 180},   // lymphocyte
    {255, 127, 14},   // monocyte
    {44, 160, 44},    // neutrophil
    {214, 39, 40},    // eosinophil
    {148, 103, 189},  // basophil
}};

Rgb class_color(data::WbcClass c) { return kClassPalette[static_cast<std::size_t>(c) % 5]; }

Marker dataset_marker(std::size_t dataset_index) {
  switch (dataset_index % 5) {
    case 0: return Marker::kCircle;
    case 1: return Marker::kTriangle;
    case 2: return Marker::kSquare;
    case 3: return Marker::kDiamond;
    default: return Marker::kCross;
  }
}

Figure::Figure(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw ValidationError("Figure: dimensions must be positive");
  raster_.width = width;
  raster_.height = height;
  raster_.pixels.assign(static_cast<std::size_t>(width) * height * 3, 255);
  svg_.push_back("<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
                 std::to_string(height) + "\" fill=\"#ffffff\"/>");
}

void Figure::raster_fill(int x0, int y0, int x1, int y1, Rgb color) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, width_);
  y1 = std::min(y1, height_);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      raster_.at(y, x, 0) = color.r;
      raster_.at(y, x, 1) = color.g;
      raster_.at(y, x, 2) = color.b;
    }
  }
}

void Figure::line(double x1, double y1, double x2, double y2, Rgb color, double width) {
  svg_.push_back("<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) +
                 "\" y2=\"" + fmt(y2) + "\" stroke=\"" + hex_color(color) + "\" stroke-width=\"" +
                 fmt(width, 1) + "\"/>");

  const double half = std::max(width, 1.0) / 2.0;
  const int x_lo = static_cast<int>(std::floor(std::min(x1, x2) - half - 1));
  const int x_hi = static_cast<int>(std::ceil(std::max(x1, x2) + half + 1));
  const int y_lo = static_cast<int>(std::floor(std::min(y1, y2) - half - 1));
  const int y_hi = static_cast<int>(std::ceil(std::max(y1, y2) + half + 1));
  const double dx = x2 - x1, dy = y2 - y1;
  const double len_sq = dx * dx + dy * dy;
  for (int py = std::max(0, y_lo); py < std::min(height_, y_hi); ++py) {
    for (int px = std::max(0, x_lo); px < std::min(width_, x_hi); ++px) {
      const double cx = px + 0.5, cy = py + 0.5;
      double t = len_sq > 0.0 ? ((cx - x1) * dx + (cy - y1) * dy) / len_sq : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = x1 + t * dx - cx, ey = y1 + t * dy - cy;
      if (ex * ex + ey * ey <= half * half) {
        raster_.at(py, px, 0) = color.r;
        raster_.at(py, px, 1) = color.g;
        raster_.at(py, px, 2) = color.b;
      }
    }
  }
}

void Figure::rect(double x, double y, double w, double h, Rgb fill) {
  svg_.push_back("<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) +
                 "\" height=\"" + fmt(h) + "\" fill=\"" + hex_color(fill) + "\"/>");
  raster_fill(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)),
              static_cast<int>(std::lround(x + w)), static_cast<int>(std::lround(y + h)), fill);
}

void Figure::rect_outline(double x, double y, double w, double h, Rgb color, double width) {
  svg_.push_back("<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) +
                 "\" height=\"" + fmt(h) + "\" fill=\"none\" stroke=\"" + hex_color(color) +
                 "\" stroke-width=\"" + fmt(width, 1) + "\"/>");
  // Four raster edges, drawn directly so the svg list gains no extra lines.
  const double half = std::max(width, 1.0) / 2.0;
  auto edge = [&](double ex1, double ey1, double ex2, double ey2) {
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(ex1, ex2) - half)));
    const int x_hi = std::min(width_, static_cast<int>(std::ceil(std::max(ex1, ex2) + half)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(ey1, ey2) - half)));
    const int y_hi = std::min(height_, static_cast<int>(std::ceil(std::max(ey1, ey2) + half)));
    const double dx = ex2 - ex1, dy = ey2 - ey1;
    const double len_sq = dx * dx + dy * dy;
    for (int py = y_lo; py < y_hi; ++py) {
      for (int px = x_lo; px < x_hi; ++px) {
        const double cx = px + 0.5, cy = py + 0.5;
        double t = len_sq > 0.0 ? ((cx - ex1) * dx + (cy - ey1) * dy) / len_sq : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double exd = ex1 + t * dx - cx, eyd = ey1 + t * dy - cy;
        if (exd * exd + eyd * eyd <= half * half) {
          raster_.at(py, px, 0) = color.r;
          raster_.at(py, px, 1) = color.g;
          raster_.at(py, px, 2) = color.b;
        }
      }
    }
  };
  edge(x, y, x + w, y);
  edge(x + w, y, x + w, y + h);
  edge(x + w, y + h, x, y + h);
  edge(x, y + h, x, y);
}

void Figure::circle(double cx, double cy, double r, Rgb fill) {
  svg_.push_back("<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" + fmt(r) +
                 "\" fill=\"" + hex_color(fill) + "\"/>");
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
  const int x_hi = std::min(width_, static_cast<int>(std::ceil(cx + r + 1)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
  const int y_hi = std::min(height_, static_cast<int>(std::ceil(cy + r + 1)));
  for (int py = y_lo; py < y_hi; ++py) {
    for (int px = x_lo; px < x_hi; ++px) {
      const double ex = px + 0.5 - cx, ey = py + 0.5 - cy;
      if (ex * ex + ey * ey <= r * r) {
        raster_.at(py, px, 0) = fill.r;
        raster_.at(py, px, 1) = fill.g;
        raster_.at(py, px, 2) = fill.b;
      }
    }
  }
}

void Figure::polygon(const std::vector<std::pair<double, double>>& points, Rgb fill) {
  if (points.size() < 3) throw ValidationError("Figure::polygon: needs at least 3 points");
  std::string svg_points;
  for (const auto& [x, y] : points) {
    if (!svg_points.empty()) svg_points += ' ';
    svg_points += fmt(x) + "," + fmt(y);
  }
  svg_.push_back("<polygon points=\"" + svg_points + "\" fill=\"" + hex_color(fill) + "\"/>");

  double min_x = points[0].first, max_x = points[0].first;
  double min_y = points[0].second, max_y = points[0].second;
  for (const auto& [x, y] : points) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  const int x_lo = std::max(0, static_cast<int>(std::floor(min_x)));
  const int x_hi = std::min(width_, static_cast<int>(std::ceil(max_x)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(min_y)));
  const int y_hi = std::min(height_, static_cast<int>(std::ceil(max_y)));
  for (int py = y_lo; py < y_hi; ++py) {
    for (int px = x_lo; px < x_hi; ++px) {
      const double cx = px + 0.5, cy = py + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = points.size() - 1; i < points.size(); j = i++) {
        const auto& [xi, yi] = points[i];
        const auto& [xj, yj] = points[j];
        if ((yi > cy) != (yj > cy) && cx < (xj - xi) * (cy - yi) / (yj - yi) + xi) inside = !inside;
      }
      if (inside) {
        raster_.at(py, px, 0) = fill.r;
        raster_.at(py, px, 1) = fill.g;
        raster_.at(py, px, 2) = fill.b;
      }
    }
  }
}

void Figure::marker(double cx, double cy, Marker shape, Rgb color, double size) {
  switch (shape) {
    case Marker::kCircle:
      circle(cx, cy, size, color);
      break;
    case Marker::kTriangle:
      polygon({{cx, cy - size * 1.2}, {cx - size * 1.1, cy + size * 0.9},
               {cx + size * 1.1, cy + size * 0.9}},
              color);
      break;
    case Marker::kSquare:
      rect(cx - size * 0.9, cy - size * 0.9, size * 1.8, size * 1.8, color);
      break;
    case Marker::kDiamond:
      polygon({{cx, cy - size * 1.25},
               {cx + size * 1.25, cy},
               {cx, cy + size * 1.25},
               {cx - size * 1.25, cy}},
              color);
      break;
    case Marker::kCross:
      line(cx - size, cy - size, cx + size, cy + size, color, 1.6);
      line(cx - size, cy + size, cx + size, cy - size, color, 1.6);
      break;
  }
}

double Figure::text_width(const std::string& s, int scale) {
  if (s.empty()) return 0.0;
  return static_cast<double>(s.size() * kGlyphAdvance * scale - scale);
}

double Figure::text_height(int scale) { return static_cast<double>(kGlyphHeight * scale); }

void Figure::raster_glyph(int x, int y, char c, Rgb color, int scale) {
  const auto* rows = glyph_for(c);
  for (int row = 0; row < kGlyphHeight; ++row) {
    const std::uint8_t bits = (*rows)[static_cast<std::size_t>(row)];
    for (int col = 0; col < 5; ++col) {
      if (!(bits & (0x10 >> col))) continue;
      raster_fill(x + col * scale, y + row * scale, x + (col + 1) * scale, y + (row + 1) * scale,
                  color);
    }
  }
}

void Figure::text(double x, double y, const std::string& s, Rgb color, int scale) {
  const int font_px = 10 * scale;
  svg_.push_back("<text x=\"" + fmt(x) + "\" y=\"" + fmt(y + kGlyphHeight * scale) +
                 "\" font-family=\"monospace\" font-size=\"" + std::to_string(font_px) +
                 "\" textLength=\"" + fmt(text_width(s, scale)) +
                 "\" lengthAdjust=\"spacingAndGlyphs\" fill=\"" + hex_color(color) + "\">" +
                 escape_xml(s) + "</text>");
  int cursor = static_cast<int>(std::lround(x));
  const int top = static_cast<int>(std::lround(y));
  for (char c : s) {
    raster_glyph(cursor, top, c, color, scale);
    cursor += kGlyphAdvance * scale;
  }
}

void Figure::text_centered(double cx, double y, const std::string& s, Rgb color, int scale) {
  text(cx - text_width(s, scale) / 2.0, y, s, color, scale);
}

void Figure::save_svg(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
      << height_ << "\" viewBox=\"0 0 " << width_ << " " << height_ << "\">\n";
  for (const std::string& element : svg_) out << "  " << element << "\n";
  out << "</svg>\n";
  if (!out) throw IoError("short write to " + path.string());
}

void Figure::save_png(const std::filesystem::path& path) const { data::encode_png(raster_, path); }

void Figure::save(const std::filesystem::path& base) const {
  std::filesystem::path svg_path = base;
  svg_path += ".svg";
  std::filesystem::path png_path = base;
  png_path += ".png";
  save_svg(svg_path);
  save_png(png_path);
}

// ---------------------------------------------------------------------------
// t-SNE scatter

void render_tsne_scatter(const EmbeddingSet& embedding, const std::filesystem::path& base) {
  embedding.validate();
  const Index n = embedding.coords.dim(0);
  if (n == 0) throw ValidationError("render_tsne_scatter: empty embedding");

  Figure fig(660, 640);
  const double plot_x = 40, plot_y = 48, plot_w = 430, plot_h = 552;

  double min_x = embedding.coords[0], max_x = min_x;
  double min_y = embedding.coords[1], max_y = min_y;
  for (Index i = 0; i < n; ++i) {
    min_x = std::min<double>(min_x, embedding.coords[i * 2]);
    max_x = std::max<double>(max_x, embedding.coords[i * 2]);
    min_y = std::min<double>(min_y, embedding.coords[i * 2 + 1]);
    max_y = std::max<double>(max_y, embedding.coords[i * 2 + 1]);
  }
  const double pad_x = std::max((max_x - min_x) * 0.05, 1e-9);
  const double pad_y = std::max((max_y - min_y) * 0.05, 1e-9);
  min_x -= pad_x;
  max_x += pad_x;
  min_y -= pad_y;
  max_y += pad_y;
  // One scale for both axes keeps embedding distances undistorted.
  const double scale = std::min(plot_w / (max_x - min_x), plot_h / (max_y - min_y));
  const double offset_x = plot_x + (plot_w - (max_x - min_x) * scale) / 2.0;
  const double offset_y = plot_y + (plot_h - (max_y - min_y) * scale) / 2.0;
  auto to_px = [&](double v) { return offset_x + (v - min_x) * scale; };
  auto to_py = [&](double v) { return offset_y + (max_y - v) * scale; };

  fig.rect_outline(plot_x + 0.5, plot_y + 0.5, plot_w, plot_h, kBlack, 1.0);

  std::string title = "T-SNE OF PENULTIMATE FEATURES";
  if (!embedding.spec.variant_id.empty())
    title += " (" + to_upper(embedding.spec.variant_id) + ")";
  fig.text_centered(plot_x + plot_w / 2.0, 16, title, kBlack, 2);

  // Dataset index by order of first appearance.
  std::vector<std::string> dataset_order;
  auto dataset_index = [&dataset_order](const std::string& tag) {
    for (std::size_t i = 0; i < dataset_order.size(); ++i)
      if (dataset_order[i] == tag) return i;
    dataset_order.push_back(tag);
    return dataset_order.size() - 1;
  };

  for (Index i = 0; i < n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const std::size_t ds = dataset_index(embedding.datasets[si]);
    fig.marker(to_px(embedding.coords[i * 2]), to_py(embedding.coords[i * 2 + 1]),
               dataset_marker(ds), class_color(embedding.labels[si]), 3.2);
  }

  // Legend: classes by color, datasets by marker.
  double legend_x = plot_x + plot_w + 16;
  double legend_y = plot_y + 8;
  fig.text(legend_x, legend_y, "CLASSES", kBlack, 1);
  legend_y += 16;
  for (int c = 0; c < data::kNumClasses; ++c) {
    const auto cls = static_cast<data::WbcClass>(c);
    fig.circle(legend_x + 5, legend_y + 4, 4, class_color(cls));
    fig.text(legend_x + 14, legend_y, std::string(data::class_name(cls)), kBlack, 1);
    legend_y += 14;
  }
  legend_y += 10;
  fig.text(legend_x, legend_y, "DATASETS", kBlack, 1);
  legend_y += 16;
  for (std::size_t d = 0; d < dataset_order.size(); ++d) {
    fig.marker(legend_x + 5, legend_y + 4, dataset_marker(d), kBlack, 3.2);
    fig.text(legend_x + 14, legend_y, dataset_order[d], kBlack, 1);
    legend_y += 14;
  }

  fig.save(base);
}

// ---------------------------------------------------------------------------
// Seed box plot

void render_box_plot(const std::map<std::string, std::vector<double>>& accuracies_by_variant,
                     const std::string& dataset_tag, const std::filesystem::path& base) {
  if (accuracies_by_variant.empty())
    throw ValidationError("render_box_plot: no variants to plot");
  for (const auto& [variant, values] : accuracies_by_variant)
    if (values.empty())
      throw ValidationError("render_box_plot: variant '" + variant + "' has no runs");

  Figure fig(640, 480);
  const double plot_x = 70, plot_y = 50, plot_w = 550, plot_h = 360;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& [variant, values] : accuracies_by_variant) {
    for (double v : values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = (hi - lo) * 0.08;
  lo -= pad;
  hi += pad;
  auto to_py = [&](double v) { return plot_y + plot_h * (hi - v) / (hi - lo); };

  fig.text_centered(plot_x + plot_w / 2.0, 14, "ACCURACY BY SEED: " + dataset_tag, kBlack, 2);
  fig.text(6, plot_y - 24, "ACCURACY (%)", kBlack, 1);

  for (double tick : nice_ticks(lo, hi)) {
    const double y = std::floor(to_py(tick)) + 0.5;
    fig.line(plot_x, y, plot_x + plot_w, y, kGray, 1.0);
    const std::string label = fmt_tick(tick);
    fig.text(plot_x - 8 - Figure::text_width(label), y - 3, label, kBlack, 1);
  }
  fig.rect_outline(plot_x + 0.5, plot_y + 0.5, plot_w, plot_h, kBlack, 1.0);

  std::vector<std::string> keys;
  for (const auto& [variant, values] : accuracies_by_variant) keys.push_back(variant);
  keys = ordered_variant_keys(keys);

  const double slot = plot_w / static_cast<double>(keys.size());
  const double box_half = std::min(30.0, slot * 0.3);
  const Rgb box_fill = blend(kWhite, kClassPalette[0], 0.35);

  for (std::size_t k = 0; k < keys.size(); ++k) {
    const std::vector<double>& raw = accuracies_by_variant.at(keys[k]);
    std::vector<double> values = raw;
    std::sort(values.begin(), values.end());
    const double v_min = values.front();
    const double v_max = values.back();
    const double q1 = quantile_sorted(values, 0.25);
    const double med = quantile_sorted(values, 0.50);
    const double q3 = quantile_sorted(values, 0.75);

    const double cx = plot_x + slot * (static_cast<double>(k) + 0.5);
    // Whiskers to the extremes, with caps.
    fig.line(cx, to_py(v_min), cx, to_py(q1), kBlack, 1.0);
    fig.line(cx, to_py(q3), cx, to_py(v_max), kBlack, 1.0);
    fig.line(cx - box_half * 0.6, to_py(v_min), cx + box_half * 0.6, to_py(v_min), kBlack, 1.0);
    fig.line(cx - box_half * 0.6, to_py(v_max), cx + box_half * 0.6, to_py(v_max), kBlack, 1.0);
    // Quartile box and median.
    fig.rect(cx - box_half, to_py(q3), 2 * box_half, to_py(q1) - to_py(q3), box_fill);
    fig.rect_outline(cx - box_half, to_py(q3), 2 * box_half, to_py(q1) - to_py(q3), kBlack, 1.0);
    fig.line(cx - box_half, to_py(med), cx + box_half, to_py(med), kBlack, 2.0);
    // Every run as a dot, deterministically jittered inside the box width.
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double offset =
          (static_cast<double>(i % 5) - 2.0) * (box_half / 3.0) * (i % 2 == 0 ? 1.0 : -1.0);
      fig.circle(cx + offset, to_py(raw[i]), 2.5, kBlack);
    }
    fig.text_centered(cx, plot_y + plot_h + 12, keys[k], kBlack, 1);
    const std::string count = "(N=" + std::to_string(raw.size()) + ")";
    fig.text_centered(cx, plot_y + plot_h + 26, count, kBlack, 1);
  }

  fig.save(base);
}

// ---------------------------------------------------------------------------
// Grouped bar chart

void render_grouped_bars(const eval::ComparisonTable& table, const std::filesystem::path& base) {
  if (table.variants.empty() || table.datasets.empty())
    throw ValidationError("render_grouped_bars: empty comparison table");

  Figure fig(720, 480);
  const double plot_x = 70, plot_y = 70, plot_w = 620, plot_h = 330;

  double top = 100.0;
  for (const auto& row : table.cells)
    for (const auto& cell : row)
      if (cell.present) top = std::max(top, cell.ci.mean + cell.ci.half_width);
  top = std::ceil(top / 10.0) * 10.0;
  auto to_py = [&](double v) { return plot_y + plot_h * (top - v) / top; };

  fig.text_centered(plot_x + plot_w / 2.0, 12, "MEAN ACCURACY WITH 95% CI", kBlack, 2);

  for (double tick = 0.0; tick <= top + 1e-9; tick += 20.0) {
    const double y = std::floor(to_py(tick)) + 0.5;
    fig.line(plot_x, y, plot_x + plot_w, y, kGray, 1.0);
    const std::string label = fmt_tick(tick);
    fig.text(plot_x - 8 - Figure::text_width(label), y - 3, label, kBlack, 1);
  }
  fig.rect_outline(plot_x + 0.5, plot_y + 0.5, plot_w, plot_h, kBlack, 1.0);

  // Legend: one color per dataset.
  double legend_x = plot_x + 6;
  const double legend_y = plot_y - 26;
  for (std::size_t d = 0; d < table.datasets.size(); ++d) {
    const Rgb color = kClassPalette[d % kClassPalette.size()];
    fig.rect(legend_x, legend_y, 9, 9, color);
    fig.text(legend_x + 13, legend_y + 1, table.datasets[d], kBlack, 1);
    legend_x += 13 + Figure::text_width(table.datasets[d]) + 18;
  }

  const double group = plot_w / static_cast<double>(table.variants.size());
  const double bar_w =
      group * 0.8 / static_cast<double>(table.datasets.size());

  for (std::size_t v = 0; v < table.variants.size(); ++v) {
    const double group_x = plot_x + group * static_cast<double>(v) + group * 0.1;
    for (std::size_t d = 0; d < table.datasets.size(); ++d) {
      const eval::ComparisonCell& cell = table.cells[v][d];
      if (!cell.present) continue;
      const double x = group_x + bar_w * static_cast<double>(d);
      const double y = to_py(cell.ci.mean);
      fig.rect(x, y, bar_w - 2, to_py(0.0) - y, kClassPalette[d % kClassPalette.size()]);
      if (cell.ci.defined && cell.ci.half_width > 0.0) {
        const double cx = x + (bar_w - 2) / 2.0;
        const double y_lo = to_py(std::max(0.0, cell.ci.mean - cell.ci.half_width));
        const double y_hi = to_py(std::min(top, cell.ci.mean + cell.ci.half_width));
        fig.line(cx, y_hi, cx, y_lo, kBlack, 1.4);
        fig.line(cx - 4, y_hi, cx + 4, y_hi, kBlack, 1.4);
        fig.line(cx - 4, y_lo, cx + 4, y_lo, kBlack, 1.4);
      }
    }
    fig.text_centered(plot_x + group * (static_cast<double>(v) + 0.5), plot_y + plot_h + 12,
                      table.variants[v], kBlack, 1);
  }

  fig.save(base);
}

// ---------------------------------------------------------------------------
// Confusion heatmap

void render_confusion_heatmap(const eval::EvalResult& result, const std::filesystem::path& base) {
  const int cell = 64;
  const double grid_x = 124, grid_y = 84;
  const double grid_w = 5.0 * cell, grid_h = 5.0 * cell;
  Figure fig(static_cast<int>(grid_x + grid_w + 36), static_cast<int>(grid_y + grid_h + 96));

  fig.text_centered(grid_x + grid_w / 2.0, 14, "CONFUSION: " + result.dataset, kBlack, 2);
  fig.text_centered(grid_x + grid_w / 2.0, grid_y + grid_h + 44, "PREDICTED", kBlack, 1);
  fig.text(8, grid_y - 20, "TRUE", kBlack, 1);

  const Rgb shade_target = kClassPalette[0];
  for (int row = 0; row < data::kNumClasses; ++row) {
    const std::int64_t total = result.row_sum(row);
    for (int col = 0; col < data::kNumClasses; ++col) {
      const std::int64_t count =
          result.confusion[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
      const double rate = total > 0 ? static_cast<double>(count) / static_cast<double>(total) : 0.0;
      const double x = grid_x + col * cell;
      const double y = grid_y + row * cell;
      fig.rect(x, y, cell, cell, blend(kWhite, shade_target, rate));
      const Rgb ink = rate > 0.55 ? kWhite : kBlack;
      fig.text_centered(x + cell / 2.0, y + cell / 2.0 - 4, std::to_string(count), ink, 1);
    }
    const std::string name(data::class_name(static_cast<data::WbcClass>(row)));
    fig.text(grid_x - 10 - Figure::text_width(name), grid_y + row * cell + cell / 2.0 - 4, name,
             kBlack, 1);
  }
  for (int col = 0; col < data::kNumClasses; ++col) {
    const std::string name(data::class_name(static_cast<data::WbcClass>(col)));
    // Names are longer than a cell; stagger alternate columns to keep them apart.
    const double y = grid_y + grid_h + 8 + (col % 2) * 13;
    fig.text_centered(grid_x + col * cell + cell / 2.0, y, name, kBlack, 1);
  }
  for (int k = 0; k <= data::kNumClasses; ++k) {
    fig.line(grid_x + k * cell + 0.5, grid_y + 0.5, grid_x + k * cell + 0.5, grid_y + grid_h + 0.5,
             kBlack, 1.0);
    fig.line(grid_x + 0.5, grid_y + k * cell + 0.5, grid_x + grid_w + 0.5, grid_y + k * cell + 0.5,
             kBlack, 1.0);
  }

  if (!result.absent_classes.empty()) {
    std::string note = "ABSENT:";
    for (const std::string& name : result.absent_classes) note += " " + name;
    fig.text(grid_x, grid_y + grid_h + 64, note, kBlack, 1);
  }

  fig.save(base);
}

}  // namespace wbc::analysis
