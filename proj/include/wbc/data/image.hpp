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
#include <vector>

namespace wbc::data {

// 8-bit RGB image, HWC layout. Decoders normalize everything (gray, palette,
// alpha, 16-bit) down to this.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  std::uint8_t& at(int y, int x, int c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(y * width + x) * 3 + c]; }
};

// Dispatches on magic bytes (PNG, JPEG, BMP, binary PPM), not the extension.
// Throws IoError with the path on anything undecodable.
Image decode_image(const std::filesystem::path& path);

// 8-bit RGB PNG. Output bytes depend only on the pixel data (no timestamps),
// so repeated encodes of the same image are byte-identical.
void encode_png(const Image& img, const std::filesystem::path& path);

// Bilinear resample to target x target, returned as floats in [0,1], HWC.
// align_corners=false convention (pixel centers at i + 0.5).
std::vector<float> resize_bilinear(const Image& img, int target);

}  // namespace wbc::data
