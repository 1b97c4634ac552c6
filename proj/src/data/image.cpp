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

#include "wbc/data/image.hpp"

#include <cstddef>
#include <cstdio>

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "wbc/core/error.hpp"

namespace wbc::data {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw IoError(path.string() + ": " + what);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.empty()) fail(path, "empty file");
  return bytes;
}

struct PngReadCtx {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

void png_read_fn(png_structp png, png_bytep out, png_size_t len) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->offset + len > ctx->size) png_error(png, "read past end of buffer");
  std::memcpy(out, ctx->data + ctx->offset, len);
  ctx->offset += len;
}

Image decode_png(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "png_create_info_struct failed");
  }
  Image img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "corrupt PNG");
  }
  PngReadCtx ctx{bytes.data(), bytes.size(), 0};
  png_set_read_fn(png, &ctx, png_read_fn);
  png_read_info(png, info);

  // Normalize every color type to 8-bit RGB.
  png_byte color_type = png_get_color_type(png, info);
  png_byte bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(img.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "unexpected PNG row size after normalization");
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jump, 1);
}

Image decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(path, "corrupt JPEG");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, const_cast<unsigned char*>(bytes.data()),
               static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  Image img;
  img.width = static_cast<int>(cinfo.output_width);
  img.height = static_cast<int>(cinfo.output_height);
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

// Uncompressed 24/32-bit BI_RGB only, which covers the LISC distribution.
Image decode_bmp(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < 54) fail(path, "truncated BMP header");
  const std::uint32_t pixel_offset = le32(&bytes[10]);
  const std::uint32_t header_size = le32(&bytes[14]);
  if (header_size < 40) fail(path, "unsupported BMP header");
  const std::int32_t width = static_cast<std::int32_t>(le32(&bytes[18]));
  std::int32_t height = static_cast<std::int32_t>(le32(&bytes[22]));
  const std::uint16_t bpp = le16(&bytes[28]);
  const std::uint32_t compression = le32(&bytes[30]);
  if (compression != 0 || (bpp != 24 && bpp != 32))
    fail(path, "unsupported BMP variant (need uncompressed 24/32-bit)");
  const bool top_down = height < 0;
  if (top_down) height = -height;
  if (width <= 0 || height <= 0) fail(path, "bad BMP dimensions");

  const std::size_t bytes_per_px = bpp / 8;
  const std::size_t row_stride = (static_cast<std::size_t>(width) * bytes_per_px + 3) & ~std::size_t{3};
  if (pixel_offset + row_stride * height > bytes.size()) fail(path, "truncated BMP pixel data");

  Image img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y) {
    const int src_y = top_down ? y : height - 1 - y;
    const std::uint8_t* row = bytes.data() + pixel_offset + row_stride * src_y;
    for (int x = 0; x < width; ++x) {
      const std::uint8_t* px = row + x * bytes_per_px;  // BGR(A) order
      img.at(y, x, 0) = px[2];
      img.at(y, x, 1) = px[1];
      img.at(y, x, 2) = px[0];
    }
  }
  return img;
}

// Binary P6, 8-bit maxval.
Image decode_ppm(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::size_t pos = 2;  // past "P6"
  auto next_int = [&]() -> int {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    int v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) fail(path, "malformed PPM header");
    return v;
  };
  const int width = next_int();
  const int height = next_int();
  const int maxval = next_int();
  if (maxval != 255) fail(path, "unsupported PPM maxval");
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(width) * height * 3;
  if (pos + need > bytes.size()) fail(path, "truncated PPM pixel data");
  Image img;
  img.width = width;
  img.height = height;
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

}  // namespace

Image decode_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  static const std::uint8_t png_magic[4] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), png_magic, 4) == 0)
    return decode_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) return decode_jpeg(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'B' && bytes[1] == 'M') return decode_bmp(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path);
  fail(path, "unrecognized image format");
}

void encode_png(const Image& img, const std::filesystem::path& path) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw ValidationError("encode_png: inconsistent image");
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    fail(path, "libpng allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(path, "PNG write failed");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::vector<float> resize_bilinear(const Image& img, int target) {
  if (target <= 0) throw ValidationError("resize_bilinear: target must be positive");
  if (img.width <= 0 || img.height <= 0) throw ValidationError("resize_bilinear: empty image");
  std::vector<float> out(static_cast<std::size_t>(target) * target * 3);
  const float sx = static_cast<float>(img.width) / static_cast<float>(target);
  const float sy = static_cast<float>(img.height) / static_cast<float>(target);
  for (int y = 0; y < target; ++y) {
    const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wy = std::clamp(fy - static_cast<float>(y0), 0.0f, 1.0f);
    for (int x = 0; x < target; ++x) {
      const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float wx = std::clamp(fx - static_cast<float>(x0), 0.0f, 1.0f);
      for (int c = 0; c < 3; ++c) {
        const float top = (1.0f - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const float bot = (1.0f - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out[(static_cast<std::size_t>(y) * target + x) * 3 + c] =
            ((1.0f - wy) * top + wy * bot) / 255.0f;
      }
    }
  }
  return out;
}

}  // namespace wbc::data
