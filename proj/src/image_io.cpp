// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/image_io.hpp"

#include "covren/errors.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace covren {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) {
    throw IoError(std::string("cannot open ") + path.string() +
                  (mode[0] == 'w' ? " for writing" : ""));
  }
  return f;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buffer = static_cast<std::string*>(png_get_error_ptr(png));
  if (buffer) *buffer = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

// rows: height pointers into a big-endian byte buffer.
void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type,
                    int bit_depth, bool srgb, std::vector<png_byte>& bytes) {
  FilePtr f = open_file(path, "wb");
  std::string message;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t row_bytes =
      static_cast<std::size_t>(width) * channels * static_cast<std::size_t>(bit_depth / 8);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = bytes.data() + y * row_bytes;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string() + ": " + message);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  if (srgb) png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

std::uint8_t quantize_unit(float x) {
  if (!(x > 0.0f)) return 0;
  if (x >= 1.0f) return 255;
  return static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(x)));
}

void write_png8(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ContractError("write_png8 supports 1 or 3 channels");
  }
  std::vector<png_byte> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), quantize_unit);
  write_png_rows(path, image.width, image.height,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8,
                 image.channels == 3, bytes);
}

void write_png16(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint16_t>& samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height) {
    throw ContractError("write_png16 sample count does not match the size");
  }
  std::vector<png_byte> bytes(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bytes[2 * i] = static_cast<png_byte>(samples[i] >> 8);
    bytes[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xff);
  }
  write_png_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 16, false, bytes);
}

PngData read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte signature[8];
  if (std::fread(signature, 1, 8, f.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw FormatError(path.string() + ": not a PNG file");
  }
  std::string message;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  PngData out;
  std::vector<png_byte> bytes;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": corrupt PNG: " + message);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  if ((out.channels != 1 && out.channels != 3) || (out.bit_depth != 8 && out.bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": unsupported PNG layout");
  }
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  bytes.resize(row_bytes * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = bytes.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = out.bit_depth == 8
                         ? bytes[i]
                         : static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  return out;
}

Image read_png_image(const std::filesystem::path& path) {
  const PngData png = read_png(path);
  Image img(png.width, png.height, png.channels);
  const float scale = png.bit_depth == 8 ? 1.0f / 255.0f : 1.0f / 65535.0f;
  for (std::size_t i = 0; i < png.samples.size(); ++i) img.data[i] = png.samples[i] * scale;
  return img;
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1) {
    throw ContractError("write_pfm expects a single-channel image");
  }
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << "Pf\n" << image.width << ' ' << image.height << "\n-1.0\n";
  for (int y = image.height - 1; y >= 0; --y) {
    out.write(reinterpret_cast<const char*>(&image.data[image.offset(0, y)]),
              static_cast<std::streamsize>(image.width * sizeof(float)));
  }
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::string magic;
  int width = 0;
  int height = 0;
  double scale = 0.0;
  if (!(in >> magic) || magic != "Pf") {
    throw FormatError(path.string() + ": not a single-channel PFM file");
  }
  if (!(in >> width >> height >> scale) || width <= 0 || height <= 0 || width > (1 << 16) ||
      height > (1 << 16)) {
    throw FormatError(path.string() + ": bad PFM header");
  }
  if (scale >= 0.0) {
    throw FormatError(path.string() + ": big-endian PFM is not supported");
  }
  in.get();  // single whitespace byte before the raster
  Image img(width, height, 1);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(&img.data[img.offset(0, y)]),
            static_cast<std::streamsize>(width * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(width * sizeof(float))) {
      throw FormatError(path.string() + ": truncated PFM raster");
    }
  }
  return img;
}

std::vector<std::uint16_t> depth_preview_mm(const Image& depth) {
  std::vector<std::uint16_t> out(depth.data.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mm = std::round(1000.0 * static_cast<double>(depth.data[i]));
    if (!std::isfinite(mm) || mm <= 0.0) continue;
    out[i] = mm >= 65535.0 ? 65535 : static_cast<std::uint16_t>(mm);
  }
  return out;
}

}  // namespace covren
