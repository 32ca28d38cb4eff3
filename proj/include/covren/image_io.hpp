// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace covren {

/// Decoded PNG samples before any normalisation.
struct PngData {
  int width = 0;
  int height = 0;
  int channels = 0;   ///< 1 (gray) or 3 (RGB)
  int bit_depth = 0;  ///< 8 or 16
  std::vector<std::uint16_t> samples;
};

/// 8-bit value used for a float in [0, 1]: round(255 * clamp(x, 0, 1)).
std::uint8_t quantize_unit(float x);

/// 8-bit PNG (1 or 3 channels) of values in [0, 1], tagged sRGB for RGB.
void write_png8(const std::filesystem::path& path, const Image& image);
/// 16-bit grayscale PNG.
void write_png16(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint16_t>& samples);

/// Throws IoError when the file cannot be opened and FormatError when it is
/// not a valid PNG.
PngData read_png(const std::filesystem::path& path);
/// Samples scaled to [0, 1] by 255 or 65535.
Image read_png_image(const std::filesystem::path& path);

/// Single-channel PFM ("Pf"), scale -1 (little-endian), rows stored bottom-up.
void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);

/// Depth preview in millimetres: round(1000 * depth), saturating at 65535;
/// non-finite or negative depths map to 0.
std::vector<std::uint16_t> depth_preview_mm(const Image& depth);

}  // namespace covren
