#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cmg {

// Decoded grayscale raster, row-major, values scaled to [0, 1].
struct GrayImage {
  int64_t width = 0;
  int64_t height = 0;
  int bit_depth = 8;
  std::vector<double> pixels;

  double at(int64_t row, int64_t col) const { return pixels[row * width + col]; }
};

// Reads a grayscale PNG (1/2/4/8/16-bit). Throws DecodeError naming the file
// for unreadable or corrupt input and ChannelError for color, palette or
// alpha images.
GrayImage read_png(const std::filesystem::path& path);

// Writes an 8-bit grayscale PNG. Output bytes depend only on the pixels.
void write_png_u8(const std::filesystem::path& path, int64_t width, int64_t height,
                  std::span<const uint8_t> pixels);

// Writes a 16-bit grayscale PNG.
void write_png_u16(const std::filesystem::path& path, int64_t width, int64_t height,
                   std::span<const uint16_t> pixels);

// Antialiased bilinear (triangle filter) resampling to out_height x out_width.
// Each output pixel is a convex combination of input pixels, so the input's
// value range is preserved.
std::vector<double> resample_bilinear(std::span<const double> src, int64_t height,
                                      int64_t width, int64_t out_height, int64_t out_width);

}  // namespace cmg
