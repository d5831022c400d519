#include "cmg/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "cmg/errors.hpp"

namespace cmg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void silent_warning(png_structp, png_const_charp) {}

// 1-D resampling weights for one output coordinate.
struct Taps {
  int64_t first = 0;
  std::vector<double> weights;
};

std::vector<Taps> triangle_taps(int64_t in_size, int64_t out_size) {
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  const double support = std::max(scale, 1.0);
  std::vector<Taps> taps(static_cast<size_t>(out_size));
  for (int64_t i = 0; i < out_size; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * scale - 0.5;
    auto lo = static_cast<int64_t>(std::floor(center - support));
    auto hi = static_cast<int64_t>(std::ceil(center + support));
    lo = std::max<int64_t>(lo, 0);
    hi = std::min<int64_t>(hi, in_size - 1);
    Taps& t = taps[static_cast<size_t>(i)];
    t.first = lo;
    double total = 0.0;
    for (int64_t j = lo; j <= hi; ++j) {
      const double w = std::max(0.0, 1.0 - std::abs(static_cast<double>(j) - center) / support);
      t.weights.push_back(w);
      total += w;
    }
    if (total <= 0.0) {
      // Only reachable when the center falls outside the grid: nearest edge.
      const int64_t nearest = std::clamp<int64_t>(std::llround(center), 0, in_size - 1);
      t.first = nearest;
      t.weights.assign(1, 1.0);
      continue;
    }
    for (double& w : t.weights) w /= total;
  }
  return taps;
}

}  // namespace

GrayImage read_png(const std::filesystem::path& path) {
  const std::string name = path.string();
  FilePtr file(std::fopen(name.c_str(), "rb"));
  if (!file) throw DecodeError("cannot open " + name);

  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw DecodeError("not a PNG file: " + name);
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, silent_warning);
  if (!png) throw DecodeError("libpng init failed for " + name);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("libpng init failed for " + name);
  }

  // Everything with a destructor lives above setjmp.
  GrayImage image;
  std::vector<png_byte> raw;
  std::vector<png_bytep> rows;
  volatile bool channel_error = false;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("corrupt PNG data in " + name);
  }

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);

  if (color_type != PNG_COLOR_TYPE_GRAY) {
    channel_error = true;
  } else {
    if (bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    png_read_update_info(png, info);
    const size_t row_bytes = png_get_rowbytes(png, info);
    raw.resize(row_bytes * height);
    rows.resize(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = raw.data() + r * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);

  if (channel_error) {
    throw ChannelError("expected a single-channel grayscale PNG: " + name);
  }

  image.width = width;
  image.height = height;
  image.bit_depth = bit_depth == 16 ? 16 : 8;
  image.pixels.resize(static_cast<size_t>(width) * height);
  if (bit_depth == 16) {
    for (size_t i = 0; i < image.pixels.size(); ++i) {
      const unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
      image.pixels[i] = static_cast<double>(v) / 65535.0;
    }
  } else {
    // Sub-byte depths were expanded to 8 bits but keep their original scale.
    const double max_value = bit_depth == 8 ? 255.0 : static_cast<double>((1 << bit_depth) - 1);
    for (size_t i = 0; i < image.pixels.size(); ++i) {
      image.pixels[i] = static_cast<double>(raw[i]) / max_value;
    }
  }
  return image;
}

namespace {

void write_png_impl(const std::filesystem::path& path, int64_t width, int64_t height, int depth,
                    const png_byte* data, size_t row_bytes) {
  const std::string name = path.string();
  FilePtr file(std::fopen(name.c_str(), "wb"));
  if (!file) throw IoError("cannot open for writing: " + name);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, silent_warning);
  if (!png) throw IoError("libpng init failed for " + name);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed for " + name);
  }
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int64_t r = 0; r < height; ++r) {
    rows[static_cast<size_t>(r)] = const_cast<png_bytep>(data + r * row_bytes);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + name);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0 || std::ferror(file.get())) {
    throw IoError("failed writing " + name);
  }
}

}  // namespace

void write_png_u8(const std::filesystem::path& path, int64_t width, int64_t height,
                  std::span<const uint8_t> pixels) {
  if (static_cast<int64_t>(pixels.size()) != width * height) {
    throw ShapeError("pixel buffer does not match " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  write_png_impl(path, width, height, 8, pixels.data(), static_cast<size_t>(width));
}

void write_png_u16(const std::filesystem::path& path, int64_t width, int64_t height,
                   std::span<const uint16_t> pixels) {
  if (static_cast<int64_t>(pixels.size()) != width * height) {
    throw ShapeError("pixel buffer does not match " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  std::vector<png_byte> big_endian(pixels.size() * 2);
  for (size_t i = 0; i < pixels.size(); ++i) {
    big_endian[2 * i] = static_cast<png_byte>(pixels[i] >> 8);
    big_endian[2 * i + 1] = static_cast<png_byte>(pixels[i] & 0xff);
  }
  write_png_impl(path, width, height, 16, big_endian.data(), static_cast<size_t>(width) * 2);
}

std::vector<double> resample_bilinear(std::span<const double> src, int64_t height, int64_t width,
                                      int64_t out_height, int64_t out_width) {
  if (height == out_height && width == out_width) {
    return {src.begin(), src.end()};
  }
  const auto col_taps = triangle_taps(width, out_width);
  const auto row_taps = triangle_taps(height, out_height);

  std::vector<double> horizontal(static_cast<size_t>(height * out_width), 0.0);
  for (int64_t r = 0; r < height; ++r) {
    for (int64_t c = 0; c < out_width; ++c) {
      const Taps& t = col_taps[static_cast<size_t>(c)];
      double acc = 0.0;
      for (size_t k = 0; k < t.weights.size(); ++k) {
        acc += t.weights[k] * src[static_cast<size_t>(r * width + t.first + static_cast<int64_t>(k))];
      }
      horizontal[static_cast<size_t>(r * out_width + c)] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(out_height * out_width), 0.0);
  for (int64_t r = 0; r < out_height; ++r) {
    const Taps& t = row_taps[static_cast<size_t>(r)];
    for (int64_t c = 0; c < out_width; ++c) {
      double acc = 0.0;
      for (size_t k = 0; k < t.weights.size(); ++k) {
        acc += t.weights[k] *
               horizontal[static_cast<size_t>((t.first + static_cast<int64_t>(k)) * out_width + c)];
      }
      out[static_cast<size_t>(r * out_width + c)] = acc;
    }
  }
  return out;
}

}  // namespace cmg
