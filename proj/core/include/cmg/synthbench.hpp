#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cmg/data.hpp"

namespace cmg {

enum class SynthTransform { invert_blur, invert_blur_texture };

// Two-domain corpus with a known deterministic map T: X -> Y.
//   T(x) = clip(blur_sigma(1 - x) + texture, 0, 1)
// where the texture (invert_blur_texture only) is the fixed sinusoidal grid
// A * 2 sin(2 pi (r + 1/2) / 4) sin(2 pi (c + 1/2) / 4), a +-A checkerboard of
// 2x2 cells. Blur is Gaussian with radius ceil(3 sigma) and mirrored borders.
struct SynthSpec {
  int64_t n_images = 200;
  int64_t resolution = 64;
  SynthTransform transform = SynthTransform::invert_blur_texture;
  double blur_sigma = 2.0;
  double texture_amplitude = 0.15;
  uint64_t seed = 0;

  void validate() const;
};

inline constexpr int64_t kSynthGroups = 10;
inline constexpr int64_t kTexturePeriod = 4;

std::string transform_name(SynthTransform t);
SynthTransform parse_transform(const std::string& name);

// Domain-X image `index`: 2-5 antialiased ellipses/rectangles with smooth
// intensity ramps over a ramped background, row-major in [0, 1].
std::vector<double> render_source_image(const SynthSpec& spec, int64_t index);

// T applied to a unit-range square raster.
std::vector<double> apply_transform(const SynthSpec& spec, std::span<const double> x, int64_t side);

std::vector<uint8_t> quantize_u8(std::span<const double> unit);
std::vector<double> dequantize_u8(std::span<const uint8_t> bytes);

// File stem of sample `index`; group ids are assigned round-robin.
std::string sample_stem(int64_t index);

struct CorpusSummary {
  int64_t images = 0;
  // Mean SSIM between every exported x and T(x).
  double mean_ssim_x_tx = 0.0;
};

// Writes <out_dir>/X/*.png, <out_dir>/Y/*.png (8-bit, matching names) and
// <out_dir>/synth_manifest.json. Y files hold T applied to the quantized X
// image. Throws IoError when out_dir cannot be written.
CorpusSummary generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir);

SynthSpec read_synth_manifest(const std::filesystem::path& out_dir);

// Validation-split pairs (x, T(x)) recomputed from the X files of the groups
// select_validation_groups picks for (val_fraction, seed). Throws
// PairingMismatch when an X file has no Y counterpart.
PairedValidationSet oracle_pairs(const std::filesystem::path& out_dir, double val_fraction,
                                 uint64_t seed);

}  // namespace cmg
