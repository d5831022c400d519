#include "cmg/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <json.hpp>

#include "cmg/archive.hpp"
#include "cmg/errors.hpp"
#include "cmg/metrics.hpp"
#include "cmg/png_io.hpp"
#include "cmg/rng.hpp"

namespace cmg {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSupersample = 4;

struct Shape {
  bool ellipse = true;
  double cx = 0, cy = 0;        // pixels
  double ax = 1, ay = 1;        // half extents, pixels
  double cos_t = 1, sin_t = 0;  // rotation
  double base = 0.5;
  double ramp = 0.0;
  double ramp_dx = 1, ramp_dy = 0;

  bool contains(double px, double py) const {
    const double dx = px - cx, dy = py - cy;
    const double u = (cos_t * dx + sin_t * dy) / ax;
    const double v = (-sin_t * dx + cos_t * dy) / ay;
    return ellipse ? (u * u + v * v <= 1.0) : (std::abs(u) <= 1.0 && std::abs(v) <= 1.0);
  }

  double intensity(double px, double py) const {
    const double r = std::max(ax, ay);
    const double t = (ramp_dx * (px - cx) + ramp_dy * (py - cy)) / r;
    return base + ramp * t;
  }
};

int64_t mirror(int64_t i, int64_t n) {
  // Half-sample symmetric extension: -1 -> 0, n -> n - 1.
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

}  // namespace

void SynthSpec::validate() const {
  if (resolution < 32) throw ConfigError("synthetic resolution must be >= 32");
  if (n_images < 10) throw ConfigError("synthetic corpus needs n_images >= 10");
  if (!(blur_sigma > 0.0)) throw ConfigError("blur_sigma must be > 0");
  if (texture_amplitude < 0.0) throw ConfigError("texture_amplitude must be >= 0");
}

std::string transform_name(SynthTransform t) {
  return t == SynthTransform::invert_blur ? "invert_blur" : "invert_blur_texture";
}

SynthTransform parse_transform(const std::string& name) {
  if (name == "invert_blur") return SynthTransform::invert_blur;
  if (name == "invert_blur_texture") return SynthTransform::invert_blur_texture;
  throw ConfigError("unknown synthetic transform '" + name + "'");
}

std::vector<double> render_source_image(const SynthSpec& spec, int64_t index) {
  auto rng = seeded_engine(spec.seed, 0x53u, static_cast<uint64_t>(index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const auto side = static_cast<double>(spec.resolution);

  const double bg_level = uniform(0.05, 0.3);
  const double bg_angle = uniform(0.0, 2.0 * std::numbers::pi);
  const double bg_ramp = uniform(0.0, 0.15);

  const int n_shapes = 2 + static_cast<int>(std::min(3.0, std::floor(uniform(0.0, 4.0))));
  std::vector<Shape> shapes(static_cast<size_t>(n_shapes));
  for (auto& s : shapes) {
    s.ellipse = unit(rng) < 0.5;
    s.cx = uniform(0.15, 0.85) * side;
    s.cy = uniform(0.15, 0.85) * side;
    s.ax = uniform(0.08, 0.3) * side;
    s.ay = uniform(0.08, 0.3) * side;
    const double theta = uniform(0.0, std::numbers::pi);
    s.cos_t = std::cos(theta);
    s.sin_t = std::sin(theta);
    s.base = uniform(0.35, 1.0);
    s.ramp = uniform(-0.25, 0.25);
    const double ramp_angle = uniform(0.0, 2.0 * std::numbers::pi);
    s.ramp_dx = std::cos(ramp_angle);
    s.ramp_dy = std::sin(ramp_angle);
  }

  const int64_t n = spec.resolution;
  std::vector<double> img(static_cast<size_t>(n * n));
  for (int64_t r = 0; r < n; ++r) {
    for (int64_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double py = static_cast<double>(r) + (sy + 0.5) / kSupersample;
          const double px = static_cast<double>(c) + (sx + 0.5) / kSupersample;
          const double u = (px / side - 0.5) * std::cos(bg_angle) + (py / side - 0.5) * std::sin(bg_angle);
          double v = bg_level + bg_ramp * u;
          for (const auto& s : shapes) {
            if (s.contains(px, py)) v = s.intensity(px, py);
          }
          acc += std::clamp(v, 0.0, 1.0);
        }
      }
      img[static_cast<size_t>(r * n + c)] = acc / (kSupersample * kSupersample);
    }
  }
  return img;
}

std::vector<double> apply_transform(const SynthSpec& spec, std::span<const double> x, int64_t side) {
  const auto radius = static_cast<int64_t>(std::ceil(3.0 * spec.blur_sigma));
  const auto taps = gaussian_window(2 * radius + 1, spec.blur_sigma);
  const size_t count = static_cast<size_t>(side * side);
  std::vector<double> inverted(count);
  for (size_t i = 0; i < count; ++i) inverted[i] = 1.0 - x[i];

  std::vector<double> horizontal(count);
  for (int64_t r = 0; r < side; ++r) {
    for (int64_t c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int64_t k = -radius; k <= radius; ++k) {
        acc += taps[static_cast<size_t>(k + radius)] * inverted[static_cast<size_t>(r * side + mirror(c + k, side))];
      }
      horizontal[static_cast<size_t>(r * side + c)] = acc;
    }
  }
  std::vector<double> out(count);
  for (int64_t r = 0; r < side; ++r) {
    for (int64_t c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int64_t k = -radius; k <= radius; ++k) {
        acc += taps[static_cast<size_t>(k + radius)] * horizontal[static_cast<size_t>(mirror(r + k, side) * side + c)];
      }
      if (spec.transform == SynthTransform::invert_blur_texture) {
        const double w = 2.0 * std::numbers::pi / static_cast<double>(kTexturePeriod);
        acc += spec.texture_amplitude * 2.0 * std::sin(w * (static_cast<double>(r) + 0.5)) *
               std::sin(w * (static_cast<double>(c) + 0.5));
      }
      out[static_cast<size_t>(r * side + c)] = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

std::vector<uint8_t> quantize_u8(std::span<const double> unit) {
  std::vector<uint8_t> out(unit.size());
  for (size_t i = 0; i < unit.size(); ++i) {
    out[i] = static_cast<uint8_t>(std::clamp(std::round(unit[i] * 255.0), 0.0, 255.0));
  }
  return out;
}

std::vector<double> dequantize_u8(std::span<const uint8_t> bytes) {
  std::vector<double> out(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) out[i] = static_cast<double>(bytes[i]) / 255.0;
  return out;
}

std::string sample_stem(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "g%02lld_%05lld", static_cast<long long>(index % kSynthGroups),
                static_cast<long long>(index));
  return buf;
}

CorpusSummary generate_corpus(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "X", ec);
  if (!ec) fs::create_directories(out_dir / "Y", ec);
  if (ec) throw IoError("cannot create corpus directories under " + out_dir.string() + ": " + ec.message());

  const int64_t n = spec.resolution;
  CorpusSummary summary;
  summary.images = spec.n_images;
  double ssim_sum = 0.0;
  for (int64_t i = 0; i < spec.n_images; ++i) {
    const auto x8 = quantize_u8(render_source_image(spec, i));
    const auto x = dequantize_u8(x8);
    const auto y8 = quantize_u8(apply_transform(spec, x, n));
    const std::string file = sample_stem(i) + ".png";
    write_png_u8(out_dir / "X" / file, n, n, x8);
    write_png_u8(out_dir / "Y" / file, n, n, y8);
    ssim_sum += ssim_plane(Plane{n, x}, Plane{n, dequantize_u8(y8)});
  }
  summary.mean_ssim_x_tx = ssim_sum / static_cast<double>(spec.n_images);

  json manifest{{"n_images", spec.n_images},
                {"resolution", spec.resolution},
                {"transform", transform_name(spec.transform)},
                {"blur_sigma", spec.blur_sigma},
                {"texture_amplitude", spec.texture_amplitude},
                {"seed", spec.seed},
                {"groups", kSynthGroups},
                {"texture_period", kTexturePeriod},
                {"mean_ssim_x_tx", summary.mean_ssim_x_tx}};
  try {
    write_text_file(out_dir / "synth_manifest.json", manifest.dump(2) + "\n");
  } catch (const CheckpointError& e) {
    throw IoError(e.what());
  }
  return summary;
}

SynthSpec read_synth_manifest(const fs::path& out_dir) {
  SynthSpec spec;
  try {
    const auto m = json::parse(read_text_file(out_dir / "synth_manifest.json"));
    spec.n_images = m.at("n_images").get<int64_t>();
    spec.resolution = m.at("resolution").get<int64_t>();
    spec.transform = parse_transform(m.at("transform").get<std::string>());
    spec.blur_sigma = m.at("blur_sigma").get<double>();
    spec.texture_amplitude = m.at("texture_amplitude").get<double>();
    spec.seed = m.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw IoError("bad synth manifest in " + out_dir.string() + ": " + e.what());
  } catch (const IncompatibleCheckpoint& e) {
    throw IoError(std::string("missing synth manifest: ") + e.what());
  }
  return spec;
}

PairedValidationSet oracle_pairs(const fs::path& out_dir, double val_fraction, uint64_t seed) {
  const SynthSpec spec = read_synth_manifest(out_dir);
  const auto x_files = list_png_files(out_dir / "X");
  std::vector<std::string> groups;
  for (const auto& f : x_files) groups.push_back(group_key(f.stem().string()));
  const auto val_groups = select_validation_groups(groups, val_fraction, seed);

  std::vector<ValidationPair> pairs;
  const int64_t n = spec.resolution;
  for (const auto& f : x_files) {
    const auto stem = f.stem().string();
    if (std::find(val_groups.begin(), val_groups.end(), group_key(stem)) == val_groups.end()) continue;
    if (!fs::exists(out_dir / "Y" / f.filename())) {
      throw PairingMismatch(f.filename().string() + " present in X/ but not in Y/");
    }
    const GrayImage img = read_png(f);
    if (img.width != n || img.height != n) throw ShapeError("corpus image has unexpected size: " + f.string());
    const auto x8 = quantize_u8(img.pixels);
    const auto y8 = quantize_u8(apply_transform(spec, dequantize_u8(x8), n));
    auto to_tensor = [n](const std::vector<uint8_t>& bytes) {
      auto t = torch::empty({1, 1, n, n}, torch::kFloat);
      auto* dst = t.data_ptr<float>();
      for (size_t i = 0; i < bytes.size(); ++i) dst[i] = normalize_u8(bytes[i]);
      return ImageTensor(t);
    };
    pairs.push_back({to_tensor(x8), to_tensor(y8), stem});
  }
  return PairedValidationSet(std::move(pairs));
}

}  // namespace cmg
