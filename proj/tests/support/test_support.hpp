#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "cmg/image.hpp"

namespace cmg::testing {

// Fresh, empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cmg_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Uniform random image batch in [-1, 1].
inline ImageTensor random_image(int64_t batch, int64_t side, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return ImageTensor(torch::rand({batch, 1, side, side}, gen) * 2 - 1);
}

inline ImageTensor constant_image(int64_t batch, int64_t side, double value) {
  return ImageTensor(torch::full({batch, 1, side, side}, value));
}

// Adds Gaussian noise in the canonical range and clips back into [-1, 1].
inline ImageTensor noisy(const ImageTensor& img, double sigma_unit, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  // sigma is given on the [0, 1] scale; the canonical range is twice as wide.
  auto noise = torch::randn(img.tensor().sizes(), gen) * (2.0 * sigma_unit);
  return ImageTensor((img.tensor() + noise).clamp(-1.0, 1.0));
}

}  // namespace cmg::testing
