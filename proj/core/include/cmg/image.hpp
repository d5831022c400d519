#pragma once

#include <cstdint>
#include <torch/torch.h>

namespace cmg {

struct ImageShape {
  int64_t batch = 0;
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;

  bool operator==(const ImageShape&) const = default;
};

// A batch of square single-channel images with values in [-1, 1].
//
// Storage is a float tensor laid out (batch, channels, height, width) as torch
// convolutions expect; shape() reports the logical (batch, height, width,
// channels) view. Construction validates every invariant and throws
// ShapeError or RangeError on violation.
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(torch::Tensor nchw);

  const torch::Tensor& tensor() const noexcept { return data_; }
  ImageShape shape() const;
  int64_t batch() const { return data_.size(0); }
  int64_t resolution() const { return data_.size(2); }

  // Sample `index` as a batch of one.
  ImageTensor sample(int64_t index) const;

  static ImageTensor stack(const std::vector<ImageTensor>& items);

 private:
  torch::Tensor data_;
};

// 8-bit <-> canonical range. denormalize(normalize(v)) == v for all v.
inline float normalize_u8(uint8_t v) {
  return static_cast<float>(2.0 * (static_cast<double>(v) / 255.0) - 1.0);
}
uint8_t denormalize_u8(float v);

// Map [-1, 1] to [0, 1] (metrics operate on unit range).
torch::Tensor to_unit_range(const torch::Tensor& t);

}  // namespace cmg
