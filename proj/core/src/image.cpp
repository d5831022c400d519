#include "cmg/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cmg/errors.hpp"

namespace cmg {

ImageTensor::ImageTensor(torch::Tensor nchw) : data_(std::move(nchw)) {
  if (data_.dim() != 4) {
    throw ShapeError("image tensor must have 4 axes, got " + std::to_string(data_.dim()));
  }
  if (data_.size(1) != 1) {
    throw ShapeError("image tensor must have exactly 1 channel, got " +
                     std::to_string(data_.size(1)));
  }
  if (data_.size(2) != data_.size(3)) {
    std::ostringstream msg;
    msg << "images must be square, got " << data_.size(2) << "x" << data_.size(3);
    throw ShapeError(msg.str());
  }
  if (data_.numel() > 0) {
    const auto lo = data_.min().item<double>();
    const auto hi = data_.max().item<double>();
    if (!(lo >= -1.0 && hi <= 1.0)) {
      std::ostringstream msg;
      msg << "values outside [-1, 1]: min " << lo << ", max " << hi;
      throw RangeError(msg.str());
    }
  }
}

ImageShape ImageTensor::shape() const {
  if (!data_.defined()) return {};
  return {data_.size(0), data_.size(2), data_.size(3), data_.size(1)};
}

ImageTensor ImageTensor::sample(int64_t index) const {
  return ImageTensor(data_.narrow(0, index, 1));
}

ImageTensor ImageTensor::stack(const std::vector<ImageTensor>& items) {
  std::vector<torch::Tensor> parts;
  parts.reserve(items.size());
  for (const auto& item : items) parts.push_back(item.tensor());
  return ImageTensor(torch::cat(parts, 0));
}

uint8_t denormalize_u8(float v) {
  const double scaled = std::round((static_cast<double>(v) + 1.0) * 127.5);
  return static_cast<uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

torch::Tensor to_unit_range(const torch::Tensor& t) { return (t + 1.0) * 0.5; }

}  // namespace cmg
