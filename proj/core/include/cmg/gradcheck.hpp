#pragma once

#include <cstdint>
#include <string>

#include "cmg/losses.hpp"
#include "cmg/networks.hpp"

namespace cmg {

struct GradCheckOptions {
  uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  int64_t resolution = 8;
  int64_t batch = 2;
  // Gradients smaller than this in both routes are compared absolutely.
  double magnitude_floor = 1e-7;
};

struct GradCheckResult {
  int64_t trainable_parameters = 0;  // G1 + G2 + D1 + D2
  int64_t checked = 0;               // generator parameters compared
  double max_relative_error = 0.0;
  std::string worst_parameter;       // "g1.model.1.weight[3]"
  bool passed = false;
};

// Toy double-precision bundle under 500 trainable parameters: 1-filter
// generators with one downsampling and no residual block, 1-layer
// discriminators and a small frozen extractor.
BundleSpec toy_bundle_spec(int64_t resolution);

// Compares autograd gradients of the full generator objective against
// central finite differences for every generator parameter.
// relative error = |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckResult check_generator_gradients(const GradCheckOptions& options);

}  // namespace cmg
