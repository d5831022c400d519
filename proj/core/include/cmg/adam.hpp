#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cmg/networks.hpp"

namespace cmg {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction (same update rule as torch::optim::Adam, no
// weight decay). Moments are plain named tensors so they round-trip through
// checkpoints.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamOptions options);

  void zero_grad();
  // Parameters without a gradient are skipped. A zero learning rate leaves
  // every parameter bitwise unchanged.
  void step();

  int64_t steps() const noexcept { return steps_; }
  const AdamOptions& options() const noexcept { return options_; }

  // "<name>.exp_avg" / "<name>.exp_avg_sq" for every parameter.
  std::vector<NamedTensor> state_tensors() const;
  void load_state(int64_t steps, const std::vector<NamedTensor>& tensors);

 private:
  std::vector<NamedTensor> params_;
  std::vector<torch::Tensor> exp_avg_;
  std::vector<torch::Tensor> exp_avg_sq_;
  AdamOptions options_;
  int64_t steps_ = 0;
};

}  // namespace cmg
