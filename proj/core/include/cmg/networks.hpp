#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "cmg/data.hpp"
#include "cmg/image.hpp"

namespace cmg {

using NamedTensor = std::pair<std::string, torch::Tensor>;

// Residual encoder/decoder generator: 7x7 stem, `downsamplings` stride-2
// convolutions, `residual_blocks` residual blocks, mirrored transposed
// convolutions, 7x7 head with tanh. Instance norm throughout, reflection padding.
struct GeneratorSpec {
  int64_t input_resolution = 64;
  int64_t base_filters = 32;
  int64_t residual_blocks = 4;
  int64_t downsamplings = 2;

  bool operator==(const GeneratorSpec&) const = default;
};

// Patch discriminator: `layers` stride-2 4x4 convolutions, one stride-1 4x4
// convolution, then a 1-channel 4x4 head followed by a sigmoid.
struct DiscriminatorSpec {
  int64_t base_filters = 32;
  int64_t layers = 3;

  // Side length of the input patch seen by one output score.
  int64_t receptive_field() const;
  bool operator==(const DiscriminatorSpec&) const = default;
};

// Convolutional encoder tapped after every stage. Stage 1 is a stride-1 3x3
// convolution, later stages are stride-2 4x4 convolutions doubling the
// channel count; each is followed by LeakyReLU(0.2). A mirrored decoder is
// kept for reconstruction pretraining.
struct FeatureExtractorSpec {
  int64_t base_filters = 8;
  int64_t stages = 4;

  bool operator==(const FeatureExtractorSpec&) const = default;
};

struct LayerShape {
  int64_t height = 0;
  int64_t width = 0;
  int64_t depth = 0;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);
  // Raw forward on an NCHW tensor of any floating dtype.
  torch::Tensor forward(const torch::Tensor& x);
  const GeneratorSpec& spec() const noexcept { return spec_; }

 private:
  GeneratorSpec spec_;
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(Generator);

// Probabilities strictly inside (0, 1), shape (batch, 1, h, w).
using PatchScoreGrid = torch::Tensor;

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorSpec& spec);
  PatchScoreGrid forward(const torch::Tensor& img);
  // Pre-sigmoid scores.
  torch::Tensor logits(const torch::Tensor& img);
  const DiscriminatorSpec& spec() const noexcept { return spec_; }
  // Last convolution, exposed so callers can zero it.
  torch::nn::Conv2d& head() { return head_; }

 private:
  DiscriminatorSpec spec_;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Discriminator);

struct FeatureStack {
  // maps[i] has shape (batch, d_i, h_i, w_i).
  std::vector<torch::Tensor> maps;

  size_t size() const noexcept { return maps.size(); }
};

class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(const FeatureExtractorSpec& spec);

  // Activations after every encoder stage. No frozen check.
  std::vector<torch::Tensor> encode(const torch::Tensor& img);
  // Encoder followed by the decoder; output in [-1, 1].
  torch::Tensor reconstruct(const torch::Tensor& img);

  const FeatureExtractorSpec& spec() const noexcept { return spec_; }
  int64_t layer_count() const noexcept { return spec_.stages; }
  std::vector<LayerShape> layer_shapes(int64_t resolution) const;

  // Freezing disables gradients for every parameter and switches to eval mode.
  void freeze();
  void unfreeze();
  bool frozen() const noexcept { return frozen_; }

  std::vector<NamedTensor> encoder_parameters() const;

 private:
  FeatureExtractorSpec spec_;
  torch::nn::ModuleList encoder_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
  bool frozen_ = false;
};
TORCH_MODULE(FeatureExtractor);

// Inference-mode translation. Throws ShapeError on resolution mismatch.
ImageTensor generator_forward(Generator& g, const ImageTensor& x);

// Inference-mode patch scores. Throws ShapeError for non-image input.
PatchScoreGrid discriminator_forward(Discriminator& d, const ImageTensor& img);

// Differentiable w.r.t. `img`; never w.r.t. the extractor, which must be
// frozen (FrozenViolation otherwise).
FeatureStack extract_features(FeatureExtractor& f, const torch::Tensor& img);

// Copies of every parameter, keyed by name, detached and cloned.
std::vector<NamedTensor> snapshot_parameters(const torch::nn::Module& module);
bool parameters_equal(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b);
int64_t parameter_count(const torch::nn::Module& module);

// N(0, 0.02) weights and zero biases for every convolution.
void init_weights(torch::nn::Module& module);

struct BundleSpec {
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  FeatureExtractorSpec extractor;

  bool operator==(const BundleSpec&) const = default;
};

// G1: X -> Y, G2: Y -> X, D1 judges Y, D2 judges X, F the frozen extractor.
struct NetworkBundle {
  BundleSpec spec;
  Generator g1{nullptr};
  Generator g2{nullptr};
  Discriminator d1{nullptr};
  Discriminator d2{nullptr};
  FeatureExtractor f{nullptr};

  // Deterministic construction from `seed`. A null extractor is replaced by a
  // freshly initialized, frozen one.
  static NetworkBundle create(const BundleSpec& spec, uint64_t seed,
                              FeatureExtractor extractor = FeatureExtractor{nullptr});

  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;

  // Every tensor, prefixed "g1.", "g2.", "d1.", "d2.", "f.".
  std::vector<NamedTensor> named_tensors() const;
  void to(torch::Dtype dtype);
};

struct PretrainOptions {
  FeatureExtractorSpec spec;
  int64_t epochs = 20;
  uint64_t seed = 0;
  int64_t batch_size = 16;
  double learning_rate = 1e-3;
  double holdout_fraction = 0.1;
};

struct PretrainResult {
  FeatureExtractor extractor{nullptr};
  // Held-out reconstruction MSE before training and after each epoch.
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
  std::vector<double> holdout_history;
};

// Trains the extractor as the encoder half of a reconstruction autoencoder on
// `corpus`, holding out a seeded fraction for evaluation. The returned
// extractor is frozen. Throws TrainingDiverged on a non-finite loss.
PretrainResult pretrain_feature_extractor(const DomainDataset& corpus, const PretrainOptions& options);

}  // namespace cmg
