#include "cmg/networks.hpp"

#include <algorithm>

#include "cmg/errors.hpp"

namespace cmg {
namespace nn = torch::nn;

namespace {

nn::InstanceNorm2d instance_norm(int64_t channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(false).eps(1e-5));
}

nn::LeakyReLU leaky() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

void append_named(std::vector<NamedTensor>& out, const std::string& prefix,
                  const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    out.emplace_back(prefix + item.key(), item.value());
  }
}

}  // namespace

int64_t DiscriminatorSpec::receptive_field() const {
  int64_t rf = 1;
  rf = (rf - 1) * 1 + 4;  // head
  rf = (rf - 1) * 1 + 4;  // stride-1 stage
  for (int64_t i = 0; i < layers; ++i) rf = (rf - 1) * 2 + 4;
  return rf;
}

// Convolutions feeding an instance norm carry no bias: the norm removes any
// per-channel offset, so such a bias would never receive a gradient.
ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
  body_ = register_module(
      "body", nn::Sequential(nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).bias(false)),
                             instance_norm(channels), nn::ReLU(), nn::ReflectionPad2d(1),
                             nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).bias(false)),
                             instance_norm(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
  if (spec.base_filters < 1 || spec.residual_blocks < 0 || spec.downsamplings < 0) {
    throw ShapeError("invalid generator spec");
  }
  if (spec.input_resolution % (int64_t{1} << spec.downsamplings) != 0) {
    throw ShapeError("resolution " + std::to_string(spec.input_resolution) +
                     " not divisible by 2^downsamplings");
  }
  nn::Sequential seq;
  const int64_t f = spec.base_filters;
  seq->push_back(nn::ReflectionPad2d(3));
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(1, f, 7).bias(false)));
  seq->push_back(instance_norm(f));
  seq->push_back(nn::ReLU());
  int64_t channels = f;
  for (int64_t i = 0; i < spec.downsamplings; ++i) {
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(channels, channels * 2, 3).stride(2).padding(1).bias(false)));
    seq->push_back(instance_norm(channels * 2));
    seq->push_back(nn::ReLU());
    channels *= 2;
  }
  for (int64_t i = 0; i < spec.residual_blocks; ++i) seq->push_back(ResidualBlock(channels));
  for (int64_t i = 0; i < spec.downsamplings; ++i) {
    seq->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(channels, channels / 2, 3).stride(2).padding(1).output_padding(1).bias(false)));
    seq->push_back(instance_norm(channels / 2));
    seq->push_back(nn::ReLU());
    channels /= 2;
  }
  seq->push_back(nn::ReflectionPad2d(3));
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(channels, 1, 7)));
  seq->push_back(nn::Tanh());
  model_ = register_module("model", seq);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) { return model_->forward(x); }

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
  if (spec.base_filters < 1 || spec.layers < 1) throw ShapeError("invalid discriminator spec");
  const int64_t f = spec.base_filters;
  nn::Sequential seq;
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(1, f, 4).stride(2).padding(1)));
  seq->push_back(leaky());
  int64_t channels = f;
  for (int64_t i = 1; i < spec.layers; ++i) {
    const int64_t next = std::min(f << i, 8 * f);
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(channels, next, 4).stride(2).padding(1).bias(false)));
    seq->push_back(instance_norm(next));
    seq->push_back(leaky());
    channels = next;
  }
  const int64_t next = std::min(f << spec.layers, 8 * f);
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(channels, next, 4).stride(1).padding(1).bias(false)));
  seq->push_back(instance_norm(next));
  seq->push_back(leaky());
  body_ = register_module("body", seq);
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(next, 1, 4).stride(1).padding(1)));
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& img) {
  return head_->forward(body_->forward(img));
}

PatchScoreGrid DiscriminatorImpl::forward(const torch::Tensor& img) {
  return torch::sigmoid(logits(img));
}

FeatureExtractorImpl::FeatureExtractorImpl(const FeatureExtractorSpec& spec) : spec_(spec) {
  if (spec.base_filters < 1 || spec.stages < 1) throw ShapeError("invalid extractor spec");
  encoder_ = register_module("encoder", nn::ModuleList());
  const int64_t f = spec.base_filters;
  encoder_->push_back(nn::Sequential(nn::Conv2d(nn::Conv2dOptions(1, f, 3).padding(1)), leaky()));
  int64_t channels = f;
  for (int64_t i = 1; i < spec.stages; ++i) {
    encoder_->push_back(nn::Sequential(
        nn::Conv2d(nn::Conv2dOptions(channels, channels * 2, 4).stride(2).padding(1)), leaky()));
    channels *= 2;
  }
  nn::Sequential dec;
  for (int64_t i = 1; i < spec.stages; ++i) {
    dec->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(channels, channels / 2, 4).stride(2).padding(1)));
    dec->push_back(leaky());
    channels /= 2;
  }
  dec->push_back(nn::Conv2d(nn::Conv2dOptions(channels, 1, 3).padding(1)));
  dec->push_back(nn::Tanh());
  decoder_ = register_module("decoder", dec);
}

std::vector<torch::Tensor> FeatureExtractorImpl::encode(const torch::Tensor& img) {
  std::vector<torch::Tensor> maps;
  maps.reserve(encoder_->size());
  torch::Tensor h = img;
  for (const auto& stage : *encoder_) {
    h = stage->as<nn::Sequential>()->forward(h);
    maps.push_back(h);
  }
  return maps;
}

torch::Tensor FeatureExtractorImpl::reconstruct(const torch::Tensor& img) {
  return decoder_->forward(encode(img).back());
}

std::vector<LayerShape> FeatureExtractorImpl::layer_shapes(int64_t resolution) const {
  std::vector<LayerShape> shapes;
  int64_t side = resolution;
  int64_t depth = spec_.base_filters;
  shapes.push_back({side, side, depth});
  for (int64_t i = 1; i < spec_.stages; ++i) {
    side = (side + 2 - 4) / 2 + 1;
    depth *= 2;
    shapes.push_back({side, side, depth});
  }
  return shapes;
}

void FeatureExtractorImpl::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
  frozen_ = true;
}

void FeatureExtractorImpl::unfreeze() {
  for (auto& p : parameters()) p.set_requires_grad(true);
  train();
  frozen_ = false;
}

std::vector<NamedTensor> FeatureExtractorImpl::encoder_parameters() const {
  std::vector<NamedTensor> out;
  append_named(out, "encoder.", *encoder_);
  return out;
}

ImageTensor generator_forward(Generator& g, const ImageTensor& x) {
  const auto shape = x.shape();
  if (shape.height != g->spec().input_resolution) {
    throw ShapeError("generator expects resolution " + std::to_string(g->spec().input_resolution) +
                     ", got " + std::to_string(shape.height));
  }
  torch::NoGradGuard no_grad;
  return ImageTensor(g->forward(x.tensor()));
}

PatchScoreGrid discriminator_forward(Discriminator& d, const ImageTensor& img) {
  const auto shape = img.shape();
  const int64_t min_side = int64_t{1} << d->spec().layers;
  if (shape.height < 2 * min_side) {
    throw ShapeError("image too small for discriminator: " + std::to_string(shape.height));
  }
  torch::NoGradGuard no_grad;
  return d->forward(img.tensor());
}

FeatureStack extract_features(FeatureExtractor& f, const torch::Tensor& img) {
  if (!f->frozen()) throw FrozenViolation("feature extractor must be frozen before use");
  return FeatureStack{f->encode(img)};
}

std::vector<NamedTensor> snapshot_parameters(const torch::nn::Module& module) {
  std::vector<NamedTensor> out;
  for (const auto& item : module.named_parameters(true)) {
    out.emplace_back(item.key(), item.value().detach().clone());
  }
  return out;
}

bool parameters_equal(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first) return false;
    const auto& ta = a[i].second;
    const auto& tb = b[i].second;
    if (ta.sizes() != tb.sizes() || ta.dtype() != tb.dtype()) return false;
    const auto ca = ta.contiguous();
    const auto cb = tb.contiguous();
    if (std::memcmp(ca.data_ptr(), cb.data_ptr(), ca.nbytes()) != 0) return false;
  }
  return true;
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters(true)) n += p.numel();
  return n;
}

void init_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  module.apply([](nn::Module& m) {
    if (auto* conv = m.as<nn::Conv2d>()) {
      nn::init::normal_(conv->weight, 0.0, 0.02);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* deconv = m.as<nn::ConvTranspose2d>()) {
      nn::init::normal_(deconv->weight, 0.0, 0.02);
      if (deconv->bias.defined()) nn::init::zeros_(deconv->bias);
    }
  });
}

NetworkBundle NetworkBundle::create(const BundleSpec& spec, uint64_t seed, FeatureExtractor extractor) {
  torch::manual_seed(seed);
  NetworkBundle b;
  b.spec = spec;
  b.g1 = Generator(spec.generator);
  init_weights(*b.g1);
  b.g2 = Generator(spec.generator);
  init_weights(*b.g2);
  b.d1 = Discriminator(spec.discriminator);
  init_weights(*b.d1);
  b.d2 = Discriminator(spec.discriminator);
  init_weights(*b.d2);
  if (extractor) {
    b.f = extractor;
    b.spec.extractor = extractor->spec();
  } else {
    b.f = FeatureExtractor(spec.extractor);
    init_weights(*b.f);
  }
  b.f->freeze();
  return b;
}

std::vector<torch::Tensor> NetworkBundle::generator_parameters() const {
  auto params = g1->parameters();
  auto more = g2->parameters();
  params.insert(params.end(), more.begin(), more.end());
  return params;
}

std::vector<torch::Tensor> NetworkBundle::discriminator_parameters() const {
  auto params = d1->parameters();
  auto more = d2->parameters();
  params.insert(params.end(), more.begin(), more.end());
  return params;
}

std::vector<NamedTensor> NetworkBundle::named_tensors() const {
  std::vector<NamedTensor> out;
  append_named(out, "g1.", *g1);
  append_named(out, "g2.", *g2);
  append_named(out, "d1.", *d1);
  append_named(out, "d2.", *d2);
  append_named(out, "f.", *f);
  return out;
}

void NetworkBundle::to(torch::Dtype dtype) {
  g1->to(dtype);
  g2->to(dtype);
  d1->to(dtype);
  d2->to(dtype);
  f->to(dtype);
}

}  // namespace cmg
