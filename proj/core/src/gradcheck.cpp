#include "cmg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cmg/training.hpp"

namespace cmg {

BundleSpec toy_bundle_spec(int64_t resolution) {
  BundleSpec spec;
  spec.generator = GeneratorSpec{resolution, 1, 0, 1};
  spec.discriminator = DiscriminatorSpec{1, 1};
  spec.extractor = FeatureExtractorSpec{1, 4};
  return spec;
}

GradCheckResult check_generator_gradients(const GradCheckOptions& options) {
  const BundleSpec spec = toy_bundle_spec(options.resolution);
  NetworkBundle net = NetworkBundle::create(spec, options.seed);
  net.to(torch::kDouble);
  // Weights of the toy networks are larger than the N(0, 0.02) training
  // init so every term contributes a well-scaled gradient.
  {
    torch::NoGradGuard no_grad;
    torch::manual_seed(options.seed + 1);
    for (auto* m : {static_cast<torch::nn::Module*>(net.g1.get()), static_cast<torch::nn::Module*>(net.g2.get()),
                    static_cast<torch::nn::Module*>(net.d1.get()), static_cast<torch::nn::Module*>(net.d2.get()),
                    static_cast<torch::nn::Module*>(net.f.get())}) {
      for (auto& p : m->parameters()) p.copy_(torch::randn_like(p) * 0.5);
    }
  }
  const auto opts = torch::TensorOptions().dtype(torch::kDouble);
  const auto x = torch::rand({options.batch, 1, options.resolution, options.resolution}, opts) * 2 - 1;
  const auto y = torch::rand({options.batch, 1, options.resolution, options.resolution}, opts) * 2 - 1;
  const LossWeights weights = LossWeights::defaults(spec.extractor.stages);

  auto objective = [&]() {
    return combine_objective(
        generator_objective_terms(net, x, y, weights, AdversarialMode::non_saturating), weights);
  };

  GradCheckResult result;
  result.trainable_parameters = parameter_count(*net.g1) + parameter_count(*net.g2) +
                                parameter_count(*net.d1) + parameter_count(*net.d2);

  for (auto& p : net.generator_parameters()) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  objective().backward();

  std::vector<NamedTensor> named;
  for (const auto& item : net.g1->named_parameters(true)) named.emplace_back("g1." + item.key(), item.value());
  for (const auto& item : net.g2->named_parameters(true)) named.emplace_back("g2." + item.key(), item.value());

  torch::NoGradGuard no_grad;
  for (auto& [name, param] : named) {
    const auto analytic = param.grad().detach().clone().reshape({-1});
    auto flat = param.view({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double original = flat[i].item<double>();
      flat[i] = original + options.step;
      const double plus = objective().item<double>();
      flat[i] = original - options.step;
      const double minus = objective().item<double>();
      flat[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[i].item<double>();
      const double denom = std::max({std::abs(a), std::abs(numeric), options.magnitude_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_relative_error || result.worst_parameter.empty()) {
        result.max_relative_error = rel;
        result.worst_parameter = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  result.passed = result.max_relative_error < options.tolerance;
  return result;
}

}  // namespace cmg
