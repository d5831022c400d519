#include "cmg/losses.hpp"

#include "cmg/errors.hpp"

namespace cmg {
namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": shape mismatch");
  }
}

void require_matching_stacks(const FeatureStack& a, const FeatureStack& b, size_t layers) {
  if (a.size() != layers || b.size() != layers) {
    throw ShapeError("feature stack layer count mismatch: expected " + std::to_string(layers));
  }
  for (size_t i = 0; i < layers; ++i) require_same_shape(a.maps[i], b.maps[i], "feature stack");
}

}  // namespace

LossWeights LossWeights::defaults(int64_t layers) {
  LossWeights w;
  w.lambda_cp_layers.assign(static_cast<size_t>(layers), 1.0);
  w.lambda_cs_layers.assign(static_cast<size_t>(layers), 1.0);
  return w;
}

void LossWeights::validate(int64_t layers) const {
  if (lambda_cyc < 0 || lambda_cP < 0 || lambda_cS < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (static_cast<int64_t>(lambda_cp_layers.size()) != layers ||
      static_cast<int64_t>(lambda_cs_layers.size()) != layers) {
    throw ConfigError("per-layer weight vectors must have " + std::to_string(layers) + " entries");
  }
  for (double v : lambda_cp_layers) {
    if (v < 0) throw ConfigError("per-layer weights must be non-negative");
  }
  for (double v : lambda_cs_layers) {
    if (v < 0) throw ConfigError("per-layer weights must be non-negative");
  }
}

torch::Tensor adversarial_value(const PatchScoreGrid& d_real, const PatchScoreGrid& d_fake) {
  const auto real = d_real.clamp(kScoreEpsilon, 1.0 - kScoreEpsilon);
  const auto fake = d_fake.clamp(kScoreEpsilon, 1.0 - kScoreEpsilon);
  return torch::log(real).mean() + torch::log(1.0 - fake).mean();
}

torch::Tensor generator_adversarial_loss(const PatchScoreGrid& d_fake, AdversarialMode mode) {
  const auto fake = d_fake.clamp(kScoreEpsilon, 1.0 - kScoreEpsilon);
  if (mode == AdversarialMode::saturating) return torch::log(1.0 - fake).mean();
  return -torch::log(fake).mean();
}

torch::Tensor cycle_consistency_loss(const torch::Tensor& x, const torch::Tensor& x_rec,
                                     const torch::Tensor& y, const torch::Tensor& y_rec) {
  require_same_shape(x, x_rec, "cycle_consistency_loss(x, x_rec)");
  require_same_shape(y, y_rec, "cycle_consistency_loss(y, y_rec)");
  return (x - x_rec).abs().mean() + (y - y_rec).abs().mean();
}

torch::Tensor gram_matrix(const torch::Tensor& feature_map) {
  if (feature_map.dim() != 3 && feature_map.dim() != 4) {
    throw ShapeError("gram_matrix expects (d, h, w) or (batch, d, h, w)");
  }
  if (!torch::isfinite(feature_map).all().item<bool>()) {
    throw NumericalError("non-finite values in feature map");
  }
  const bool batched = feature_map.dim() == 4;
  const auto fm = batched ? feature_map : feature_map.unsqueeze(0);
  const int64_t b = fm.size(0), d = fm.size(1), h = fm.size(2), w = fm.size(3);
  const auto flat = fm.reshape({b, d, h * w});
  auto gram = torch::bmm(flat, flat.transpose(1, 2)) / static_cast<double>(h * w * d);
  gram = (gram + gram.transpose(1, 2)) * 0.5;
  return batched ? gram : gram.squeeze(0);
}

torch::Tensor cycle_perceptual_loss(const FeatureStack& fx, const FeatureStack& fx_rec,
                                    const FeatureStack& fy, const FeatureStack& fy_rec,
                                    const LossWeights& w) {
  const size_t layers = w.lambda_cp_layers.size();
  require_matching_stacks(fx, fx_rec, layers);
  require_matching_stacks(fy, fy_rec, layers);
  torch::Tensor total;
  for (size_t i = 0; i < layers; ++i) {
    auto term = w.lambda_cp_layers[i] * ((fx.maps[i] - fx_rec.maps[i]).abs().mean() +
                                         (fy.maps[i] - fy_rec.maps[i]).abs().mean());
    total = total.defined() ? total + term : term;
  }
  return total.defined() ? total : torch::zeros({});
}

torch::Tensor cycle_style_loss(const FeatureStack& fx, const FeatureStack& fx_rec,
                               const FeatureStack& fy, const FeatureStack& fy_rec,
                               const LossWeights& w) {
  const size_t layers = w.lambda_cs_layers.size();
  require_matching_stacks(fx, fx_rec, layers);
  require_matching_stacks(fy, fy_rec, layers);
  auto frobenius_sq = [](const torch::Tensor& a, const torch::Tensor& b) {
    // Per-sample squared Frobenius distance, averaged over the batch.
    return (gram_matrix(a) - gram_matrix(b)).pow(2).sum({-2, -1}).mean();
  };
  torch::Tensor total;
  for (size_t i = 0; i < layers; ++i) {
    const auto d = static_cast<double>(fx.maps[i].size(fx.maps[i].dim() == 4 ? 1 : 0));
    auto term = (w.lambda_cs_layers[i] / (4.0 * d * d)) *
                (frobenius_sq(fx.maps[i], fx_rec.maps[i]) + frobenius_sq(fy.maps[i], fy_rec.maps[i]));
    total = total.defined() ? total + term : term;
  }
  return total.defined() ? total : torch::zeros({});
}

torch::Tensor combine_objective(const ObjectiveTerms& t, const LossWeights& w) {
  auto total = t.adv_1 + t.adv_2;
  if (t.cPercep.defined()) total = total + w.lambda_cP * t.cPercep;
  total = total + w.lambda_cyc * t.cyc;
  if (t.cStyle.defined()) total = total + w.lambda_cS * t.cStyle;
  return total;
}

LossBreakdown total_objective(const LossBreakdown& parts, const LossWeights& w) {
  LossBreakdown out = parts;
  out.total = 0.0;
  if (const auto bad = out.first_non_finite(); !bad.empty()) {
    throw NumericalError("non-finite loss term: " + bad);
  }
  out.total = parts.adv_1 + parts.adv_2 + w.lambda_cP * parts.cPercep + w.lambda_cyc * parts.cyc +
              w.lambda_cS * parts.cStyle;
  return out;
}

}  // namespace cmg
