#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "cmg/breakdown.hpp"
#include "cmg/networks.hpp"

namespace cmg {

enum class AdversarialMode { saturating, non_saturating };

// Discriminator outputs are clamped to [eps, 1 - eps] before any log.
inline constexpr double kScoreEpsilon = 1e-7;

struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_cP = 1.0;
  double lambda_cS = 10.0;
  std::vector<double> lambda_cp_layers;  // one per extractor layer
  std::vector<double> lambda_cs_layers;  // one per extractor layer

  static LossWeights defaults(int64_t layers);
  // Throws ConfigError on negative entries or a layer-count mismatch.
  void validate(int64_t layers) const;
  // False when both feature-based terms carry zero weight; they are then
  // never constructed.
  bool feature_terms_enabled() const { return lambda_cP != 0.0 || lambda_cS != 0.0; }
};

// E[log D(y)] + E[log(1 - D(G(x)))], means over batch and patch grid. This is
// the value the discriminator ascends.
torch::Tensor adversarial_value(const PatchScoreGrid& d_real, const PatchScoreGrid& d_fake);

// saturating: E[log(1 - D(G(x)))]; non_saturating: -E[log D(G(x))].
torch::Tensor generator_adversarial_loss(const PatchScoreGrid& d_fake, AdversarialMode mode);

// mean|x - x_rec| + mean|y - y_rec|. Throws ShapeError on mismatched pairs.
torch::Tensor cycle_consistency_loss(const torch::Tensor& x, const torch::Tensor& x_rec,
                                     const torch::Tensor& y, const torch::Tensor& y_rec);

// Channel correlations normalized by 1 / (h * w * d). Accepts (d, h, w) and
// returns (d, d), or (batch, d, h, w) and returns (batch, d, d). The result is
// exactly symmetric. Throws NumericalError on non-finite features.
torch::Tensor gram_matrix(const torch::Tensor& feature_map);

// sum_i lambda_cp_i * (mean|F_i(x) - F_i(x_rec)| + mean|F_i(y) - F_i(y_rec)|).
torch::Tensor cycle_perceptual_loss(const FeatureStack& fx, const FeatureStack& fx_rec,
                                    const FeatureStack& fy, const FeatureStack& fy_rec,
                                    const LossWeights& w);

// sum_i lambda_cs_i / (4 d_i^2) * (||Gr_i(x) - Gr_i(x_rec)||_F^2 +
// ||Gr_i(y) - Gr_i(y_rec)||_F^2), averaged over the batch.
torch::Tensor cycle_style_loss(const FeatureStack& fx, const FeatureStack& fx_rec,
                               const FeatureStack& fy, const FeatureStack& fy_rec,
                               const LossWeights& w);

// Differentiable terms of one generator objective evaluation. Feature terms
// are undefined tensors when skipped.
struct ObjectiveTerms {
  torch::Tensor adv_1;
  torch::Tensor adv_2;
  torch::Tensor cyc;
  torch::Tensor cPercep;
  torch::Tensor cStyle;
};

// adv_1 + adv_2 + lambda_cP * cPercep + lambda_cyc * cyc + lambda_cS * cStyle
// with skipped terms omitted from the graph.
torch::Tensor combine_objective(const ObjectiveTerms& terms, const LossWeights& w);

// Scalar recombination of already evaluated parts (parts.total is ignored).
// Throws NumericalError naming the first non-finite term.
LossBreakdown total_objective(const LossBreakdown& parts, const LossWeights& w);

}  // namespace cmg
