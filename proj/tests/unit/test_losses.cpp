#include <gtest/gtest.h>

#include <cmath>

#include "cmg/errors.hpp"
#include "cmg/losses.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace {

torch::Tensor gen_randn(std::vector<int64_t> shape, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn(shape, gen, torch::kFloat64);
}

cmg::LossWeights unit_weights(int64_t layers) {
  auto w = cmg::LossWeights::defaults(layers);
  w.lambda_cp_layers.assign(static_cast<size_t>(layers), 1.0);
  w.lambda_cs_layers.assign(static_cast<size_t>(layers), 1.0);
  return w;
}

using cmg::testing::gram_oracle;

TEST(Adversarial, UniformScores) {
  const auto half = torch::full({2, 1, 6, 6}, 0.5, torch::kFloat64);
  EXPECT_NEAR(cmg::adversarial_value(half, half).item<double>(), -2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(cmg::generator_adversarial_loss(half, cmg::AdversarialMode::non_saturating).item<double>(),
              std::log(2.0), 1e-12);
  EXPECT_NEAR(cmg::generator_adversarial_loss(half, cmg::AdversarialMode::saturating).item<double>(),
              -std::log(2.0), 1e-12);
}

TEST(Adversarial, OptimalDiscriminatorAndClamping) {
  const auto real = torch::full({1, 1, 4, 4}, 1.0 - cmg::kScoreEpsilon, torch::kFloat64);
  const auto fake = torch::full({1, 1, 4, 4}, cmg::kScoreEpsilon, torch::kFloat64);
  EXPECT_NEAR(cmg::adversarial_value(real, fake).item<double>(), 0.0, 1e-6);
  // Exact 0 and 1 are clamped rather than producing infinities.
  const auto v = cmg::adversarial_value(torch::zeros({1, 1, 2, 2}), torch::ones({1, 1, 2, 2}));
  EXPECT_TRUE(std::isfinite(v.item<double>()));
}

TEST(Adversarial, PatchPermutationInvariant) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  const auto real = torch::rand({2, 1, 5, 5}, gen, torch::kFloat64) * 0.9 + 0.05;
  const auto fake = torch::rand({2, 1, 5, 5}, gen, torch::kFloat64) * 0.9 + 0.05;
  const auto perm = torch::randperm(50, gen);
  const auto shuffled_real = real.flatten().index_select(0, perm).view({2, 1, 5, 5});
  EXPECT_NEAR(cmg::adversarial_value(real, fake).item<double>(),
              cmg::adversarial_value(shuffled_real, fake).item<double>(), 1e-12);
}

TEST(Adversarial, NonSaturatingDecreasesWithScore) {
  double previous = INFINITY;
  for (double s = 0.3; s <= 0.7001; s += 0.05) {
    const double v = cmg::generator_adversarial_loss(torch::full({1, 1, 2, 2}, s, torch::kFloat64),
                                                     cmg::AdversarialMode::non_saturating)
                         .item<double>();
    EXPECT_LT(v, previous);
    previous = v;
  }
}

TEST(CycleConsistency, Examples) {
  const auto x = torch::full({1, 1, 4, 4}, 0.2, torch::kFloat64);
  const auto x_rec = torch::full({1, 1, 4, 4}, 0.5, torch::kFloat64);
  const auto y = gen_randn({1, 1, 4, 4}, 1);
  EXPECT_EQ(cmg::cycle_consistency_loss(x, x, y, y).item<double>(), 0.0);
  EXPECT_NEAR(cmg::cycle_consistency_loss(x, x_rec, y, y).item<double>(), 0.3, 1e-12);
  EXPECT_THROW(cmg::cycle_consistency_loss(x, torch::zeros({1, 1, 2, 2}), y, y), cmg::ShapeError);
}

TEST(CycleConsistency, MatchesAbsoluteDifferenceOracle) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = gen_randn({2, 1, 4, 4}, seed * 4);
    const auto xr = gen_randn({2, 1, 4, 4}, seed * 4 + 1);
    const auto y = gen_randn({2, 1, 4, 4}, seed * 4 + 2);
    const auto yr = gen_randn({2, 1, 4, 4}, seed * 4 + 3);
    auto ax = x.accessor<double, 4>(), axr = xr.accessor<double, 4>();
    auto ay = y.accessor<double, 4>(), ayr = yr.accessor<double, 4>();
    double sx = 0, sy = 0;
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          sx += std::abs(ax[b][0][i][j] - axr[b][0][i][j]);
          sy += std::abs(ay[b][0][i][j] - ayr[b][0][i][j]);
        }
    EXPECT_NEAR(cmg::cycle_consistency_loss(x, xr, y, yr).item<double>(), sx / 32 + sy / 32, 1e-6);
  }
}

TEST(Gram, HandExamples) {
  const auto a = torch::tensor({2.0, 3.0}, torch::kFloat64).view({2, 1, 1});
  const auto ga = cmg::gram_matrix(a);
  EXPECT_DOUBLE_EQ(ga[0][0].item<double>(), 2.0);
  EXPECT_DOUBLE_EQ(ga[0][1].item<double>(), 3.0);
  EXPECT_DOUBLE_EQ(ga[1][0].item<double>(), 3.0);
  EXPECT_DOUBLE_EQ(ga[1][1].item<double>(), 4.5);

  const auto b = torch::tensor({1.0, 3.0}, torch::kFloat64).view({1, 2, 1});
  EXPECT_DOUBLE_EQ(cmg::gram_matrix(b)[0][0].item<double>(), 5.0);

  EXPECT_TRUE(torch::all(cmg::gram_matrix(torch::zeros({3, 4, 4})) == 0).item<bool>());
}

TEST(Gram, BatchedMatchesPerSampleAndIsSymmetricPsd) {
  const auto fm = gen_randn({3, 6, 5, 4}, 7);
  const auto batched = cmg::gram_matrix(fm);
  ASSERT_EQ(batched.sizes(), (std::vector<int64_t>{3, 6, 6}));
  for (int64_t b = 0; b < 3; ++b) {
    const auto g = batched[b];
    EXPECT_TRUE(torch::equal(g, cmg::gram_matrix(fm[b])));
    EXPECT_TRUE(torch::equal(g, g.t()));
    const auto eig = torch::linalg_eigvalsh(g);
    EXPECT_GE(eig.min().item<double>(), -1e-8);
    const auto oracle = gram_oracle(fm[b]);
    for (int64_t m = 0; m < 6; ++m)
      for (int64_t n = 0; n < 6; ++n) EXPECT_NEAR(g[m][n].item<double>(), oracle[m][n], 1e-12);
  }
}

TEST(Gram, ChannelPermutationConjugates) {
  const auto fm = gen_randn({5, 3, 3}, 11);
  const auto perm = torch::tensor({3, 0, 4, 1, 2}, torch::kLong);
  const auto g = cmg::gram_matrix(fm);
  const auto gp = cmg::gram_matrix(fm.index_select(0, perm));
  const auto expected = g.index_select(0, perm).index_select(1, perm);
  EXPECT_LE((gp - expected).abs().max().item<double>(), 1e-12);
}

TEST(Gram, NonFiniteRejected) {
  auto fm = torch::zeros({2, 2, 2}, torch::kFloat64);
  fm[0][0][0] = NAN;
  EXPECT_THROW(cmg::gram_matrix(fm), cmg::NumericalError);
}

TEST(Perceptual, Examples) {
  cmg::FeatureStack a{{torch::tensor({1.0, 2.0}, torch::kFloat64).view({1, 2, 1, 1})}};
  cmg::FeatureStack b{{torch::tensor({2.0, 4.0}, torch::kFloat64).view({1, 2, 1, 1})}};
  auto w = unit_weights(1);
  EXPECT_EQ(cmg::cycle_perceptual_loss(a, a, b, b, w).item<double>(), 0.0);
  EXPECT_NEAR(cmg::cycle_perceptual_loss(a, b, a, a, w).item<double>(), 1.5, 1e-12);
  w.lambda_cp_layers = {2.0};
  EXPECT_NEAR(cmg::cycle_perceptual_loss(a, b, a, a, w).item<double>(), 3.0, 1e-12);
  cmg::FeatureStack two{{a.maps[0], a.maps[0]}};
  EXPECT_THROW(cmg::cycle_perceptual_loss(a, two, a, a, w), cmg::ShapeError);
}

TEST(Style, Examples) {
  auto w = unit_weights(1);
  cmg::FeatureStack g2{{torch::full({1, 1, 1, 1}, std::sqrt(2.0), torch::kFloat64)}};
  cmg::FeatureStack g0{{torch::zeros({1, 1, 1, 1}, torch::kFloat64)}};
  EXPECT_NEAR(cmg::cycle_style_loss(g2, g0, g0, g0, w).item<double>(), 1.0, 1e-12);
  EXPECT_EQ(cmg::cycle_style_loss(g2, g2, g0, g0, w).item<double>(), 0.0);
}

TEST(Style, MatchesBruteForce) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    // Two layers of 3x3x2 maps, batch of 2.
    cmg::FeatureStack fx, fxr, fy, fyr;
    for (int l = 0; l < 2; ++l) {
      fx.maps.push_back(gen_randn({2, 2, 3, 3}, seed * 100 + l * 4));
      fxr.maps.push_back(gen_randn({2, 2, 3, 3}, seed * 100 + l * 4 + 1));
      fy.maps.push_back(gen_randn({2, 2, 3, 3}, seed * 100 + l * 4 + 2));
      fyr.maps.push_back(gen_randn({2, 2, 3, 3}, seed * 100 + l * 4 + 3));
    }
    auto w = unit_weights(2);
    w.lambda_cs_layers = {0.7, 1.3};
    double expected = 0.0;
    for (int l = 0; l < 2; ++l) {
      double layer = 0.0;
      for (int b = 0; b < 2; ++b) {
        for (auto [p, q] : {std::pair{&fx, &fxr}, std::pair{&fy, &fyr}}) {
          const auto ga = gram_oracle(p->maps[l][b]);
          const auto gb = gram_oracle(q->maps[l][b]);
          for (int m = 0; m < 2; ++m)
            for (int n = 0; n < 2; ++n) layer += (ga[m][n] - gb[m][n]) * (ga[m][n] - gb[m][n]);
        }
      }
      expected += w.lambda_cs_layers[l] / (4.0 * 2 * 2) * layer / 2.0;
    }
    EXPECT_NEAR(cmg::cycle_style_loss(fx, fxr, fy, fyr, w).item<double>(), expected, 1e-6);
  }
}

TEST(Style, InvariantUnderSharedChannelPermutation) {
  const auto perm = torch::tensor({2, 0, 3, 1}, torch::kLong);
  cmg::FeatureStack a{{gen_randn({1, 4, 3, 3}, 1)}}, b{{gen_randn({1, 4, 3, 3}, 2)}};
  cmg::FeatureStack ap{{a.maps[0].index_select(1, perm)}}, bp{{b.maps[0].index_select(1, perm)}};
  const auto w = unit_weights(1);
  EXPECT_NEAR(cmg::cycle_style_loss(a, b, a, a, w).item<double>(),
              cmg::cycle_style_loss(ap, bp, ap, ap, w).item<double>(), 1e-12);
}

TEST(LossTerms, NonNegativeAndZeroOnIdentity) {
  const auto w = unit_weights(2);
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const auto x = gen_randn({1, 1, 4, 4}, seed);
    const auto xr = gen_randn({1, 1, 4, 4}, seed + 1000);
    cmg::FeatureStack fa{{gen_randn({1, 3, 4, 4}, seed + 2000), gen_randn({1, 5, 2, 2}, seed + 3000)}};
    cmg::FeatureStack fb{{gen_randn({1, 3, 4, 4}, seed + 4000), gen_randn({1, 5, 2, 2}, seed + 5000)}};
    EXPECT_GE(cmg::cycle_consistency_loss(x, xr, xr, x).item<double>(), 0.0);
    EXPECT_GE(cmg::cycle_perceptual_loss(fa, fb, fb, fa, w).item<double>(), 0.0);
    EXPECT_GE(cmg::cycle_style_loss(fa, fb, fb, fa, w).item<double>(), 0.0);
    EXPECT_EQ(cmg::cycle_consistency_loss(x, x.clone(), xr, xr.clone()).item<double>(), 0.0);
    EXPECT_EQ(cmg::cycle_perceptual_loss(fa, fa, fb, fb, w).item<double>(), 0.0);
    EXPECT_EQ(cmg::cycle_style_loss(fa, fa, fb, fb, w).item<double>(), 0.0);
  }
}

TEST(TotalObjective, Arithmetic) {
  cmg::LossWeights w = unit_weights(4);
  w.lambda_cP = w.lambda_cyc = w.lambda_cS = 0.0;
  cmg::LossBreakdown parts{0.4, 0.6, 0.3, 0.2, 0.1, 0.0};
  EXPECT_DOUBLE_EQ(cmg::total_objective(parts, w).total, 1.0);

  w.lambda_cyc = 10.0;
  const auto b = cmg::total_objective({0, 0, 0.3, 0, 0, 0}, w);
  EXPECT_NEAR(b.total, 3.0, 1e-12);

  const auto d = cmg::LossWeights::defaults(4);
  const auto full = cmg::total_objective(parts, d);
  EXPECT_NEAR(full.total, 0.4 + 0.6 + d.lambda_cP * 0.2 + d.lambda_cyc * 0.3 + d.lambda_cS * 0.1, 1e-12);
}

TEST(TotalObjective, NamesNonFiniteTerm) {
  const auto w = cmg::LossWeights::defaults(4);
  try {
    cmg::total_objective({0.1, 0.1, 0.1, NAN, 0.1, 0}, w);
    FAIL() << "expected NumericalError";
  } catch (const cmg::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("cPercep"), std::string::npos);
  }
}

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW(cmg::LossWeights::defaults(4).validate(4));
  EXPECT_THROW(cmg::LossWeights::defaults(4).validate(3), cmg::ConfigError);
  auto w = cmg::LossWeights::defaults(2);
  w.lambda_cyc = -1;
  EXPECT_THROW(w.validate(2), cmg::ConfigError);
  w = cmg::LossWeights::defaults(2);
  w.lambda_cs_layers[1] = -0.5;
  EXPECT_THROW(w.validate(2), cmg::ConfigError);
  w = cmg::LossWeights::defaults(2);
  EXPECT_TRUE(w.feature_terms_enabled());
  w.lambda_cP = w.lambda_cS = 0;
  EXPECT_FALSE(w.feature_terms_enabled());
}

TEST(CombineObjective, SkipsUndefinedTerms) {
  auto w = cmg::LossWeights::defaults(4);
  cmg::ObjectiveTerms t;
  t.adv_1 = torch::tensor(0.5, torch::kFloat64);
  t.adv_2 = torch::tensor(0.25, torch::kFloat64);
  t.cyc = torch::tensor(0.1, torch::kFloat64);
  EXPECT_NEAR(cmg::combine_objective(t, w).item<double>(), 0.75 + 10 * 0.1, 1e-12);
}

}  // namespace
