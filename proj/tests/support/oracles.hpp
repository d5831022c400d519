#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. Deliberately loop-based and independent of the vectorized code.

#include <cstdint>
#include <random>
#include <vector>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "cmg/image.hpp"
#include "cmg/metrics.hpp"

namespace cmg::testing {

inline cmg::Plane random_plane(int64_t side, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  cmg::Plane p{side, std::vector<double>(static_cast<size_t>(side * side))};
  for (double& v : p.values) v = u(rng);
  return p;
}

// Smooth image so blur and noise have a clear effect on structure metrics.
inline cmg::ImageTensor smooth_image(int64_t side, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto coarse = torch::rand({1, 1, side / 8, side / 8}, gen);
  auto up = torch::nn::functional::interpolate(
      coarse, torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{side, side}).mode(torch::kBilinear).align_corners(false));
  return cmg::ImageTensor(up * 1.6 - 0.8);
}

inline double ssim_oracle(const Plane& a, const Plane& b) {
  const auto g = cmg::gaussian_window(11, 1.5);
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int64_t n = 0;
  for (int64_t r = 0; r + 11 <= a.side; ++r)
    for (int64_t c = 0; c + 11 <= a.side; ++c) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          ma += g[i] * g[j] * a.at(r + i, c + j);
          mb += g[i] * g[j] * b.at(r + i, c + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double da = a.at(r + i, c + j) - ma, db = b.at(r + i, c + j) - mb;
          va += g[i] * g[j] * da * da;
          vb += g[i] * g[j] * db * db;
          cov += g[i] * g[j] * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return total / static_cast<double>(n);
}

inline double uqi_oracle(const Plane& a, const Plane& b) {
  double total = 0.0;
  int64_t n = 0;
  for (int64_t r = 0; r + 8 <= a.side; ++r)
    for (int64_t c = 0; c + 8 <= a.side; ++c) {
      double ma = 0, mb = 0;
      bool identical = true;
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          ma += a.at(r + i, c + j) / 64.0;
          mb += b.at(r + i, c + j) / 64.0;
          identical = identical && a.at(r + i, c + j) == b.at(r + i, c + j);
        }
      if (identical) {
        total += 1.0;
        ++n;
        continue;
      }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          const double da = a.at(r + i, c + j) - ma, db = b.at(r + i, c + j) - mb;
          va += da * da / 64.0;
          vb += db * db / 64.0;
          cov += da * db / 64.0;
        }
      if (va + vb <= 1e-12 || ma * ma + mb * mb <= 1e-12) continue;
      total += 4 * cov * ma * mb / ((va + vb) * (ma * ma + mb * mb));
      ++n;
    }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

// Direct evaluation of the normalized channel inner products for one (d, h, w) map.
inline std::vector<std::vector<double>> gram_oracle(const torch::Tensor& fm) {
  const auto a = fm.to(torch::kFloat64).contiguous();
  const int64_t d = a.size(0), h = a.size(1), w = a.size(2);
  auto acc = a.accessor<double, 3>();
  std::vector<std::vector<double>> g(d, std::vector<double>(d, 0.0));
  for (int64_t m = 0; m < d; ++m)
    for (int64_t n = 0; n < d; ++n) {
      double s = 0.0;
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) s += acc[m][i][j] * acc[n][i][j];
      g[m][n] = s / static_cast<double>(h * w * d);
    }
  return g;
}

}  // namespace cmg::testing
