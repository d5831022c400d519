#include <benchmark/benchmark.h>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "cmg/losses.hpp"
#include "cmg/metrics.hpp"
#include "cmg/networks.hpp"
#include "cmg/training.hpp"

namespace {

cmg::ImageTensor random_image(int64_t batch, int64_t side, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return cmg::ImageTensor(torch::rand({batch, 1, side, side}, gen) * 2 - 1);
}

void BM_Ssim(benchmark::State& state) {
  const auto a = random_image(1, state.range(0), 1), b = random_image(1, state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(cmg::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(256);

void BM_Vif(benchmark::State& state) {
  const auto a = random_image(1, state.range(0), 1), b = random_image(1, state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(cmg::vif(a, b));
}
BENCHMARK(BM_Vif)->Arg(64)->Arg(256);

void BM_GramMatrix(benchmark::State& state) {
  const auto fm = torch::randn({16, state.range(0), 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(cmg::gram_matrix(fm));
}
BENCHMARK(BM_GramMatrix)->Arg(16)->Arg(64);

// range(0): base filters, range(1): batch size; 64x64 inputs.
void BM_GeneratorForward(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::manual_seed(0);
  cmg::Generator g(cmg::GeneratorSpec{64, state.range(0), 4, 2});
  cmg::init_weights(*g);
  const auto x = random_image(state.range(1), 64, 3);
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(cmg::generator_forward(g, x));
}
BENCHMARK(BM_GeneratorForward)->Args({16, 1})->Args({16, 16})->Args({32, 16})->Unit(benchmark::kMillisecond);

// One full discriminator + generator update at the acceptance-run scale.
void BM_TrainStep(benchmark::State& state) {
  torch::set_num_threads(1);
  cmg::TrainConfig cfg;
  cfg.generator.base_filters = state.range(0);
  cfg.discriminator.base_filters = state.range(0);
  torch::manual_seed(1);
  cmg::FeatureExtractor f(cmg::FeatureExtractorSpec{});
  cmg::init_weights(*f);
  f->freeze();
  auto train_state = cmg::initialize_state(cfg, f);
  const auto x = random_image(cfg.batch_size, 64, 4), y = random_image(cfg.batch_size, 64, 5);
  for (auto _ : state) benchmark::DoNotOptimize(cmg::train_step(train_state, x, y, cfg));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
