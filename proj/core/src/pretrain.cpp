#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cmg/adam.hpp"
#include "cmg/errors.hpp"
#include "cmg/networks.hpp"
#include "cmg/rng.hpp"

namespace cmg {
namespace {

double holdout_loss(FeatureExtractor& f, const DomainDataset& holdout) {
  torch::NoGradGuard no_grad;
  const auto& x = holdout.samples().tensor();
  return torch::mse_loss(f->reconstruct(x), x).item<double>();
}

}  // namespace

PretrainResult pretrain_feature_extractor(const DomainDataset& corpus, const PretrainOptions& options) {
  if (corpus.size() == 0) throw DatasetEmpty("pretraining corpus is empty");
  if (options.epochs < 0) throw ConfigError("epochs must be non-negative");

  torch::manual_seed(options.seed);
  FeatureExtractor f(options.spec);
  init_weights(*f);

  auto split_rng = seeded_engine(options.seed, 0x50u);
  std::vector<int64_t> order(static_cast<size_t>(corpus.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), split_rng);
  auto n_holdout = static_cast<int64_t>(
      std::ceil(options.holdout_fraction * static_cast<double>(corpus.size())));
  n_holdout = std::clamp<int64_t>(n_holdout, 1, corpus.size());
  const std::vector<int64_t> holdout_idx(order.begin(), order.begin() + n_holdout);
  std::vector<int64_t> train_idx(order.begin() + n_holdout, order.end());
  if (train_idx.empty()) train_idx = holdout_idx;
  const DomainDataset holdout = corpus.subset(holdout_idx);
  const DomainDataset train = corpus.subset(train_idx);

  PretrainResult result;
  result.initial_holdout_loss = holdout_loss(f, holdout);
  result.final_holdout_loss = result.initial_holdout_loss;

  std::vector<NamedTensor> params;
  for (const auto& item : f->named_parameters(true)) params.emplace_back(item.key(), item.value());
  AdamOptions adam_options;
  adam_options.learning_rate = options.learning_rate;
  adam_options.beta1 = 0.9;
  Adam optimizer(params, adam_options);

  const int64_t batch = std::min(options.batch_size, train.size());
  const int64_t steps_per_epoch = train.size() / batch;
  for (int64_t epoch = 0; epoch < options.epochs; ++epoch) {
    auto rng = seeded_engine(options.seed, 0x51u, static_cast<uint64_t>(epoch));
    std::vector<int64_t> perm(static_cast<size_t>(train.size()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const std::span<const int64_t> idx(perm.data() + s * batch, static_cast<size_t>(batch));
      const auto x = train.gather(idx).tensor();
      optimizer.zero_grad();
      auto loss = torch::mse_loss(f->reconstruct(x), x);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw TrainingDiverged("extractor pretraining loss became non-finite at epoch " +
                               std::to_string(epoch));
      }
      loss.backward();
      optimizer.step();
    }
    result.final_holdout_loss = holdout_loss(f, holdout);
    result.holdout_history.push_back(result.final_holdout_loss);
  }
  f->freeze();
  result.extractor = f;
  return result;
}

}  // namespace cmg
