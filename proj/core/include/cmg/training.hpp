#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "cmg/adam.hpp"
#include "cmg/breakdown.hpp"
#include "cmg/data.hpp"
#include "cmg/losses.hpp"
#include "cmg/metrics.hpp"
#include "cmg/networks.hpp"

namespace cmg {

inline constexpr const char* kCodeVersion = "cmg-0.1.0";

struct TrainConfig {
  int64_t epochs = 50;
  int64_t batch_size = 16;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  LossWeights weights = LossWeights::defaults(4);
  uint64_t seed = 0;
  AdversarialMode adv_mode = AdversarialMode::non_saturating;
  int64_t checkpoint_every = 200;
  int64_t resolution = 64;
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;

  // Throws ConfigError when an invariant is violated.
  void validate() const;
  BundleSpec bundle_spec(const FeatureExtractorSpec& extractor) const;
};

// Canonical "key=value" lines for every TrainConfig field, in fixed order.
std::string canonical_string(const TrainConfig& cfg);
// FNV-1a of canonical_string, as 16 hex digits.
std::string config_hash(const TrainConfig& cfg);

std::string adv_mode_name(AdversarialMode mode);
AdversarialMode parse_adv_mode(const std::string& name);

// Networks, optimizer moments and data-stream position. Not copyable: the
// optimizers alias the network parameters.
struct TrainState {
  int64_t step = 0;
  int64_t epoch = 0;
  IteratorPosition position;
  uint64_t seed = 0;
  NetworkBundle networks;
  std::unique_ptr<Adam> generator_optimizer;
  std::unique_ptr<Adam> discriminator_optimizer;
};

// Fresh networks seeded from cfg.seed, with `extractor` (frozen) as F.
TrainState initialize_state(const TrainConfig& cfg, FeatureExtractor extractor);

// (Re)creates both optimizers over the state's parameters from cfg's Adam
// settings, with zeroed moments. Does not validate cfg.
void attach_optimizers(TrainState& state, const TrainConfig& cfg);

// Generator-side objective terms for one (x, y) batch: translations, cycle
// reconstructions, adversarial terms against the current discriminators and,
// when weighted, the feature terms. Differentiable w.r.t. the generators.
ObjectiveTerms generator_objective_terms(NetworkBundle& net, const torch::Tensor& x,
                                         const torch::Tensor& y, const LossWeights& weights,
                                         AdversarialMode mode);

// One discriminator ascent step on both adversarial values, then one
// generator descent step on the full objective. Terms with zero weight are
// never built and are logged as 0. Returns the generator-step breakdown.
// Throws FrozenViolation if F is trainable and TrainingDiverged on a
// non-finite loss.
LossBreakdown train_step(TrainState& state, const ImageTensor& x, const ImageTensor& y,
                         const TrainConfig& cfg);

struct RunOptions {
  std::filesystem::path run_dir;
  // Contents of <run_dir>/run_manifest; skipped when empty.
  std::string manifest_text;
  // Stop once state.step reaches this value (before the configured end).
  std::optional<int64_t> stop_at_step;
  bool evaluate_each_epoch = true;
  std::string model_name = "model";
  std::function<void(int64_t step, const LossBreakdown&)> on_step;
};

// Continues `state` until cfg.epochs epochs are done: epochs *
// floor(min(|X|,|Y|)/batch) steps in total. Appends losses.csv every step,
// writes val_metrics.csv every epoch when `val` is non-empty and checkpoints
// to <run_dir>/ckpt_<step> every cfg.checkpoint_every steps and at the end.
void continue_training(TrainState& state, const TrainConfig& cfg, const DomainDataset& dx,
                       const DomainDataset& dy, const PairedValidationSet& val,
                       const RunOptions& options);

TrainState train(const TrainConfig& cfg, const DomainDataset& dx, const DomainDataset& dy,
                 FeatureExtractor extractor, const PairedValidationSet& val,
                 const RunOptions& options);

// <path>/manifest.json + <path>/tensors.bin. Throws CheckpointError.
void save_checkpoint(const TrainState& state, const TrainConfig& cfg,
                     const std::filesystem::path& path);
// Rebuilds the state for `cfg`; an architecture or resolution mismatch with
// the archive throws IncompatibleCheckpoint.
TrainState load_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg);

// Manifest of a checkpoint without loading tensors.
struct CheckpointInfo {
  int64_t step = 0;
  int64_t resolution = 0;
  std::string config_hash;
  std::string manifest_json;
};
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, int64_t step);

}  // namespace cmg
