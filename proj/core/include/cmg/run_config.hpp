#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cmg/synthbench.hpp"
#include "cmg/training.hpp"

namespace cmg {

enum class Variant { cycle_gan, cycle_medgan };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

// Everything a command can be configured with. Plain "key=value" text with
// '#' comments; see config_keys() for the accepted keys.
struct RunConfig {
  TrainConfig train;
  SynthSpec synth;
  FeatureExtractorSpec extractor_spec;
  int64_t pretrain_epochs = 20;
  int64_t pretrain_batch_size = 16;
  double pretrain_learning_rate = 1e-3;
  double val_fraction = 0.2;
  uint64_t split_seed = 0;
  bool evaluate_each_epoch = true;
  Variant variant = Variant::cycle_medgan;
  std::filesystem::path data_root;
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path extractor;

  // cycle_gan forces lambda_cP = lambda_cS = 0; cycle_medgan requires an
  // extractor path. Throws ConfigError.
  void apply_variant_rules();
};

const std::vector<std::string>& config_keys();

// Sets one key; unknown keys and malformed values throw ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Applies every assignment in `text` on top of `cfg`.
void apply_config_text(RunConfig& cfg, const std::string& text);
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

// Effective configuration as config text; apply_config_text on a default
// RunConfig reproduces it.
std::string to_config_text(const RunConfig& cfg);

// Applies the training configuration and network shapes archived in a
// checkpoint on top of `base`. Throws IncompatibleCheckpoint.
RunConfig config_from_checkpoint(const std::filesystem::path& checkpoint, RunConfig base = {});

}  // namespace cmg
