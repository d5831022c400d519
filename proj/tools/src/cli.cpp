#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "cmg/archive.hpp"
#include "cmg/data.hpp"
#include "cmg/errors.hpp"
#include "cmg/gradcheck.hpp"
#include "cmg/metrics.hpp"
#include "cmg/networks.hpp"
#include "cmg/png_io.hpp"
#include "cmg/run_config.hpp"
#include "cmg/synthbench.hpp"
#include "cmg/training.hpp"

namespace cmg::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kPrecedence =
    "Settings are resolved in this order, later sources winning: built-in defaults, "
    "the configuration archived with --checkpoint (translate/evaluate), --config FILE, "
    "--set KEY=VALUE, then the dedicated flags (--seed, --variant, --resolution, --run-dir, "
    "--data-root).";

struct CommonFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<int64_t> resolution;
  std::optional<std::string> run_dir;
  std::optional<std::string> data_root;
  std::vector<std::string> set;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_data_root) {
  cmd->add_option("--config", flags.config, "key=value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "random seed");
  cmd->add_option("--variant", flags.variant, "cycle_gan or cycle_medgan")
      ->check(CLI::IsMember({"cycle_gan", "cycle_medgan"}));
  cmd->add_option("--resolution", flags.resolution, "square image side in pixels");
  cmd->add_option("--run-dir", flags.run_dir, "directory receiving every output");
  cmd->add_option("--set", flags.set, "extra KEY=VALUE override (repeatable)");
  if (with_data_root) cmd->add_option("--data-root", flags.data_root, "paired root holding X/ and Y/");
}

// `seed_key` is the config key --seed maps onto for this command.
RunConfig resolve(RunConfig cfg, const CommonFlags& flags, const std::string& seed_key = "seed") {
  if (!flags.config.empty()) cfg = load_config_file(flags.config, cfg);
  for (const auto& kv : flags.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (flags.seed) set_config_value(cfg, seed_key, std::to_string(*flags.seed));
  if (flags.variant) set_config_value(cfg, "variant", *flags.variant);
  if (flags.resolution) set_config_value(cfg, "resolution", std::to_string(*flags.resolution));
  if (flags.run_dir) cfg.run_dir = *flags.run_dir;
  if (flags.data_root) cfg.data_root = *flags.data_root;
  return cfg;
}

void require_run_dir(const RunConfig& cfg) {
  if (cfg.run_dir.empty()) throw ConfigError("no run directory given (--run-dir or key 'run_dir')");
  std::error_code ec;
  fs::create_directories(cfg.run_dir, ec);
  if (ec) throw IoError("cannot create " + cfg.run_dir.string() + ": " + ec.message());
}

void require_data_root(const RunConfig& cfg) {
  if (cfg.data_root.empty()) throw ConfigError("no data root given (--data-root or key 'data_root')");
  if (!fs::is_directory(cfg.data_root)) throw IoError("data root " + cfg.data_root.string() + " not found");
}

void write_manifest(const RunConfig& cfg) {
  write_text_file(cfg.run_dir / "run_manifest", to_config_text(cfg));
}

PairedSplit load_split(const RunConfig& cfg) {
  return split_paired(cfg.data_root, cfg.val_fraction, cfg.split_seed, cfg.train.resolution);
}

FeatureExtractor random_extractor(const RunConfig& cfg) {
  torch::manual_seed(cfg.train.seed ^ 0x46ull);
  FeatureExtractor f(cfg.extractor_spec);
  init_weights(*f);
  f->freeze();
  return f;
}

std::vector<uint8_t> to_bytes(const torch::Tensor& img) {
  const auto flat = img.detach().to(torch::kFloat32).contiguous().view({-1});
  std::vector<uint8_t> out(static_cast<size_t>(flat.numel()));
  const float* p = flat.data_ptr<float>();
  for (size_t i = 0; i < out.size(); ++i) out[i] = denormalize_u8(std::clamp(p[i], -1.0f, 1.0f));
  return out;
}

fs::path run_dir_of(const fs::path& checkpoint) {
  return fs::absolute(checkpoint).lexically_normal().parent_path();
}

// Checkpoint-based commands start from the run's manifest (when present) and
// the archived training configuration.
RunConfig checkpoint_base(const fs::path& checkpoint) {
  RunConfig base;
  const fs::path manifest = run_dir_of(checkpoint) / "run_manifest";
  if (fs::exists(manifest)) base = load_config_file(manifest, base);
  base.run_dir.clear();
  return config_from_checkpoint(checkpoint, base);
}

int cmd_synth(const CommonFlags& flags, std::ostream& out) {
  RunConfig cfg = resolve({}, flags, "synth_seed");
  require_run_dir(cfg);
  const CorpusSummary summary = generate_corpus(cfg.synth, cfg.run_dir);
  write_manifest(cfg);
  out << "wrote " << summary.images << " pairs to " << cfg.run_dir.string()
      << " (mean SSIM x vs T(x) " << std::fixed << std::setprecision(4) << summary.mean_ssim_x_tx << ")\n";
  return 0;
}

int cmd_pretrain(const CommonFlags& flags, std::ostream& out) {
  RunConfig cfg = resolve({}, flags);
  require_data_root(cfg);
  require_run_dir(cfg);
  const PairedSplit split = load_split(cfg);
  PretrainOptions opts;
  opts.spec = cfg.extractor_spec;
  opts.epochs = cfg.pretrain_epochs;
  opts.seed = cfg.train.seed;
  opts.batch_size = cfg.pretrain_batch_size;
  opts.learning_rate = cfg.pretrain_learning_rate;
  PretrainResult result = pretrain_feature_extractor(split.train_y, opts);
  save_extractor(cfg.run_dir, result.extractor, cfg.train.resolution, cfg.train.seed);

  std::ostringstream history;
  history << "epoch,holdout_mse\n0," << std::setprecision(10) << result.initial_holdout_loss << '\n';
  for (size_t i = 0; i < result.holdout_history.size(); ++i) {
    history << i + 1 << ',' << result.holdout_history[i] << '\n';
  }
  write_text_file(cfg.run_dir / "pretrain_history.csv", history.str());
  write_manifest(cfg);
  out << "extractor saved to " << cfg.run_dir.string() << " (holdout MSE " << result.initial_holdout_loss
      << " -> " << result.final_holdout_loss << ")\n";
  return 0;
}

int cmd_train(const CommonFlags& flags, std::ostream& out) {
  RunConfig cfg = resolve({}, flags);
  cfg.apply_variant_rules();
  require_data_root(cfg);
  require_run_dir(cfg);
  const PairedSplit split = load_split(cfg);

  FeatureExtractor f{nullptr};
  if (!cfg.extractor.empty()) {
    f = load_extractor(cfg.extractor);
    cfg.extractor_spec = f->spec();
  } else {
    f = random_extractor(cfg);
  }

  RunOptions opts;
  opts.run_dir = cfg.run_dir;
  opts.manifest_text = to_config_text(cfg);
  opts.evaluate_each_epoch = cfg.evaluate_each_epoch;
  opts.model_name = variant_name(cfg.variant);
  const int64_t per_epoch =
      std::min(split.train_x.size(), split.train_y.size()) / std::max<int64_t>(cfg.train.batch_size, 1);
  opts.on_step = [&out, per_epoch](int64_t step, const LossBreakdown& b) {
    if (per_epoch > 0 && step % per_epoch == 0) {
      out << "epoch " << step / per_epoch << " step " << step << " total " << b.total << " cyc " << b.cyc
          << '\n';
    }
  };

  TrainState state;
  if (!cfg.checkpoint.empty()) {
    state = load_checkpoint(cfg.checkpoint, cfg.train);
    continue_training(state, cfg.train, split.train_x, split.train_y, split.validation, opts);
  } else {
    state = train(cfg.train, split.train_x, split.train_y, f, split.validation, opts);
  }

  ValidationEvaluation eval =
      evaluate_on_validation(state.networks.g1, split.validation, state.networks.f, opts.model_name);
  eval.report.dataset_id = cfg.data_root.string();
  eval.report.checkpoint_id = checkpoint_path(cfg.run_dir, state.step).string();
  write_report_csv(cfg.run_dir / "metrics.csv", eval.report);
  out << report_csv(eval.report);
  return 0;
}

struct TranslateFlags {
  std::string checkpoint;
  std::string input;
  std::string output;
  bool grid = false;
  std::string direction = "x2y";
};

int cmd_translate(const CommonFlags& flags, const TranslateFlags& tf, std::ostream& out) {
  RunConfig cfg = resolve(checkpoint_base(tf.checkpoint), flags);
  const fs::path out_dir = tf.output.empty() ? cfg.run_dir : fs::path(tf.output);
  if (out_dir.empty()) throw ConfigError("no output directory given (--output or --run-dir)");
  if (!fs::is_directory(tf.input)) throw IoError("input directory " + tf.input + " not found");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  if (fs::equivalent(out_dir, tf.input)) throw ConfigError("output directory must differ from the input");

  TrainState state = load_checkpoint(tf.checkpoint, cfg.train);
  Generator forward = tf.direction == "y2x" ? state.networks.g2 : state.networks.g1;
  Generator backward = tf.direction == "y2x" ? state.networks.g1 : state.networks.g2;
  const int64_t res = cfg.train.resolution;

  int64_t count = 0;
  for (const auto& file : list_png_files(tf.input)) {
    const ImageTensor x(load_image(file, res));
    const ImageTensor fake = generator_forward(forward, x);
    write_png_u8(out_dir / file.filename(), res, res, to_bytes(fake.tensor()));
    if (tf.grid) {
      const ImageTensor rec = generator_forward(backward, fake);
      const auto panel = torch::cat({x.tensor(), fake.tensor(), rec.tensor()}, 3);
      write_png_u8(out_dir / (file.stem().string() + "_grid.png"), 3 * res, res, to_bytes(panel));
    }
    ++count;
  }
  if (count == 0) throw DatasetEmpty("no PNG files in " + tf.input);
  out << "translated " << count << " images into " << out_dir.string() << '\n';
  return 0;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& checkpoint, const std::string& model,
                 std::ostream& out) {
  RunConfig cfg = resolve(checkpoint_base(checkpoint), flags);
  if (cfg.run_dir.empty()) cfg.run_dir = run_dir_of(checkpoint);
  require_data_root(cfg);
  require_run_dir(cfg);
  TrainState state = load_checkpoint(checkpoint, cfg.train);
  const PairedSplit split = load_split(cfg);
  const std::string name = model.empty() ? variant_name(cfg.variant) : model;
  ValidationEvaluation eval = evaluate_on_validation(state.networks.g1, split.validation, state.networks.f, name);
  eval.report.dataset_id = cfg.data_root.string();
  eval.report.checkpoint_id = checkpoint;
  write_report_csv(cfg.run_dir / "metrics.csv", eval.report);

  std::ostringstream per_pair;
  per_pair << "pair_id";
  for (const auto& m : metric_names()) per_pair << ',' << m;
  per_pair << '\n' << std::setprecision(10);
  for (const auto& p : eval.per_pair) {
    per_pair << p.pair_id;
    for (double v : p.values) per_pair << ',' << v;
    per_pair << '\n';
  }
  write_text_file(cfg.run_dir / "metrics_per_pair.csv", per_pair.str());
  out << report_csv(eval.report);
  return 0;
}

int cmd_report(const CommonFlags& flags, const std::vector<std::string>& inputs, std::ostream& out) {
  const RunConfig cfg = resolve({}, flags);
  std::vector<MetricReport> reports;
  for (const auto& in : inputs) {
    const fs::path p = fs::is_directory(in) ? fs::path(in) / "metrics.csv" : fs::path(in);
    reports.push_back(read_report_csv(p));
  }
  const MetricReport merged = merge_reports(reports);
  if (!cfg.run_dir.empty()) {
    require_run_dir(cfg);
    write_report_csv(cfg.run_dir / "report.csv", merged);
  }
  out << report_csv(merged)
      << "# lpd is a learned perceptual distance over this project's own frozen extractor;"
         " its values are not comparable to published LPIPS scores\n";
  return 0;
}

int cmd_check_grads(const CommonFlags& flags, std::ostream& out) {
  GradCheckOptions opts;
  if (flags.seed) opts.seed = *flags.seed;
  const GradCheckResult r = check_generator_gradients(opts);
  out << "checked " << r.checked << " of " << r.trainable_parameters
      << " trainable parameters, max relative error " << std::scientific << r.max_relative_error
      << " (tolerance " << opts.tolerance << ")\n";
  if (!r.passed) {
    out << "FAIL worst parameter: " << r.worst_parameter << '\n';
    return 1;
  }
  out << "PASS worst parameter: " << r.worst_parameter << '\n';
  return 0;
}

std::string one_line(std::string s) {
  const auto nl = s.find('\n');
  if (nl != std::string::npos) s.erase(nl);
  return s;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unpaired image translation with cycle-consistent adversarial networks", "cmg"};
  app.footer(kPrecedence);
  app.require_subcommand(1);

  CommonFlags flags;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired corpus into --run-dir");
  add_common(synth, flags, false);

  auto* pretrain = app.add_subcommand("pretrain-extractor", "Pretrain the feature extractor as an autoencoder");
  add_common(pretrain, flags, true);

  auto* train = app.add_subcommand("train", "Train both generators and discriminators");
  add_common(train, flags, true);

  TranslateFlags tf;
  auto* translate = app.add_subcommand("translate", "Translate a directory of PNG images");
  add_common(translate, flags, false);
  translate->add_option("--checkpoint", tf.checkpoint, "checkpoint directory")->required();
  translate->add_option("--input", tf.input, "directory of grayscale PNGs")->required();
  translate->add_option("--output", tf.output, "output directory (defaults to --run-dir)");
  translate->add_flag("--grid", tf.grid, "also write input|translation|reconstruction panels");
  translate->add_option("--direction", tf.direction, "x2y or y2x")->check(CLI::IsMember({"x2y", "y2x"}));

  std::string eval_checkpoint;
  std::string eval_model;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the held-out paired split");
  add_common(evaluate, flags, true);
  evaluate->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")->required();
  evaluate->add_option("--model", eval_model, "model name in the report (defaults to the variant)");

  std::vector<std::string> report_inputs;
  auto* report = app.add_subcommand("report", "Merge per-model metric CSVs into one table");
  add_common(report, flags, false);
  report->add_option("inputs", report_inputs, "run directories or metric CSV files")->required();

  auto* grads = app.add_subcommand("check-grads", "Finite-difference check of generator gradients");
  add_common(grads, flags, false);

  std::vector<const char*> raw;
  for (const auto& a : argv) raw.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  torch::set_num_threads(1);
  try {
    if (synth->parsed()) return cmd_synth(flags, out);
    if (pretrain->parsed()) return cmd_pretrain(flags, out);
    if (train->parsed()) return cmd_train(flags, out);
    if (translate->parsed()) return cmd_translate(flags, tf, out);
    if (evaluate->parsed()) return cmd_evaluate(flags, eval_checkpoint, eval_model, out);
    if (report->parsed()) return cmd_report(flags, report_inputs, out);
    if (grads->parsed()) return cmd_check_grads(flags, out);
  } catch (const Error& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: IoError: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: InternalError: " << one_line(e.what()) << '\n';
    return 3;
  }
  return 0;
}

}  // namespace cmg::cli
