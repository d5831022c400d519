#include "cmg/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cmg/archive.hpp"
#include "cmg/errors.hpp"

namespace cmg {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<NamedTensor> prefixed(const std::string& prefix, const torch::nn::Module& module) {
  std::vector<NamedTensor> out;
  for (const auto& item : module.named_parameters(true)) out.emplace_back(prefix + item.key(), item.value());
  return out;
}

std::vector<NamedTensor> generator_named(const NetworkBundle& b) {
  auto out = prefixed("g1.", *b.g1);
  auto more = prefixed("g2.", *b.g2);
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

std::vector<NamedTensor> discriminator_named(const NetworkBundle& b) {
  auto out = prefixed("d1.", *b.d1);
  auto more = prefixed("d2.", *b.d2);
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

void set_requires_grad(const std::vector<torch::Tensor>& params, bool value) {
  for (auto p : params) p.set_requires_grad(value);
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json spec_json(const BundleSpec& s) {
  return json{{"generator",
               {{"input_resolution", s.generator.input_resolution},
                {"base_filters", s.generator.base_filters},
                {"residual_blocks", s.generator.residual_blocks},
                {"downsamplings", s.generator.downsamplings}}},
              {"discriminator",
               {{"base_filters", s.discriminator.base_filters}, {"layers", s.discriminator.layers}}},
              {"extractor", {{"base_filters", s.extractor.base_filters}, {"stages", s.extractor.stages}}}};
}

BundleSpec spec_from_json(const json& j) {
  BundleSpec s;
  const auto& g = j.at("generator");
  s.generator.input_resolution = g.at("input_resolution").get<int64_t>();
  s.generator.base_filters = g.at("base_filters").get<int64_t>();
  s.generator.residual_blocks = g.at("residual_blocks").get<int64_t>();
  s.generator.downsamplings = g.at("downsamplings").get<int64_t>();
  const auto& d = j.at("discriminator");
  s.discriminator.base_filters = d.at("base_filters").get<int64_t>();
  s.discriminator.layers = d.at("layers").get<int64_t>();
  const auto& f = j.at("extractor");
  s.extractor.base_filters = f.at("base_filters").get<int64_t>();
  s.extractor.stages = f.at("stages").get<int64_t>();
  return s;
}

void append_line(const fs::path& file, const std::string& header, const std::string& line) {
  const bool fresh = !fs::exists(file);
  std::ofstream out(file, std::ios::app);
  if (!out) throw IoError("cannot append to " + file.string());
  if (fresh) out << header << '\n';
  out << line << '\n';
  if (!out) throw IoError("failed writing " + file.string());
}

}  // namespace

void attach_optimizers(TrainState& state, const TrainConfig& cfg) {
  AdamOptions opts{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8};
  state.generator_optimizer = std::make_unique<Adam>(generator_named(state.networks), opts);
  state.discriminator_optimizer = std::make_unique<Adam>(discriminator_named(state.networks), opts);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (resolution < 1) throw ConfigError("resolution must be positive");
  if (generator.input_resolution != resolution) {
    throw ConfigError("generator input_resolution must equal resolution");
  }
}

BundleSpec TrainConfig::bundle_spec(const FeatureExtractorSpec& extractor) const {
  return BundleSpec{generator, discriminator, extractor};
}

std::string adv_mode_name(AdversarialMode mode) {
  return mode == AdversarialMode::saturating ? "saturating" : "non_saturating";
}

AdversarialMode parse_adv_mode(const std::string& name) {
  if (name == "saturating") return AdversarialMode::saturating;
  if (name == "non_saturating") return AdversarialMode::non_saturating;
  throw ConfigError("unknown adversarial mode '" + name + "'");
}

std::string canonical_string(const TrainConfig& cfg) {
  auto join = [](const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
  };
  std::ostringstream os;
  os << "epochs=" << cfg.epochs << '\n'
     << "batch_size=" << cfg.batch_size << '\n'
     << "learning_rate=" << format_double(cfg.learning_rate) << '\n'
     << "adam_beta1=" << format_double(cfg.adam_beta1) << '\n'
     << "adam_beta2=" << format_double(cfg.adam_beta2) << '\n'
     << "lambda_cyc=" << format_double(cfg.weights.lambda_cyc) << '\n'
     << "lambda_cP=" << format_double(cfg.weights.lambda_cP) << '\n'
     << "lambda_cS=" << format_double(cfg.weights.lambda_cS) << '\n'
     << "lambda_cp_layers=" << join(cfg.weights.lambda_cp_layers) << '\n'
     << "lambda_cs_layers=" << join(cfg.weights.lambda_cs_layers) << '\n'
     << "seed=" << cfg.seed << '\n'
     << "adv_mode=" << adv_mode_name(cfg.adv_mode) << '\n'
     << "checkpoint_every=" << cfg.checkpoint_every << '\n'
     << "resolution=" << cfg.resolution << '\n'
     << "generator_filters=" << cfg.generator.base_filters << '\n'
     << "residual_blocks=" << cfg.generator.residual_blocks << '\n'
     << "downsamplings=" << cfg.generator.downsamplings << '\n'
     << "discriminator_filters=" << cfg.discriminator.base_filters << '\n'
     << "discriminator_layers=" << cfg.discriminator.layers << '\n';
  return os.str();
}

std::string config_hash(const TrainConfig& cfg) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical_string(cfg)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainState initialize_state(const TrainConfig& cfg, FeatureExtractor extractor) {
  cfg.validate();
  if (!extractor) throw ConfigError("a feature extractor is required");
  cfg.weights.validate(extractor->layer_count());
  TrainState state;
  state.seed = cfg.seed;
  state.networks = NetworkBundle::create(cfg.bundle_spec(extractor->spec()), cfg.seed, extractor);
  attach_optimizers(state, cfg);
  return state;
}

ObjectiveTerms generator_objective_terms(NetworkBundle& net, const torch::Tensor& x,
                                         const torch::Tensor& y, const LossWeights& weights,
                                         AdversarialMode mode) {
  ObjectiveTerms terms;
  const auto fake_y = net.g1->forward(x);
  const auto rec_x = net.g2->forward(fake_y);
  const auto fake_x = net.g2->forward(y);
  const auto rec_y = net.g1->forward(fake_x);
  terms.adv_1 = generator_adversarial_loss(net.d1->forward(fake_y), mode);
  terms.adv_2 = generator_adversarial_loss(net.d2->forward(fake_x), mode);
  terms.cyc = cycle_consistency_loss(x, rec_x, y, rec_y);
  if (weights.feature_terms_enabled()) {
    FeatureStack fx, fy;
    {
      torch::NoGradGuard no_grad;
      fx = extract_features(net.f, x);
      fy = extract_features(net.f, y);
    }
    const auto fx_rec = extract_features(net.f, rec_x);
    const auto fy_rec = extract_features(net.f, rec_y);
    if (weights.lambda_cP != 0.0) terms.cPercep = cycle_perceptual_loss(fx, fx_rec, fy, fy_rec, weights);
    if (weights.lambda_cS != 0.0) terms.cStyle = cycle_style_loss(fx, fx_rec, fy, fy_rec, weights);
  }
  return terms;
}

namespace {

// Term-by-term evaluation for error reports; a term that cannot be
// evaluated is recorded as NaN.
LossBreakdown diagnostic_breakdown(NetworkBundle& net, const torch::Tensor& x, const torch::Tensor& y,
                                   const TrainConfig& cfg) {
  torch::NoGradGuard no_grad;
  auto guarded = [](auto&& fn) {
    try {
      return fn();
    } catch (const Error&) {
      return std::nan("");
    }
  };
  LossBreakdown parts;
  const auto fake_y = net.g1->forward(x);
  const auto fake_x = net.g2->forward(y);
  const auto rec_x = net.g2->forward(fake_y);
  const auto rec_y = net.g1->forward(fake_x);
  parts.adv_1 = guarded([&] { return generator_adversarial_loss(net.d1->forward(fake_y), cfg.adv_mode).item<double>(); });
  parts.adv_2 = guarded([&] { return generator_adversarial_loss(net.d2->forward(fake_x), cfg.adv_mode).item<double>(); });
  parts.cyc = guarded([&] { return cycle_consistency_loss(x, rec_x, y, rec_y).item<double>(); });
  if (cfg.weights.feature_terms_enabled()) {
    const auto fx = extract_features(net.f, x), fy = extract_features(net.f, y);
    const auto fxr = extract_features(net.f, rec_x), fyr = extract_features(net.f, rec_y);
    if (cfg.weights.lambda_cP != 0.0) {
      parts.cPercep = guarded([&] { return cycle_perceptual_loss(fx, fxr, fy, fyr, cfg.weights).item<double>(); });
    }
    if (cfg.weights.lambda_cS != 0.0) {
      parts.cStyle = guarded([&] { return cycle_style_loss(fx, fxr, fy, fyr, cfg.weights).item<double>(); });
    }
  }
  parts.total = std::nan("");
  return parts;
}

}  // namespace

LossBreakdown train_step(TrainState& state, const ImageTensor& x_img, const ImageTensor& y_img,
                         const TrainConfig& cfg) {
  auto& net = state.networks;
  if (!net.f->frozen()) throw FrozenViolation("feature extractor must stay frozen during training");
  const auto& x = x_img.tensor();
  const auto& y = y_img.tensor();

  // Discriminators ascend the adversarial value.
  state.discriminator_optimizer->zero_grad();
  torch::Tensor fake_y_det, fake_x_det;
  {
    torch::NoGradGuard no_grad;
    fake_y_det = net.g1->forward(x);
    fake_x_det = net.g2->forward(y);
  }
  const auto value = adversarial_value(net.d1->forward(y), net.d1->forward(fake_y_det)) +
                     adversarial_value(net.d2->forward(x), net.d2->forward(fake_x_det));
  const double value_scalar = value.item<double>();
  if (!std::isfinite(value_scalar)) {
    throw TrainingDiverged("discriminator objective became non-finite at step " +
                               std::to_string(state.step),
                           diagnostic_breakdown(net, x, y, cfg));
  }
  (-value).backward();
  state.discriminator_optimizer->step();

  // Generators descend the full objective; discriminators are held fixed.
  state.generator_optimizer->zero_grad();
  const auto d_params = net.discriminator_parameters();
  set_requires_grad(d_params, false);
  ObjectiveTerms terms;
  try {
    terms = generator_objective_terms(net, x, y, cfg.weights, cfg.adv_mode);
  } catch (const NumericalError& e) {
    set_requires_grad(d_params, true);
    throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(state.step),
                           diagnostic_breakdown(net, x, y, cfg));
  }
  const auto objective = combine_objective(terms, cfg.weights);

  LossBreakdown parts;
  parts.adv_1 = terms.adv_1.item<double>();
  parts.adv_2 = terms.adv_2.item<double>();
  parts.cyc = terms.cyc.item<double>();
  parts.cPercep = terms.cPercep.defined() ? terms.cPercep.item<double>() : 0.0;
  parts.cStyle = terms.cStyle.defined() ? terms.cStyle.item<double>() : 0.0;
  LossBreakdown breakdown;
  try {
    breakdown = total_objective(parts, cfg.weights);
  } catch (const NumericalError& e) {
    set_requires_grad(d_params, true);
    parts.total = std::nan("");
    throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(state.step), parts);
  }

  objective.backward();
  set_requires_grad(d_params, true);
  state.generator_optimizer->step();
  ++state.step;
  return breakdown;
}

fs::path checkpoint_path(const fs::path& run_dir, int64_t step) {
  return run_dir / ("ckpt_" + std::to_string(step));
}

void continue_training(TrainState& state, const TrainConfig& cfg, const DomainDataset& dx,
                       const DomainDataset& dy, const PairedValidationSet& val,
                       const RunOptions& options) {
  cfg.validate();
  UnpairedBatchIterator batches(dx, dy, cfg.batch_size, cfg.seed);
  const int64_t per_epoch = batches.batches_per_epoch();
  const int64_t total_steps = cfg.epochs * per_epoch;
  if (state.step > 0) batches.seek(state.position);

  const bool log = !options.run_dir.empty();
  if (log) {
    std::error_code ec;
    fs::create_directories(options.run_dir, ec);
    if (ec) throw IoError("cannot create run dir " + options.run_dir.string());
    if (!options.manifest_text.empty()) {
      write_text_file(options.run_dir / "run_manifest", options.manifest_text);
    }
  }
  const int64_t stop = std::min(total_steps, options.stop_at_step.value_or(total_steps));

  while (state.step < stop) {
    auto batch = batches.next();
    const auto breakdown = train_step(state, batch.x, batch.y, cfg);
    state.position = batches.position();
    state.epoch = state.position.epoch;
    if (log) {
      append_line(options.run_dir / "losses.csv", breakdown_csv_header(),
                  breakdown_csv_row(state.step, breakdown));
    }
    if (options.on_step) options.on_step(state.step, breakdown);

    const bool epoch_done = state.step % per_epoch == 0;
    if (epoch_done && options.evaluate_each_epoch && !val.empty() && log) {
      const auto eval = evaluate_on_validation(state.networks.g1, val, state.networks.f,
                                               options.model_name);
      std::ostringstream row;
      row << state.step / per_epoch << ',' << state.step;
      for (const auto& name : metric_names()) {
        row << ',' << std::setprecision(10) << eval.report.value(options.model_name, name);
      }
      std::string header = "epoch,step";
      for (const auto& name : metric_names()) header += "," + name;
      append_line(options.run_dir / "val_metrics.csv", header, row.str());
    }
    if (log && (state.step % cfg.checkpoint_every == 0 || state.step == total_steps)) {
      save_checkpoint(state, cfg, checkpoint_path(options.run_dir, state.step));
    }
  }
}

TrainState train(const TrainConfig& cfg, const DomainDataset& dx, const DomainDataset& dy,
                 FeatureExtractor extractor, const PairedValidationSet& val,
                 const RunOptions& options) {
  TrainState state = initialize_state(cfg, std::move(extractor));
  continue_training(state, cfg, dx, dy, val, options);
  return state;
}

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const fs::path& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw CheckpointError("cannot create " + path.string() + ": " + ec.message());

  json manifest;
  manifest["kind"] = "train_state";
  manifest["code_version"] = kCodeVersion;
  manifest["step"] = state.step;
  manifest["epoch"] = state.epoch;
  manifest["position"] = {{"epoch", state.position.epoch}, {"batch", state.position.batch}};
  manifest["seed"] = state.seed;
  manifest["resolution"] = cfg.resolution;
  manifest["architecture"] = spec_json(state.networks.spec);
  manifest["optimizer_steps"] = {{"generator", state.generator_optimizer->steps()},
                                 {"discriminator", state.discriminator_optimizer->steps()}};
  manifest["config_hash"] = config_hash(cfg);
  manifest["config"] = canonical_string(cfg);
  manifest["timestamp"] = utc_timestamp();

  auto tensors = state.networks.named_tensors();
  for (auto& [name, t] : state.generator_optimizer->state_tensors()) tensors.emplace_back("opt_g." + name, t);
  for (auto& [name, t] : state.discriminator_optimizer->state_tensors()) {
    tensors.emplace_back("opt_d." + name, t);
  }
  json shapes = json::object();
  for (const auto& [name, t] : tensors) shapes[name] = t.sizes().vec();
  manifest["shapes"] = shapes;

  write_tensor_archive(path / "tensors.bin", tensors);
  write_text_file(path / "manifest.json", manifest.dump(2) + "\n");
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  CheckpointInfo info;
  info.manifest_json = read_text_file(path / "manifest.json");
  try {
    const auto m = json::parse(info.manifest_json);
    if (m.value("kind", "") != "train_state") {
      throw IncompatibleCheckpoint(path.string() + " is not a training checkpoint");
    }
    info.step = m.at("step").get<int64_t>();
    info.resolution = m.at("resolution").get<int64_t>();
    info.config_hash = m.at("config_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint("bad manifest in " + path.string() + ": " + e.what());
  }
  return info;
}

TrainState load_checkpoint(const fs::path& path, const TrainConfig& cfg) {
  json m;
  try {
    m = json::parse(read_text_file(path / "manifest.json"));
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint("bad manifest in " + path.string() + ": " + e.what());
  }
  if (m.value("kind", "") != "train_state") {
    throw IncompatibleCheckpoint(path.string() + " is not a training checkpoint");
  }
  TrainState state;
  try {
    if (m.at("resolution").get<int64_t>() != cfg.resolution) {
      throw IncompatibleCheckpoint("checkpoint resolution " + std::to_string(m.at("resolution").get<int64_t>()) +
                                   " != configured " + std::to_string(cfg.resolution));
    }
    const BundleSpec archived = spec_from_json(m.at("architecture"));
    const BundleSpec expected = cfg.bundle_spec(archived.extractor);
    if (!(archived == expected)) {
      throw IncompatibleCheckpoint("checkpoint architecture does not match configuration");
    }
    state.step = m.at("step").get<int64_t>();
    state.epoch = m.at("epoch").get<int64_t>();
    state.position = {m.at("position").at("epoch").get<int64_t>(),
                      m.at("position").at("batch").get<int64_t>()};
    state.seed = m.at("seed").get<uint64_t>();

    FeatureExtractor f(archived.extractor);
    state.networks = NetworkBundle::create(archived, state.seed, f);
    const auto tensors = read_tensor_archive(path / "tensors.bin");
    const std::map<std::string, torch::Tensor> by_name(tensors.begin(), tensors.end());
    load_module_parameters(*state.networks.g1, "g1.", by_name);
    load_module_parameters(*state.networks.g2, "g2.", by_name);
    load_module_parameters(*state.networks.d1, "d1.", by_name);
    load_module_parameters(*state.networks.d2, "d2.", by_name);
    load_module_parameters(*state.networks.f, "f.", by_name);

    attach_optimizers(state, cfg);
    std::vector<NamedTensor> g_state, d_state;
    for (const auto& [name, t] : tensors) {
      if (name.rfind("opt_g.", 0) == 0) g_state.emplace_back(name.substr(6), t);
      if (name.rfind("opt_d.", 0) == 0) d_state.emplace_back(name.substr(6), t);
    }
    state.generator_optimizer->load_state(m.at("optimizer_steps").at("generator").get<int64_t>(), g_state);
    state.discriminator_optimizer->load_state(
        m.at("optimizer_steps").at("discriminator").get<int64_t>(), d_state);
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint("bad manifest in " + path.string() + ": " + e.what());
  }
  return state;
}

}  // namespace cmg
