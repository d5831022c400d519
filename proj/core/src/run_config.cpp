#include "cmg/run_config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cmg/errors.hpp"
#include "json.hpp"

namespace cmg {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

int64_t to_int(const std::string& key, const std::string& value) {
  int64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "' expects an integer, got '" + value + "'");
  return out;
}

uint64_t to_uint(const std::string& key, const std::string& value) {
  uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "' expects true/false, got '" + value + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
  return s;
}

}  // namespace

std::string variant_name(Variant v) { return v == Variant::cycle_gan ? "cycle_gan" : "cycle_medgan"; }

Variant parse_variant(const std::string& name) {
  if (name == "cycle_gan") return Variant::cycle_gan;
  if (name == "cycle_medgan") return Variant::cycle_medgan;
  throw ConfigError("unknown variant '" + name + "' (expected cycle_gan or cycle_medgan)");
}

void RunConfig::apply_variant_rules() {
  if (variant == Variant::cycle_gan) {
    train.weights.lambda_cP = 0.0;
    train.weights.lambda_cS = 0.0;
  } else if (extractor.empty()) {
    throw ConfigError("variant cycle_medgan requires a pretrained extractor (key 'extractor')");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "epochs", "batch_size", "learning_rate", "adam_beta1", "adam_beta2", "lambda_cyc", "lambda_cP",
      "lambda_cS", "extractor_filters", "extractor_stages", "lambda_cp_layers", "lambda_cs_layers",
      "seed", "adv_mode", "checkpoint_every", "resolution", "generator_filters", "residual_blocks",
      "downsamplings", "discriminator_filters", "discriminator_layers", "pretrain_epochs",
      "pretrain_batch_size", "pretrain_learning_rate", "val_fraction", "split_seed",
      "evaluate_each_epoch", "n_images", "transform", "blur_sigma", "texture_amplitude", "synth_seed",
      "variant", "data_root", "run_dir", "checkpoint", "extractor"};
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto& t = cfg.train;
  if (key == "epochs") t.epochs = to_int(key, value);
  else if (key == "batch_size") t.batch_size = to_int(key, value);
  else if (key == "learning_rate") t.learning_rate = to_double(key, value);
  else if (key == "adam_beta1") t.adam_beta1 = to_double(key, value);
  else if (key == "adam_beta2") t.adam_beta2 = to_double(key, value);
  else if (key == "lambda_cyc") t.weights.lambda_cyc = to_double(key, value);
  else if (key == "lambda_cP") t.weights.lambda_cP = to_double(key, value);
  else if (key == "lambda_cS") t.weights.lambda_cS = to_double(key, value);
  else if (key == "lambda_cp_layers") t.weights.lambda_cp_layers = to_list(key, value);
  else if (key == "lambda_cs_layers") t.weights.lambda_cs_layers = to_list(key, value);
  else if (key == "extractor_filters") cfg.extractor_spec.base_filters = to_int(key, value);
  else if (key == "extractor_stages") {
    cfg.extractor_spec.stages = to_int(key, value);
    if (cfg.extractor_spec.stages < 1) throw ConfigError("extractor_stages must be >= 1");
    t.weights.lambda_cp_layers.assign(static_cast<size_t>(cfg.extractor_spec.stages), 1.0);
    t.weights.lambda_cs_layers.assign(static_cast<size_t>(cfg.extractor_spec.stages), 1.0);
  }
  else if (key == "seed") t.seed = to_uint(key, value);
  else if (key == "adv_mode") t.adv_mode = parse_adv_mode(value);
  else if (key == "checkpoint_every") t.checkpoint_every = to_int(key, value);
  else if (key == "resolution") {
    t.resolution = to_int(key, value);
    t.generator.input_resolution = t.resolution;
    cfg.synth.resolution = t.resolution;
  }
  else if (key == "generator_filters") t.generator.base_filters = to_int(key, value);
  else if (key == "residual_blocks") t.generator.residual_blocks = to_int(key, value);
  else if (key == "downsamplings") t.generator.downsamplings = to_int(key, value);
  else if (key == "discriminator_filters") t.discriminator.base_filters = to_int(key, value);
  else if (key == "discriminator_layers") t.discriminator.layers = to_int(key, value);
  else if (key == "pretrain_epochs") cfg.pretrain_epochs = to_int(key, value);
  else if (key == "pretrain_batch_size") cfg.pretrain_batch_size = to_int(key, value);
  else if (key == "pretrain_learning_rate") cfg.pretrain_learning_rate = to_double(key, value);
  else if (key == "val_fraction") cfg.val_fraction = to_double(key, value);
  else if (key == "split_seed") cfg.split_seed = to_uint(key, value);
  else if (key == "evaluate_each_epoch") cfg.evaluate_each_epoch = to_bool(key, value);
  else if (key == "n_images") cfg.synth.n_images = to_int(key, value);
  else if (key == "transform") cfg.synth.transform = parse_transform(value);
  else if (key == "blur_sigma") cfg.synth.blur_sigma = to_double(key, value);
  else if (key == "texture_amplitude") cfg.synth.texture_amplitude = to_double(key, value);
  else if (key == "synth_seed") cfg.synth.seed = to_uint(key, value);
  else if (key == "variant") cfg.variant = parse_variant(value);
  else if (key == "data_root") cfg.data_root = value;
  else if (key == "run_dir") cfg.run_dir = value;
  else if (key == "checkpoint") cfg.checkpoint = value;
  else if (key == "extractor") cfg.extractor = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(base, ss.str());
  return base;
}

std::string to_config_text(const RunConfig& cfg) {
  const auto& t = cfg.train;
  std::ostringstream os;
  os << "# effective configuration (" << kCodeVersion << ")\n"
     << "variant=" << variant_name(cfg.variant) << '\n'
     << "epochs=" << t.epochs << '\n'
     << "batch_size=" << t.batch_size << '\n'
     << "learning_rate=" << num(t.learning_rate) << '\n'
     << "adam_beta1=" << num(t.adam_beta1) << '\n'
     << "adam_beta2=" << num(t.adam_beta2) << '\n'
     << "seed=" << t.seed << '\n'
     << "adv_mode=" << adv_mode_name(t.adv_mode) << '\n'
     << "checkpoint_every=" << t.checkpoint_every << '\n'
     << "resolution=" << t.resolution << '\n'
     << "generator_filters=" << t.generator.base_filters << '\n'
     << "residual_blocks=" << t.generator.residual_blocks << '\n'
     << "downsamplings=" << t.generator.downsamplings << '\n'
     << "discriminator_filters=" << t.discriminator.base_filters << '\n'
     << "discriminator_layers=" << t.discriminator.layers << '\n'
     << "extractor_filters=" << cfg.extractor_spec.base_filters << '\n'
     << "extractor_stages=" << cfg.extractor_spec.stages << '\n'
     << "lambda_cyc=" << num(t.weights.lambda_cyc) << '\n'
     << "lambda_cP=" << num(t.weights.lambda_cP) << '\n'
     << "lambda_cS=" << num(t.weights.lambda_cS) << '\n'
     << "lambda_cp_layers=" << list(t.weights.lambda_cp_layers) << '\n'
     << "lambda_cs_layers=" << list(t.weights.lambda_cs_layers) << '\n'
     << "pretrain_epochs=" << cfg.pretrain_epochs << '\n'
     << "pretrain_batch_size=" << cfg.pretrain_batch_size << '\n'
     << "pretrain_learning_rate=" << num(cfg.pretrain_learning_rate) << '\n'
     << "val_fraction=" << num(cfg.val_fraction) << '\n'
     << "split_seed=" << cfg.split_seed << '\n'
     << "evaluate_each_epoch=" << (cfg.evaluate_each_epoch ? "true" : "false") << '\n'
     << "n_images=" << cfg.synth.n_images << '\n'
     << "transform=" << transform_name(cfg.synth.transform) << '\n'
     << "blur_sigma=" << num(cfg.synth.blur_sigma) << '\n'
     << "texture_amplitude=" << num(cfg.synth.texture_amplitude) << '\n'
     << "synth_seed=" << cfg.synth.seed << '\n';
  if (!cfg.data_root.empty()) os << "data_root=" << cfg.data_root.string() << '\n';
  if (!cfg.run_dir.empty()) os << "run_dir=" << cfg.run_dir.string() << '\n';
  if (!cfg.checkpoint.empty()) os << "checkpoint=" << cfg.checkpoint.string() << '\n';
  if (!cfg.extractor.empty()) os << "extractor=" << cfg.extractor.string() << '\n';
  return os.str();
}

RunConfig config_from_checkpoint(const std::filesystem::path& checkpoint, RunConfig base) {
  const CheckpointInfo info = read_checkpoint_info(checkpoint);
  try {
    const auto m = nlohmann::json::parse(info.manifest_json);
    const auto& f = m.at("architecture").at("extractor");
    // Stage count first: it resets the per-layer weights the archived config restores.
    set_config_value(base, "extractor_filters", std::to_string(f.at("base_filters").get<int64_t>()));
    set_config_value(base, "extractor_stages", std::to_string(f.at("stages").get<int64_t>()));
    apply_config_text(base, m.at("config").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleCheckpoint("bad manifest in " + checkpoint.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IncompatibleCheckpoint("archived config in " + checkpoint.string() + ": " + e.what());
  }
  return base;
}

}  // namespace cmg
