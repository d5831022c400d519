#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cmg/adam.hpp"
#include "cmg/archive.hpp"
#include "cmg/errors.hpp"
#include "cmg/training.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace {

using cmg::testing::random_image;
using cmg::testing::TempDir;
namespace fs = std::filesystem;

cmg::TrainConfig tiny_config() {
  cmg::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.resolution = 32;
  cfg.generator = {32, 4, 1, 2};
  cfg.discriminator = {4, 2};
  cfg.weights = cmg::LossWeights::defaults(3);
  cfg.seed = 5;
  cfg.checkpoint_every = 2;
  return cfg;
}

cmg::FeatureExtractor tiny_extractor() {
  torch::manual_seed(77);
  cmg::FeatureExtractor f(cmg::FeatureExtractorSpec{4, 3});
  cmg::init_weights(*f);
  f->freeze();
  return f;
}

cmg::DomainDataset dataset(int64_t n, uint64_t seed, cmg::Domain d) {
  std::vector<std::string> ids;
  for (int64_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
  return cmg::DomainDataset(d, random_image(n, 32, seed), ids);
}

std::vector<cmg::NamedTensor> named(const torch::nn::Module& m, const std::string& prefix) {
  std::vector<cmg::NamedTensor> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
  return out;
}

std::vector<cmg::NamedTensor> generators(const cmg::NetworkBundle& n) {
  auto a = named(*n.g1, "g1.");
  auto b = named(*n.g2, "g2.");
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<cmg::NamedTensor> discriminators(const cmg::NetworkBundle& n) {
  auto a = named(*n.d1, "d1.");
  auto b = named(*n.d2, "d2.");
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<cmg::NamedTensor> snapshot(const std::vector<cmg::NamedTensor>& params) {
  std::vector<cmg::NamedTensor> out;
  for (const auto& [n, t] : params) out.emplace_back(n, t.detach().clone());
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string manifest_without_timestamp(const fs::path& ckpt) {
  auto j = nlohmann::json::parse(read_file(ckpt / "manifest.json"));
  j.erase("timestamp");
  return j.dump();
}

TEST(TrainConfig, Validation) {
  auto cfg = tiny_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), cmg::ConfigError);
  cfg = tiny_config();
  cfg.adam_beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), cmg::ConfigError);
  cfg = tiny_config();
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), cmg::ConfigError);
  cfg = tiny_config();
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), cmg::ConfigError);
}

TEST(TrainConfig, HashTracksContent) {
  auto a = tiny_config(), b = tiny_config();
  EXPECT_EQ(cmg::config_hash(a), cmg::config_hash(b));
  EXPECT_EQ(cmg::config_hash(a).size(), 16u);
  b.weights.lambda_cS = 3.0;
  EXPECT_NE(cmg::config_hash(a), cmg::config_hash(b));
  EXPECT_EQ(cmg::parse_adv_mode(cmg::adv_mode_name(cmg::AdversarialMode::saturating)),
            cmg::AdversarialMode::saturating);
  EXPECT_THROW(cmg::parse_adv_mode("hinge"), cmg::ConfigError);
}

TEST(TrainStep, ZeroLearningRateLeavesParametersUnchanged) {
  const auto cfg = tiny_config();
  auto state = cmg::initialize_state(cfg, tiny_extractor());
  auto zero = cfg;
  zero.learning_rate = 0.0;
  cmg::attach_optimizers(state, zero);
  const auto before = state.networks.named_tensors();
  std::vector<cmg::NamedTensor> copy;
  for (const auto& [n, t] : before) copy.emplace_back(n, t.detach().clone());
  const auto x = random_image(4, 32, 1), y = random_image(4, 32, 2);
  cmg::train_step(state, x, y, zero);
  EXPECT_EQ(state.step, 1);
  EXPECT_TRUE(cmg::parameters_equal(copy, state.networks.named_tensors()));
}

TEST(TrainStep, DeterministicFromIdenticalState) {
  const auto cfg = tiny_config();
  auto a = cmg::initialize_state(cfg, tiny_extractor());
  auto b = cmg::initialize_state(cfg, tiny_extractor());
  const auto x = random_image(4, 32, 3), y = random_image(4, 32, 4);
  for (int i = 0; i < 3; ++i) {
    const auto ba = cmg::train_step(a, x, y, cfg);
    const auto bb = cmg::train_step(b, x, y, cfg);
    EXPECT_EQ(ba.total, bb.total);
  }
  EXPECT_TRUE(cmg::parameters_equal(a.networks.named_tensors(), b.networks.named_tensors()));
}

TEST(TrainStep, BreakdownRecombinesAndExtractorUntouched) {
  const auto cfg = tiny_config();
  auto state = cmg::initialize_state(cfg, tiny_extractor());
  const auto f_before = cmg::snapshot_parameters(*state.networks.f);
  const auto x = random_image(4, 32, 5), y = random_image(4, 32, 6);
  for (int i = 0; i < 2; ++i) {
    const auto b = cmg::train_step(state, x, y, cfg);
    EXPECT_TRUE(b.all_finite());
    const auto& w = cfg.weights;
    EXPECT_NEAR(b.total, b.adv_1 + b.adv_2 + w.lambda_cP * b.cPercep + w.lambda_cyc * b.cyc + w.lambda_cS * b.cStyle,
                1e-6);
    EXPECT_GT(b.cPercep, 0.0);
    EXPECT_GT(b.cStyle, 0.0);
  }
  EXPECT_TRUE(cmg::parameters_equal(f_before, cmg::snapshot_parameters(*state.networks.f)));
}

TEST(TrainStep, ZeroFeatureWeightsLogZero) {
  auto cfg = tiny_config();
  cfg.weights.lambda_cP = 0;
  cfg.weights.lambda_cS = 0;
  auto state = cmg::initialize_state(cfg, tiny_extractor());
  const auto b = cmg::train_step(state, random_image(4, 32, 7), random_image(4, 32, 8), cfg);
  EXPECT_EQ(b.cPercep, 0.0);
  EXPECT_EQ(b.cStyle, 0.0);
}

TEST(TrainStep, DiscriminatorAndGeneratorUpdatesAreSeparate) {
  const auto cfg = tiny_config();
  const auto x = random_image(4, 32, 9), y = random_image(4, 32, 10);
  cmg::AdamOptions frozen_opts{0.0, 0.5, 0.999, 1e-8};
  cmg::AdamOptions live_opts{1e-3, 0.5, 0.999, 1e-8};

  // Only the discriminator optimizer moves: generators must stay put.
  auto s1 = cmg::initialize_state(cfg, tiny_extractor());
  s1.generator_optimizer = std::make_unique<cmg::Adam>(generators(s1.networks), frozen_opts);
  s1.discriminator_optimizer = std::make_unique<cmg::Adam>(discriminators(s1.networks), live_opts);
  const auto g_before = snapshot(generators(s1.networks));
  const auto d_before = snapshot(discriminators(s1.networks));
  cmg::train_step(s1, x, y, cfg);
  EXPECT_TRUE(cmg::parameters_equal(g_before, generators(s1.networks)));
  EXPECT_FALSE(cmg::parameters_equal(d_before, discriminators(s1.networks)));

  // Only the generator optimizer moves: discriminators must stay put.
  auto s2 = cmg::initialize_state(cfg, tiny_extractor());
  s2.generator_optimizer = std::make_unique<cmg::Adam>(generators(s2.networks), live_opts);
  s2.discriminator_optimizer = std::make_unique<cmg::Adam>(discriminators(s2.networks), frozen_opts);
  const auto g2_before = snapshot(generators(s2.networks));
  const auto d2_before = snapshot(discriminators(s2.networks));
  cmg::train_step(s2, x, y, cfg);
  EXPECT_FALSE(cmg::parameters_equal(g2_before, generators(s2.networks)));
  EXPECT_TRUE(cmg::parameters_equal(d2_before, discriminators(s2.networks)));
}

TEST(TrainStep, UnfrozenExtractorRejected) {
  const auto cfg = tiny_config();
  auto state = cmg::initialize_state(cfg, tiny_extractor());
  state.networks.f->unfreeze();
  EXPECT_THROW(cmg::train_step(state, random_image(4, 32, 1), random_image(4, 32, 2), cfg), cmg::FrozenViolation);
}

TEST(TrainStep, NonFiniteLossReportsBreakdown) {
  const auto cfg = tiny_config();
  auto state = cmg::initialize_state(cfg, tiny_extractor());
  {
    torch::NoGradGuard guard;
    for (auto& p : state.networks.g1->parameters()) p.fill_(NAN);
  }
  try {
    cmg::train_step(state, random_image(4, 32, 1), random_image(4, 32, 2), cfg);
    FAIL() << "expected TrainingDiverged";
  } catch (const cmg::TrainingDiverged& e) {
    ASSERT_TRUE(e.last_breakdown().has_value());
    EXPECT_FALSE(e.last_breakdown()->all_finite());
  }
}

TEST(Train, StepCountAndLogs) {
  TempDir dir("train");
  auto cfg = tiny_config();
  const auto dx = dataset(8, 1, cmg::Domain::X), dy = dataset(8, 2, cmg::Domain::Y);
  cmg::RunOptions opts;
  opts.run_dir = dir.path();
  opts.manifest_text = "probe=1\n";
  int64_t calls = 0;
  opts.on_step = [&calls](int64_t, const cmg::LossBreakdown&) { ++calls; };
  const auto state = cmg::train(cfg, dx, dy, tiny_extractor(), cmg::PairedValidationSet{}, opts);
  EXPECT_EQ(state.step, 2);
  EXPECT_EQ(calls, 2);
  std::ifstream losses(dir / "losses.csv");
  std::string line;
  std::getline(losses, line);
  EXPECT_EQ(line, "step,adv_1,adv_2,cyc,cPercep,cStyle,total");
  int rows = 0;
  while (std::getline(losses, line)) ++rows;
  EXPECT_EQ(rows, 2);
  EXPECT_TRUE(fs::exists(dir / "ckpt_2" / "manifest.json"));
  EXPECT_EQ(read_file(dir / "run_manifest"), "probe=1\n");
}

TEST(Checkpoint, DoubleSaveIsByteIdentical) {
  TempDir dir("ckpt");
  const auto cfg = tiny_config();
  auto state = cmg::initialize_state(cfg, tiny_extractor());
  cmg::train_step(state, random_image(4, 32, 1), random_image(4, 32, 2), cfg);
  cmg::save_checkpoint(state, cfg, dir / "a");
  auto loaded = cmg::load_checkpoint(dir / "a", cfg);
  cmg::save_checkpoint(loaded, cfg, dir / "b");
  EXPECT_EQ(read_file(dir / "a" / "tensors.bin"), read_file(dir / "b" / "tensors.bin"));
  EXPECT_EQ(manifest_without_timestamp(dir / "a"), manifest_without_timestamp(dir / "b"));
  EXPECT_EQ(loaded.step, 1);
}

TEST(Checkpoint, FreshStateAndInfo) {
  TempDir dir("fresh");
  const auto cfg = tiny_config();
  auto state = cmg::initialize_state(cfg, tiny_extractor());
  cmg::save_checkpoint(state, cfg, dir / "c");
  const auto loaded = cmg::load_checkpoint(dir / "c", cfg);
  EXPECT_EQ(loaded.step, 0);
  EXPECT_TRUE(cmg::parameters_equal(state.networks.named_tensors(), loaded.networks.named_tensors()));
  EXPECT_TRUE(loaded.networks.f->frozen());
  const auto info = cmg::read_checkpoint_info(dir / "c");
  EXPECT_EQ(info.resolution, 32);
  EXPECT_EQ(info.config_hash, cmg::config_hash(cfg));
}

TEST(Checkpoint, IncompatibleConfigRejected) {
  TempDir dir("incompat");
  const auto cfg = tiny_config();
  auto state = cmg::initialize_state(cfg, tiny_extractor());
  cmg::save_checkpoint(state, cfg, dir / "c");
  auto wrong_res = cfg;
  wrong_res.resolution = 64;
  wrong_res.generator.input_resolution = 64;
  EXPECT_THROW(cmg::load_checkpoint(dir / "c", wrong_res), cmg::IncompatibleCheckpoint);
  auto wrong_arch = cfg;
  wrong_arch.generator.base_filters = 8;
  EXPECT_THROW(cmg::load_checkpoint(dir / "c", wrong_arch), cmg::IncompatibleCheckpoint);
  EXPECT_THROW(cmg::load_checkpoint(dir / "missing", cfg), cmg::IncompatibleCheckpoint);
}

TEST(Checkpoint, ResumeReproducesNextStep) {
  TempDir dir("resume");
  auto cfg = tiny_config();
  cfg.epochs = 2;
  const auto dx = dataset(8, 11, cmg::Domain::X), dy = dataset(8, 12, cmg::Domain::Y);
  std::map<int64_t, cmg::LossBreakdown> full;
  cmg::RunOptions opts;
  opts.run_dir = dir / "full";
  opts.on_step = [&full](int64_t s, const cmg::LossBreakdown& b) { full[s] = b; };
  const auto end = cmg::train(cfg, dx, dy, tiny_extractor(), cmg::PairedValidationSet{}, opts);
  ASSERT_EQ(end.step, 4);

  auto resumed = cmg::load_checkpoint(dir / "full" / "ckpt_2", cfg);
  std::map<int64_t, cmg::LossBreakdown> tail;
  cmg::RunOptions ropts;
  ropts.run_dir = dir / "resumed";
  ropts.on_step = [&tail](int64_t s, const cmg::LossBreakdown& b) { tail[s] = b; };
  cmg::continue_training(resumed, cfg, dx, dy, cmg::PairedValidationSet{}, ropts);
  ASSERT_EQ(tail.size(), 2u);
  for (int64_t s : {3, 4}) {
    EXPECT_NEAR(tail[s].total, full[s].total, 1e-6);
    EXPECT_NEAR(tail[s].cyc, full[s].cyc, 1e-6);
    EXPECT_NEAR(tail[s].adv_1, full[s].adv_1, 1e-6);
  }
  EXPECT_TRUE(cmg::parameters_equal(end.networks.named_tensors(), resumed.networks.named_tensors()));
}

TEST(Checkpoint, FinalCheckpointEvaluates) {
  TempDir dir("final");
  const auto cfg = tiny_config();
  const auto dx = dataset(8, 21, cmg::Domain::X), dy = dataset(8, 22, cmg::Domain::Y);
  std::vector<cmg::ValidationPair> pairs{{random_image(1, 32, 1), random_image(1, 32, 2), "v_0"}};
  const cmg::PairedValidationSet val(pairs);
  cmg::RunOptions opts;
  opts.run_dir = dir.path();
  cmg::train(cfg, dx, dy, tiny_extractor(), val, opts);
  auto loaded = cmg::load_checkpoint(cmg::checkpoint_path(dir.path(), 2), cfg);
  const auto eval = cmg::evaluate_on_validation(loaded.networks.g1, val, loaded.networks.f, "m");
  EXPECT_EQ(eval.report.rows.size(), 6u);
  EXPECT_TRUE(fs::exists(dir / "val_metrics.csv"));
}

TEST(Archive, RoundTripsDtypesAndRejectsGarbage) {
  TempDir dir("archive");
  std::vector<cmg::NamedTensor> tensors{{"a", torch::randn({2, 3})},
                                        {"b", torch::randn({4}, torch::kFloat64)},
                                        {"c", torch::arange(5, torch::kLong)},
                                        {"scalar", torch::tensor(3.5)}};
  cmg::write_tensor_archive(dir / "t.bin", tensors);
  const auto back = cmg::read_tensor_archive(dir / "t.bin");
  ASSERT_EQ(back.size(), tensors.size());
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].first, tensors[i].first);
    EXPECT_TRUE(torch::equal(back[i].second, tensors[i].second));
  }
  std::ofstream(dir / "bad.bin") << "garbage";
  EXPECT_THROW(cmg::read_tensor_archive(dir / "bad.bin"), cmg::IncompatibleCheckpoint);
}

TEST(Archive, ExtractorRoundTrip) {
  TempDir dir("fx");
  auto f = tiny_extractor();
  cmg::save_extractor(dir.path(), f, 32, 0);
  const auto g = cmg::load_extractor(dir.path());
  EXPECT_TRUE(g->frozen());
  EXPECT_EQ(g->spec(), f->spec());
  EXPECT_TRUE(cmg::parameters_equal(cmg::snapshot_parameters(*f), cmg::snapshot_parameters(*g)));
}

}  // namespace
