#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "fixtures.hpp"
#include "obsmae/data/stats.hpp"
#include "obsmae/train/adam.hpp"
#include "obsmae/train/checkpoint.hpp"
#include "obsmae/train/evaluate.hpp"
#include "obsmae/train/stage.hpp"

namespace {

namespace fs = std::filesystem;
namespace m = obsmae::model;
namespace tr = obsmae::train;
using obsmae::testing::scratch_dir;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::string dir_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, dir).string() + "\n" + slurp(f);
  return out;
}

TEST(Adam, MatchesHandSteppedOracle) {
  // x <- x - lr * mhat / (sqrt(vhat) + eps) on loss x^2 from x = 1, lr = 0.1.
  m::ParamSet<double> p;
  p.add("x", 1, 1);
  p[0](0, 0) = 1.0;
  auto g = p.zeros_like();
  tr::Adam<double> adam({0.1, 0.5, 0.9, 1e-8});
  const double expected[] = {0.9000000005, 0.8016180293595891, 0.7059824803259297};
  for (double e : expected) {
    g[0](0, 0) = 2.0 * p[0](0, 0);
    adam.step(p, g);
    EXPECT_NEAR(p[0](0, 0), e, 1e-12);
  }
  EXPECT_EQ(adam.steps(), 3u);
}

class TrainFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(scratch_dir("train"));
    obsmae::synth::synthesize(obsmae::testing::tiny_synth_config(72, 3), *root_ / "data");
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }

  obsmae::data::Dataset ds() const { return obsmae::data::Dataset::open(*root_ / "data"); }
  obsmae::core::NormalizationStats stats() const { return obsmae::data::compute_dataset_stats(ds()); }
  m::ModelParams fresh() const {
    auto cfg = m::ModelConfig::tiny();
    cfg.token_dim = 32;
    cfg.context_dim = 16;
    cfg.vae_hidden = 32;
    cfg.vae_latent_dim = 8;
    cfg.backbone_blocks = 1;
    cfg.decoder_blocks = 1;
    return m::ModelParams::initialise(cfg, ds().manifest().modalities);
  }
  m::ModelParams pretrained() const {
    auto mp = fresh();
    mp.stages.push_back("tokenizer_pretrain");
    return mp;
  }
  static tr::TrainStage stage(tr::StageId id, std::size_t steps) {
    tr::TrainStage s;
    s.id = id;
    s.steps = steps;
    s.batch = 2;
    s.lr = 1e-3;
    s.seed = 11;
    return s;
  }

  static fs::path* root_;
};
fs::path* TrainFixture::root_ = nullptr;

TEST_F(TrainFixture, StageInvariants) {
  const auto mods = ds().manifest().modalities;
  auto l1 = stage(tr::StageId::Level1, 1);
  EXPECT_EQ(l1.resolve(mods), (std::vector<std::string>{"geo", "leo", "elev"}));
  l1.modalities = {"geo", "prof"};
  EXPECT_THROW(l1.resolve(mods), obsmae::Error);
  auto pf = stage(tr::StageId::ProfileFinetune, 1);
  EXPECT_EQ(pf.resolve(mods).size(), 4u);
  pf.modalities = {"geo", "prof"};
  EXPECT_THROW(pf.resolve(mods), obsmae::Error);
  auto zero = stage(tr::StageId::Level1, 0);
  EXPECT_THROW(zero.resolve(mods), obsmae::Error);
  EXPECT_THROW(tr::stage_id_from("level2"), obsmae::Error);
  const auto rt = tr::TrainStage::from_json(pf.to_json());
  EXPECT_EQ(rt.id, tr::StageId::ProfileFinetune);
  EXPECT_EQ(rt.beta1, 0.5);
  EXPECT_EQ(rt.beta2, 0.9);
}

TEST_F(TrainFixture, PrerequisitesEnforced) {
  EXPECT_THROW(tr::run_stage(stage(tr::StageId::Level1, 1), ds(), stats(), fresh()), obsmae::Error);
  EXPECT_THROW(tr::run_stage(stage(tr::StageId::ProfileFinetune, 1), ds(), stats(), pretrained()), obsmae::Error);
}

TEST_F(TrainFixture, OneStepIsOneUpdate) {
  const auto in = pretrained();
  const auto res = tr::run_stage(stage(tr::StageId::Level1, 1), ds(), stats(), in);
  ASSERT_EQ(res.metrics.size(), 1u);
  bool changed = false;
  for (std::size_t i = 0; i < in.values.size(); ++i) changed |= in.values[i] != res.params.values[i];
  EXPECT_TRUE(changed);
  EXPECT_TRUE(res.params.has_stage("level1"));
}

TEST_F(TrainFixture, Level1NeverScoresProfile) {
  const auto res = tr::run_stage(stage(tr::StageId::Level1, 4), ds(), stats(), pretrained());
  for (const auto& mtr : res.metrics) {
    EXPECT_EQ(std::count(mtr.loss_modalities.begin(), mtr.loss_modalities.end(), "prof"), 0);
    EXPECT_GE(mtr.loss_modalities.size(), 1u);
  }
  // The PROFILE branch receives no gradient, so its decoder stays at initialisation.
  const auto in = pretrained();
  const auto id = in.values.id("dec.prof.query");
  EXPECT_EQ(in.values[id], res.params.values[id]);
}

TEST_F(TrainFixture, DeterministicCheckpointBytesAcrossWorkerCounts) {
  const auto root = scratch_dir("train_det");
  tr::StageOptions a, b, c;
  a.checkpoint_dir = root / "a";
  b.checkpoint_dir = root / "b";
  c.checkpoint_dir = root / "c";
  c.workers = 2;
  const auto st = stage(tr::StageId::Level1, 3);
  tr::run_stage(st, ds(), stats(), pretrained(), a);
  tr::run_stage(st, ds(), stats(), pretrained(), b);
  tr::run_stage(st, ds(), stats(), pretrained(), c);
  EXPECT_EQ(dir_bytes(root / "a"), dir_bytes(root / "b"));
  EXPECT_EQ(dir_bytes(root / "a"), dir_bytes(root / "c"));
  fs::remove_all(root);
}

TEST_F(TrainFixture, MetricsLogIsLineDelimitedJson) {
  const auto root = scratch_dir("train_metrics");
  tr::StageOptions so;
  so.metrics_path = root / "metrics.jsonl";
  tr::run_stage(stage(tr::StageId::Level1, 3), ds(), stats(), pretrained(), so);
  std::ifstream f(so.metrics_path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<std::size_t>(), ++n);
    EXPECT_TRUE(j.contains("loss") && j.contains("wall_time"));
  }
  EXPECT_EQ(n, 3u);
  fs::remove_all(root);
}

TEST_F(TrainFixture, NonFiniteLossNamesTheWindows) {
  auto mp = pretrained();
  mp.values[mp.values.id("backbone.global")](0, 0) = std::numeric_limits<float>::quiet_NaN();
  try {
    tr::run_stage(stage(tr::StageId::Level1, 1), ds(), stats(), mp);
    FAIL() << "expected NonFiniteLoss";
  } catch (const tr::NonFiniteLoss& e) {
    EXPECT_NE(std::string(e.what()).find("t0="), std::string::npos) << e.what();
  }
}

TEST_F(TrainFixture, TokenizerPretrainTouchesOnlyTokenizers) {
  auto st = stage(tr::StageId::TokenizerPretrain, 30);
  st.vae_windows = 4;
  st.vae_batch = 32;
  const auto in = fresh();
  const auto res = tr::run_stage(st, ds(), stats(), in);
  EXPECT_TRUE(res.params.has_stage("tokenizer_pretrain"));
  for (std::size_t i = 0; i < in.values.size(); ++i) {
    const bool tok = in.values.name(i).rfind("tok.", 0) == 0;
    if (!tok) EXPECT_EQ(in.values[i], res.params.values[i]) << in.values.name(i);
  }
  // Per tokenizer: last loss below first loss.
  const std::size_t per = st.steps;
  for (std::size_t k = 0; k + per <= res.metrics.size(); k += per)
    EXPECT_LT(res.metrics[k + per - 1].loss, res.metrics[k].loss) << res.metrics[k].loss_modalities[0];
}

TEST_F(TrainFixture, EvaluationComparesAgainstClimatology) {
  tr::EvalOptions eo;
  eo.windows = 3;
  auto mp = pretrained();
  const auto r = tr::evaluate_masked(mp, ds(), stats(), eo);
  EXPECT_EQ(r.windows, 3u);
  EXPECT_GT(r.cells, 0u);
  EXPECT_GT(r.climatology_mse, 0.0);
  EXPECT_TRUE(std::isfinite(r.model_mse));
}

TEST(TimeSplit, HoldsOutTheTail) {
  obsmae::data::DatasetManifest m;
  m.start_hour = 0;
  m.end_hour = 99;
  const auto s = tr::split_by_time(m, 12, 0.2);
  EXPECT_TRUE(s.has_validation);
  EXPECT_EQ(s.val_first, 80);
  EXPECT_EQ(s.val_last, 88);
  EXPECT_EQ(s.train_last, 68);  // last training window ends at hour 79
  EXPECT_FALSE(tr::split_by_time(m, 12, 0.0).has_validation);
  EXPECT_THROW(tr::split_by_time(m, 200, 0.0), obsmae::Error);
}

// --- Checkpoints ---------------------------------------------------------------------------

TEST_F(TrainFixture, CheckpointRoundTripIsBitIdentical) {
  const auto root = scratch_dir("ckpt");
  auto mp = fresh();
  mp.stages = {"tokenizer_pretrain"};
  tr::checkpoint_save(mp, root / "c");
  const auto back = tr::checkpoint_load(root / "c");
  ASSERT_EQ(back.values.size(), mp.values.size());
  for (std::size_t i = 0; i < mp.values.size(); ++i) EXPECT_EQ(back.values[i], mp.values[i]);
  EXPECT_EQ(back.stages, mp.stages);
  EXPECT_EQ(back.config.to_json(), mp.config.to_json());
  tr::checkpoint_save(back, root / "d");
  EXPECT_EQ(dir_bytes(root / "c"), dir_bytes(root / "d"));
  fs::remove_all(root);
}

TEST_F(TrainFixture, CorruptedBlobLengthNamesTheBlob) {
  const auto root = scratch_dir("ckpt_bad");
  tr::checkpoint_save(fresh(), root);
  const auto blob = root / "params" / "backbone.global.f32";
  fs::resize_file(blob, fs::file_size(blob) - 4);
  try {
    tr::checkpoint_load(root);
    FAIL() << "expected an error";
  } catch (const obsmae::Error& e) {
    EXPECT_NE(std::string(e.what()).find("backbone.global.f32"), std::string::npos) << e.what();
  }
  fs::remove_all(root);
}

TEST_F(TrainFixture, WrongConfigNamesTheParameter) {
  const auto root = scratch_dir("ckpt_cfg");
  auto mp = fresh();
  tr::checkpoint_save(mp, root);
  auto cfg = mp.config;
  cfg.vae_latent_dim = 12;
  try {
    tr::checkpoint_load(root, cfg, mp.modalities);
    FAIL() << "expected a shape error";
  } catch (const obsmae::Error& e) {
    EXPECT_NE(std::string(e.what()).find("tok.geo.enc2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(tr::checkpoint_load(root / "missing"), obsmae::IoError);
  fs::remove_all(root);
}

}  // namespace
