#include <algorithm>
#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "irisseg/errors.hpp"
#include "irisseg/synth.hpp"
#include "irisseg/tiny_ref_net.hpp"
#include "irisseg/training.hpp"
#include "test_util.hpp"

using namespace irisseg;
namespace fs = std::filesystem;
using testing_util::TempDir;

namespace {

DatasetManifest synth(const fs::path& dir, int count, int size, std::uint64_t seed = 1) {
  SynthSpec spec = SynthSpec::variant("a");
  spec.count = count;
  spec.image_size = size;
  spec.seed = seed;
  return generate_synthetic(spec, dir);
}

TrainConfig small_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.resolution = 32;
  c.seed = 3;
  c.threads = 1;
  return c;
}

std::vector<float> weights(const SegModel& m) { return {m.parameters().begin(), m.parameters().end()}; }

}  // namespace

TEST(TrainConfig, DefaultsAndValidation) {
  TrainConfig c;
  EXPECT_EQ(c.epochs, 100);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.momentum, 0.0);
  EXPECT_EQ(c.effective_learning_rate(), 1e-2);
  c.backbone = "foundation";
  EXPECT_EQ(c.effective_learning_rate(), 1e-4);
  c.learning_rate = 0.5;
  EXPECT_EQ(c.effective_learning_rate(), 0.5);
  EXPECT_NO_THROW(c.validate());

  auto bad = [](auto mutate) {
    TrainConfig t;
    mutate(t);
    EXPECT_THROW(t.validate(), UserError);
  };
  bad([](TrainConfig& t) { t.learning_rate = -1e-3; });
  bad([](TrainConfig& t) { t.learning_rate = std::nan(""); });
  bad([](TrainConfig& t) { t.epochs = 0; });
  bad([](TrainConfig& t) { t.batch_size = 0; });
  bad([](TrainConfig& t) { t.momentum = 1.0; });
  bad([](TrainConfig& t) { t.focal.alpha = 1.0; });
  bad([](TrainConfig& t) { t.focal.gamma = -1.0; });
  bad([](TrainConfig& t) { t.backbone = "resnet"; });
  EXPECT_EQ(TrainConfig{}.echo().at("learning_rate"), "0.01");
}

TEST(Train, OneEpochWritesLogAndCheckpoint) {
  TempDir dir;
  const auto m = synth(dir.path() / "data", 5, 32);
  auto cfg = small_config(1);
  cfg.checkpoint_dir = dir.path() / "run";
  int calls = 0;
  const auto result = train(m, cfg, [&](int epoch, double loss) {
    ++calls;
    EXPECT_EQ(epoch, 1);
    EXPECT_TRUE(std::isfinite(loss));
  });
  EXPECT_EQ(calls, 1);
  ASSERT_EQ(result.log.epochs.size(), 1u);
  EXPECT_EQ(result.log.epochs[0].epoch, 1);
  EXPECT_TRUE(std::isfinite(result.log.epochs[0].mean_loss));
  EXPECT_EQ(result.log.checkpoint, cfg.checkpoint_dir / "model.ckpt");
  EXPECT_TRUE(fs::exists(result.log.checkpoint));
  EXPECT_TRUE(fs::exists(sidecar_path(result.log.checkpoint)));
  EXPECT_TRUE(fs::exists(cfg.checkpoint_dir / "train_log.csv"));
  const auto meta = read_key_values(sidecar_path(result.log.checkpoint));
  EXPECT_EQ(meta.at("model_kind"), "tiny");
  EXPECT_EQ(meta.at("seed"), "3");
}

TEST(Train, IntermediateCheckpoints) {
  TempDir dir;
  const auto m = synth(dir.path() / "data", 5, 32);
  auto cfg = small_config(3);
  cfg.checkpoint_dir = dir.path() / "run";
  cfg.checkpoint_interval = 1;
  train(m, cfg);
  int blobs = 0;
  for (const auto& e : fs::directory_iterator(cfg.checkpoint_dir)) blobs += e.path().extension() == ".ckpt";
  EXPECT_GE(blobs, 3);
}

TEST(Train, DeterministicAcrossRunsAndThreadCounts) {
  TempDir dir;
  const auto m = synth(dir.path() / "data", 10, 32);
  auto cfg = small_config(2);
  const auto a = train(m, cfg);
  const auto b = train(m, cfg);
  cfg.threads = 3;
  const auto c = train(m, cfg);
  EXPECT_EQ(a.log.losses(), b.log.losses());
  EXPECT_EQ(a.log.losses(), c.log.losses());
  EXPECT_EQ(weights(*a.model), weights(*b.model));
  EXPECT_EQ(weights(*a.model), weights(*c.model));
  cfg.seed = 4;
  EXPECT_NE(train(m, cfg).log.losses(), a.log.losses());
}

TEST(Train, EveryLossKindTrains) {
  TempDir dir;
  const auto m = synth(dir.path() / "data", 5, 32);
  for (auto kind : {LossKind::focal, LossKind::ce, LossKind::dice, LossKind::triplet}) {
    auto cfg = small_config(2);
    cfg.loss = kind;
    const auto r = train(m, cfg);
    ASSERT_EQ(r.log.epochs.size(), 2u) << to_string(kind);
    for (double l : r.log.losses()) EXPECT_TRUE(std::isfinite(l)) << to_string(kind);
  }
}

TEST(Train, MomentumChangesTheTrajectory) {
  TempDir dir;
  const auto m = synth(dir.path() / "data", 5, 32);
  auto cfg = small_config(2);
  const auto plain = train(m, cfg);
  cfg.momentum = 0.9;
  EXPECT_NE(train(m, cfg).log.losses().back(), plain.log.losses().back());
}

TEST(Train, ErrorPaths) {
  TempDir dir;
  auto m = synth(dir.path() / "data", 5, 32);
  auto cfg = small_config(1);
  auto only_test = m;
  for (auto& r : only_test.records) r.split = Split::test;
  EXPECT_THROW(train(only_test, cfg), EmptyTrainSplit);

  cfg.learning_rate = 1e12;
  cfg.epochs = 5;
  cfg.loss = LossKind::ce;
  try {
    train(m, cfg);
    FAIL() << "expected DivergedLoss";
  } catch (const DivergedLoss& e) {
    const std::string what = e.what();
    EXPECT_TRUE(std::any_of(m.records.begin(), m.records.end(),
                            [&](const SampleRecord& r) { return what.find(r.id()) != std::string::npos; }))
        << what;
  }

  cfg = small_config(1);
  cfg.backbone = "foundation";
  cfg.foundation_checkpoint = dir.path() / "nothing";
  EXPECT_THROW(train(m, cfg), MissingCheckpoint);
}

TEST(Train, FocalLossHalvesOverThirtyEpochs) {
  TempDir dir;
  const auto m = synth(dir.path() / "data", 64, 64, 7);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.resolution = 64;
  cfg.seed = 7;
  cfg.threads = 1;
  const auto losses = train(m, cfg).log.losses();
  ASSERT_EQ(losses.size(), 30u);
  EXPECT_LE(losses.back(), 0.5 * losses.front());
}

TEST(TrainLog, CsvRoundTrip) {
  TempDir dir;
  TrainLog log;
  log.epochs = {{1, 0.123456789012345678, 1.5}, {2, 1e-9, 0.25}};
  write_train_log_csv(log, dir.path() / "log.csv");
  const auto back = read_train_log_csv(dir.path() / "log.csv");
  ASSERT_EQ(back.epochs.size(), 2u);
  EXPECT_EQ(back.losses(), log.losses());
  EXPECT_EQ(back.epochs[1].seconds, 0.25);

  auto write = [&](const std::string& text) {
    std::ofstream(dir.path() / "bad.csv") << text;
    return dir.path() / "bad.csv";
  };
  EXPECT_THROW(read_train_log_csv(write("epoch,loss\n1,2\n")), MalformedCsv);
  EXPECT_THROW(read_train_log_csv(write("epoch,mean_loss,seconds\n1,abc,2\n")), MalformedCsv);
  EXPECT_THROW(read_train_log_csv(write("epoch,mean_loss,seconds\n1,2\n")), MalformedCsv);
  EXPECT_THROW(read_train_log_csv(write("epoch,mean_loss,seconds\n1,nan,2\n")), MalformedCsv);
  EXPECT_THROW(read_train_log_csv(dir.path() / "missing.csv"), MalformedCsv);
}

TEST(Sweep, OneArmPerGammaMatchingSequentialRuns) {
  TempDir dir;
  const auto m = synth(dir.path() / "data", 10, 32);
  auto cfg = small_config(1);
  cfg.checkpoint_dir = dir.path() / "sweep";
  EvalOptions eval;
  eval.threads = 1;
  const auto arms = sweep_gamma(m, cfg, {1.0, 2.0, 5.0}, eval);
  ASSERT_EQ(arms.size(), 3u);
  for (const auto& arm : arms) {
    EXPECT_TRUE(arm.error.empty()) << arm.error;
    EXPECT_EQ(arm.config.seed, cfg.seed);
    EXPECT_EQ(arm.log.epochs.size(), 1u);
    EXPECT_TRUE(fs::exists(arm.log.checkpoint));
  }
  EXPECT_EQ(arms[2].config.focal.gamma, 5.0);

  // The gamma=2 arm equals a standalone run with the same config.
  auto single = cfg;
  single.focal.gamma = 2.0;
  single.checkpoint_dir.clear();
  const auto solo = train(m, single);
  EXPECT_EQ(solo.log.losses(), arms[1].log.losses());
  const auto report = evaluate(*solo.model, m, eval, arms[1].log.checkpoint.string());
  EXPECT_EQ(report.mean_iou, arms[1].report.mean_iou);

  write_arms_csv(arms, dir.path() / "arms.csv");
  std::ifstream in(dir.path() / "arms.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "label,loss,gamma,alpha,mean_iou,std_iou,final_loss,checkpoint,error");
  int rows = 0;
  for (std::string l; std::getline(in, l);) ++rows;
  EXPECT_EQ(rows, 3);

  EXPECT_EQ(sweep_gamma(m, small_config(1), {2.0}, eval).size(), 1u);
  EXPECT_THROW(sweep_gamma(m, cfg, {}, eval), UserError);
}

TEST(Sweep, FailedArmDoesNotStopOthers) {
  TempDir dir;
  const auto m = synth(dir.path() / "data", 5, 32);
  auto cfg = small_config(1);
  const auto arms = sweep_gamma(m, cfg, {2.0, -1.0, 1.0}, {});
  ASSERT_EQ(arms.size(), 3u);
  EXPECT_TRUE(arms[0].error.empty());
  EXPECT_FALSE(arms[1].error.empty());
  EXPECT_TRUE(arms[2].error.empty());
}

TEST(CompareLosses, EqualLengthFiniteCurves) {
  TempDir dir;
  const auto m = synth(dir.path() / "data", 6, 32);
  auto cfg = small_config(2);
  const auto arms = compare_losses(m, cfg, {LossKind::focal, LossKind::dice, LossKind::triplet}, {});
  ASSERT_EQ(arms.size(), 3u);
  for (const auto& arm : arms) {
    EXPECT_TRUE(arm.error.empty()) << arm.error;
    ASSERT_EQ(arm.log.epochs.size(), 2u);
    for (double l : arm.log.losses()) EXPECT_TRUE(std::isfinite(l));
  }
  EXPECT_EQ(arms[1].config.loss, LossKind::dice);
  write_loss_curves_csv(arms, dir.path() / "curves.csv");
  std::ifstream in(dir.path() / "curves.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,focal,dice,triplet");
  EXPECT_EQ(compare_losses(m, cfg, {LossKind::focal}, {}).size(), 1u);
}

TEST(ManifestDigest, StableAndSensitive) {
  TempDir dir;
  auto m = synth(dir.path() / "data", 5, 32);
  const auto d = manifest_digest(m);
  EXPECT_EQ(d.size(), 64u);
  EXPECT_EQ(d, manifest_digest(m));
  m.records[0].split = m.records[0].split == Split::train ? Split::test : Split::train;
  EXPECT_NE(d, manifest_digest(m));
}
