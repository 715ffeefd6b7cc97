#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "irisseg/checkpoint.hpp"
#include "irisseg/datasets.hpp"
#include "irisseg/evaluation.hpp"
#include "irisseg/losses.hpp"
#include "irisseg/model.hpp"

namespace irisseg {

struct TrainConfig {
  double learning_rate = 0.0;  // 0 = backbone default, see effective_learning_rate
  int epochs = 100;
  int batch_size = 4;
  double momentum = 0.0;  // plain SGD unless set
  LossKind loss = LossKind::focal;
  FocalParams focal;
  TripletSpec triplet;
  PerturbSpec perturb;    // seed is ignored; per-sample seeds derive from `seed`
  bool perturb_boxes = true;
  std::uint64_t seed = 0;
  std::string backbone = "tiny";
  int resolution = 0;     // 0 = backbone default
  std::filesystem::path foundation_checkpoint;
  std::filesystem::path checkpoint_dir;  // empty = keep the model in memory only
  int checkpoint_interval = 0;           // epochs between intermediate checkpoints
  int threads = 0;                       // 0 = hardware concurrency

  /// learning_rate when set, else 1e-2 for tiny and 1e-4 for foundation.
  double effective_learning_rate() const;
  void validate() const;
  /// Every effective value, as written to config-echo files and sidecars.
  Metadata echo() const;
};

struct EpochStat {
  int epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochStat> epochs;
  Metadata config;
  std::filesystem::path checkpoint;
  std::size_t quarantined = 0;

  std::vector<double> losses() const;
};

/// epoch,mean_loss,seconds
void write_train_log_csv(const TrainLog& log, const std::filesystem::path& file);
/// Throws MalformedCsv.
TrainLog read_train_log_csv(const std::filesystem::path& file);

/// Fresh model for the configured backbone (tiny weights seeded by `seed`).
std::unique_ptr<SegModel> make_model(const TrainConfig& config);

/// Optional per-epoch callback (1-based epoch, mean loss).
using EpochCallback = std::function<void(int, double)>;

/// Fine-tunes `model` in place on the manifest's train split: seeded
/// per-epoch shuffles, perturbed ground-truth boxes, the selected loss and
/// SGD on the trainable parameters. Throws EmptyTrainSplit and DivergedLoss
/// (naming the offending sample).
TrainLog train_model(SegModel& model, const DatasetManifest& manifest, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

struct TrainResult {
  std::unique_ptr<SegModel> model;
  TrainLog log;
};

/// make_model + train_model, then writes <checkpoint_dir>/model.ckpt with
/// its sidecar and train_log.csv when a checkpoint_dir is set.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// One arm of a sweep or loss comparison.
struct ArmResult {
  std::string label;
  TrainConfig config;
  TrainLog log;
  EvalReport report;
  std::string error;  // non-empty when the arm failed
};

/// One model per gamma with otherwise identical config; each is evaluated on
/// the test split. Arm checkpoints go to <checkpoint_dir>/gamma_<g>.
std::vector<ArmResult> sweep_gamma(const DatasetManifest& manifest, const TrainConfig& base,
                                   const std::vector<double>& gammas, const EvalOptions& eval);

/// Same protocol varying the loss kind. Arm checkpoints go to
/// <checkpoint_dir>/loss_<name>.
std::vector<ArmResult> compare_losses(const DatasetManifest& manifest, const TrainConfig& base,
                                      const std::vector<LossKind>& losses, const EvalOptions& eval);

/// label,loss,gamma,alpha,mean_iou,std_iou,final_loss,checkpoint,error
void write_arms_csv(const std::vector<ArmResult>& arms, const std::filesystem::path& file);
/// epoch then one mean-loss column per arm.
void write_loss_curves_csv(const std::vector<ArmResult>& arms, const std::filesystem::path& file);

/// Hex SHA-256 over the manifest's name, seed and records.
std::string manifest_digest(const DatasetManifest& manifest);

}  // namespace irisseg
