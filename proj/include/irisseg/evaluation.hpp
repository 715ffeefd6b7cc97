#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "irisseg/datasets.hpp"
#include "irisseg/model.hpp"

namespace irisseg {

/// |a & b| / |a | b|; 1 when both are empty. Throws ShapeMismatch.
double iou(const Mask& predicted, const Mask& truth);

struct ImageScore {
  std::string id;
  double iou = 0.0;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::string checkpoint_id;
  std::string prompt_strategy;
  std::vector<ImageScore> per_image;
  double mean_iou = 0.0;  // fraction
  double std_iou = 0.0;   // population standard deviation, fraction
  std::vector<PrPoint> precision_recall;
  std::size_t quarantined = 0;
};

/// Thresholds 0.05, 0.10, ..., 0.95.
std::vector<double> pr_thresholds();

/// Pixel counts pooled over a test set, one bucket per threshold.
class PrAccumulator {
 public:
  PrAccumulator();
  void add(const Raster& logits, const Mask& truth);
  void merge(const PrAccumulator& other);
  std::vector<PrPoint> curve() const;

 private:
  std::vector<double> thresholds_;
  std::vector<std::uint64_t> tp_, fp_, fn_;
};

/// Mean and population standard deviation of the per-image IoUs.
void aggregate(EvalReport& report);

struct EvalOptions {
  PromptMode prompt_mode = PromptMode::two_pass;
  double threshold = 0.5;
  /// Score at the native image resolution instead of the model grid.
  bool native_resolution = false;
  int threads = 0;  // 0 = hardware concurrency
};

/// Scores the manifest's test split. Samples that fail to load or predict
/// are quarantined and counted; the run itself never aborts on them.
EvalReport evaluate(const SegModel& model, const DatasetManifest& manifest,
                    const EvalOptions& options, const std::string& checkpoint_id);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
void write_report(const EvalReport& report, const std::filesystem::path& file);
EvalReport read_report(const std::filesystem::path& file);
/// threshold,precision,recall
void write_pr_csv(const EvalReport& report, const std::filesystem::path& file);

struct CrossCell {
  std::string train_dataset;
  std::string test_dataset;
  EvalReport report;
  std::string error;  // non-empty when the cell failed
};

struct TrainedModel {
  std::string dataset;
  std::filesystem::path checkpoint;
};

/// Every checkpoint against every other dataset's test split (off-diagonal
/// cells only). Needs at least two datasets; failing cells are recorded.
std::vector<CrossCell> cross_evaluate(const std::vector<TrainedModel>& checkpoints,
                                      const std::vector<DatasetManifest>& manifests,
                                      const EvalOptions& options);

/// train,test,mean,std (fractions) plus percent columns.
void write_matrix_csv(const std::vector<CrossCell>& cells, const std::filesystem::path& file);

struct BaselineRow {
  const char* method;
  const char* dataset;
  double mean_percent;
  double std_percent;
};

/// Published comparison numbers on ND-Iris-0405 (mean IoU % and std).
inline constexpr BaselineRow kBaselines[] = {
    {"OSIRIS", "ND-Iris-0405", 86.28, 6.50},
    {"DRN", "ND-Iris-0405", 89.61, 5.08},
    {"Context-100k", "ND-Iris-0405", 89.45, 3.85},
    {"SegNet", "ND-Iris-0405", 89.75, 4.95},
};

/// Published results of the fine-tuned foundation model: in-dataset rows
/// (train == test) and cross-dataset rows. The std column is kept exactly as
/// printed; its unit (fraction or percent) is ambiguous.
struct ReferenceRow {
  const char* train;
  const char* test;
  double mean_percent;
  double std_as_printed;
};

inline constexpr ReferenceRow kReferenceResults[] = {
    {"CASIA-Iris-Interval-v3", "CASIA-Iris-Interval-v3", 96.94, 0.005},
    {"ND-Iris-0405", "ND-Iris-0405", 99.58, 0.003},
    {"IIT-Delhi-Iris", "IIT-Delhi-Iris", 94.34, 0.008},
    {"ND-Iris-0405", "IIT-Delhi-Iris", 93.75, 0.016},
    {"ND-Iris-0405", "CASIA-Iris-Interval-v3", 95.26, 0.009},
    {"CASIA-Iris-Interval-v3", "IIT-Delhi-Iris", 93.86, 0.010},
    {"CASIA-Iris-Interval-v3", "ND-Iris-0405", 98.86, 0.002},
    {"IIT-Delhi-Iris", "ND-Iris-0405", 98.92, 0.002},
    {"IIT-Delhi-Iris", "CASIA-Iris-Interval-v3", 95.49, 0.008},
};

/// Overlay panels: input | ground truth | prediction. In the prediction
/// panel an iris pixel is drawn with blue = 255 and red < 128; the prompt
/// box is green. The binarized prediction is also written as
/// <id>_pred.png. Samples are chosen by a seeded shuffle of the test split.
std::vector<std::filesystem::path> emit_overlays(const SegModel& model,
                                                 const DatasetManifest& manifest,
                                                 const std::filesystem::path& out_dir, int count,
                                                 std::uint64_t seed, PromptMode mode);

/// Prediction mask recovered from an overlay's prediction panel.
Mask tinted_pixels(const std::filesystem::path& overlay);

}  // namespace irisseg
