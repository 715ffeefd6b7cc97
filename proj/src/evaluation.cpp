#include "irisseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "irisseg/checkpoint.hpp"
#include "irisseg/errors.hpp"
#include "irisseg/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace irisseg {

double iou(const Mask& predicted, const Mask& truth) {
  if (predicted.extent() != truth.extent()) throw ShapeMismatch("IoU of masks with different shapes");
  std::size_t inter = 0, uni = 0;
  const auto a = predicted.data();
  const auto b = truth.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] & b[i];
    uni += a[i] | b[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> pr_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 19; ++i) t.push_back(i * 0.05);
  return t;
}

PrAccumulator::PrAccumulator()
    : thresholds_(pr_thresholds()),
      tp_(thresholds_.size(), 0),
      fp_(thresholds_.size(), 0),
      fn_(thresholds_.size(), 0) {}

void PrAccumulator::add(const Raster& logits, const Mask& truth) {
  if (logits.extent() != truth.extent()) throw ShapeMismatch("PR input shapes differ");
  const auto y = truth.data();
  for (std::size_t i = 0; i < logits.values.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.values[i])));
    for (std::size_t k = 0; k < thresholds_.size(); ++k) {
      const bool predicted = p >= thresholds_[k];
      if (predicted && y[i]) ++tp_[k];
      else if (predicted) ++fp_[k];
      else if (y[i]) ++fn_[k];
    }
  }
}

void PrAccumulator::merge(const PrAccumulator& other) {
  for (std::size_t k = 0; k < thresholds_.size(); ++k) {
    tp_[k] += other.tp_[k];
    fp_[k] += other.fp_[k];
    fn_[k] += other.fn_[k];
  }
}

std::vector<PrPoint> PrAccumulator::curve() const {
  std::vector<PrPoint> out;
  for (std::size_t k = 0; k < thresholds_.size(); ++k) {
    const double tp = static_cast<double>(tp_[k]);
    // No predicted (or no actual) positives: nothing was wrong, report 1.
    const double precision = tp_[k] + fp_[k] == 0 ? 1.0 : tp / static_cast<double>(tp_[k] + fp_[k]);
    const double recall = tp_[k] + fn_[k] == 0 ? 1.0 : tp / static_cast<double>(tp_[k] + fn_[k]);
    out.push_back({thresholds_[k], precision, recall});
  }
  return out;
}

void aggregate(EvalReport& report) {
  if (report.per_image.empty()) {
    report.mean_iou = 0.0;
    report.std_iou = 0.0;
    return;
  }
  double sum = 0.0;
  for (const auto& s : report.per_image) sum += s.iou;
  const double n = static_cast<double>(report.per_image.size());
  report.mean_iou = sum / n;
  double sq = 0.0;
  for (const auto& s : report.per_image) sq += (s.iou - report.mean_iou) * (s.iou - report.mean_iou);
  report.std_iou = std::sqrt(sq / n);
}

EvalReport evaluate(const SegModel& model, const DatasetManifest& manifest,
                    const EvalOptions& options, const std::string& checkpoint_id) {
  const auto records = manifest.split(Split::test);
  if (records.empty()) throw UserError("test split of '" + manifest.name + "' is empty");

  struct Outcome {
    std::optional<double> score;
    std::string error;
    PrAccumulator pr;
  };
  std::vector<Outcome> outcomes(records.size());
  parallel_for(records.size(), options.threads, [&](std::size_t i) {
    auto& out = outcomes[i];
    try {
      const Sample s = load_sample(manifest, records[i], model.image_channels(), model.input_extent());
      const BoundingBox box = infer_box(model, s.image.image, options.prompt_mode, &s.mask);
      const Raster logits = predict_mask(model, s.image.image, box);
      if (options.native_resolution) {
        const Raster native = s.image.transform.logits_to_native(logits);
        const Mask truth = read_mask(manifest.resolve(records[i].mask_path));
        out.score = iou(binarize(native, options.threshold), truth);
        out.pr.add(native, truth);
      } else {
        out.score = iou(binarize(logits, options.threshold), s.mask);
        out.pr.add(logits, s.mask);
      }
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  EvalReport report;
  report.dataset = manifest.name;
  report.checkpoint_id = checkpoint_id;
  report.prompt_strategy = to_string(options.prompt_mode);
  PrAccumulator pooled;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!outcomes[i].score) {
      spdlog::warn("quarantined {}: {}", records[i].id(), outcomes[i].error);
      ++report.quarantined;
      continue;
    }
    report.per_image.push_back({records[i].id(), *outcomes[i].score});
    pooled.merge(outcomes[i].pr);
  }
  aggregate(report);
  report.precision_recall = pooled.curve();
  return report;
}

}  // namespace irisseg

namespace irisseg {

json report_to_json(const EvalReport& r) {
  json per_image = json::array();
  for (const auto& s : r.per_image) per_image.push_back({{"id", s.id}, {"iou", s.iou}});
  json pr = json::array();
  for (const auto& p : r.precision_recall) {
    pr.push_back({{"threshold", p.threshold}, {"precision", p.precision}, {"recall", p.recall}});
  }
  return {{"dataset", r.dataset},
          {"checkpoint_id", r.checkpoint_id},
          {"prompt_strategy", r.prompt_strategy},
          {"per_image", per_image},
          {"mean_iou", r.mean_iou},
          {"std_iou", r.std_iou},
          {"mean_iou_percent", r.mean_iou * 100.0},
          {"std_iou_percent", r.std_iou * 100.0},
          {"precision_recall", pr},
          {"quarantined", r.quarantined}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  r.prompt_strategy = j.at("prompt_strategy").get<std::string>();
  for (const auto& s : j.at("per_image")) {
    r.per_image.push_back({s.at("id").get<std::string>(), s.at("iou").get<double>()});
  }
  r.mean_iou = j.at("mean_iou").get<double>();
  r.std_iou = j.at("std_iou").get<double>();
  for (const auto& p : j.at("precision_recall")) {
    r.precision_recall.push_back(
        {p.at("threshold").get<double>(), p.at("precision").get<double>(), p.at("recall").get<double>()});
  }
  r.quarantined = j.at("quarantined").get<std::size_t>();
  return r;
}

void write_report(const EvalReport& report, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoFailure("cannot write report " + file.string());
  out << report_to_json(report).dump(2) << '\n';
}

EvalReport read_report(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw UserError("cannot open report " + file.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw UserError("malformed report " + file.string() + ": " + e.what());
  }
}

void write_pr_csv(const EvalReport& report, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + file.string());
  out << "threshold,precision,recall\n" << std::setprecision(17);
  for (const auto& p : report.precision_recall) {
    out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
  }
}

std::vector<CrossCell> cross_evaluate(const std::vector<TrainedModel>& checkpoints,
                                      const std::vector<DatasetManifest>& manifests,
                                      const EvalOptions& options) {
  if (manifests.size() < 2) throw UserError("cross-evaluation needs at least two datasets");
  std::vector<CrossCell> cells;
  for (const auto& trained : checkpoints) {
    std::unique_ptr<SegModel> model;
    std::string load_error;
    try {
      model = load_checkpoint(trained.checkpoint);
    } catch (const std::exception& e) {
      load_error = e.what();
    }
    for (const auto& m : manifests) {
      if (m.name == trained.dataset) continue;
      CrossCell cell{trained.dataset, m.name, {}, load_error};
      if (model) {
        try {
          cell.report = evaluate(*model, m, options, trained.checkpoint.string());
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
      }
      if (!cell.error.empty()) spdlog::error("{} -> {}: {}", cell.train_dataset, cell.test_dataset, cell.error);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

void write_matrix_csv(const std::vector<CrossCell>& cells, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + file.string());
  out << "train,test,mean,std,mean_percent,std_percent,error\n" << std::setprecision(17);
  for (const auto& c : cells) {
    out << c.train_dataset << ',' << c.test_dataset << ',';
    if (c.error.empty()) {
      out << c.report.mean_iou << ',' << c.report.std_iou << ',' << c.report.mean_iou * 100.0 << ','
          << c.report.std_iou * 100.0 << ",\n";
    } else {
      std::string msg = c.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      out << ",,,," << msg << '\n';
    }
  }
}

std::vector<fs::path> emit_overlays(const SegModel& model, const DatasetManifest& manifest,
                                    const fs::path& out_dir, int count, std::uint64_t seed,
                                    PromptMode mode) {
  std::vector<fs::path> written;
  if (count <= 0) return written;
  auto records = manifest.split(Split::test);
  std::mt19937_64 rng(seed);
  std::shuffle(records.begin(), records.end(), rng);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir.string());
  for (const auto& record : records) {
    if (static_cast<int>(written.size()) >= count) break;
    Sample s;
    try {
      s = load_sample(manifest, record, model.image_channels(), model.input_extent());
    } catch (const Error& e) {
      spdlog::warn("overlay skipped {}: {}", record.id(), e.what());
      continue;
    }
    const BoundingBox box = infer_box(model, s.image.image, mode, &s.mask);
    const Mask pred = binarize(predict_mask(model, s.image.image, box));

    const int h = s.mask.height(), w = s.mask.width();
    cv::Mat gray;
    if (s.image.image.channels == 1) {
      gray = to_gray8(s.image.image);
    } else {
      nn::Tensor luma(1, h, w);
      for (std::size_t i = 0; i < luma.plane(); ++i) {
        luma.data[i] = 0.299f * s.image.image.channel(0)[i] + 0.587f * s.image.image.channel(1)[i] +
                       0.114f * s.image.image.channel(2)[i];
      }
      gray = to_gray8(luma);
    }
    cv::Mat canvas(h, 3 * w, CV_8UC3);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::uint8_t g = gray.at<std::uint8_t>(r, c);
        canvas.at<cv::Vec3b>(r, c) = {g, g, g};
        const std::uint8_t t = s.mask.at(r, c) ? 255 : 0;
        canvas.at<cv::Vec3b>(r, w + c) = {t, t, t};
        canvas.at<cv::Vec3b>(r, 2 * w + c) =
            pred.at(r, c) ? cv::Vec3b{255, static_cast<std::uint8_t>(g / 2), static_cast<std::uint8_t>(g / 2)}
                          : cv::Vec3b{g, g, g};
      }
    }
    // Box outline: green on background, cyan over predicted pixels so the
    // blue/red tint rule still identifies them.
    for (int x = box.x_min; x <= box.x_max; ++x) {
      for (int y : {box.y_min, box.y_max}) {
        auto& px = canvas.at<cv::Vec3b>(y, 2 * w + x);
        px = pred.at(y, x) ? cv::Vec3b{255, 255, 0} : cv::Vec3b{0, 255, 0};
      }
    }
    for (int y = box.y_min; y <= box.y_max; ++y) {
      for (int x : {box.x_min, box.x_max}) {
        auto& px = canvas.at<cv::Vec3b>(y, 2 * w + x);
        px = pred.at(y, x) ? cv::Vec3b{255, 255, 0} : cv::Vec3b{0, 255, 0};
      }
    }
    const fs::path file = out_dir / (s.id + "_overlay.png");
    if (!cv::imwrite(file.string(), canvas)) throw IoFailure("cannot write " + file.string());
    write_mask(pred, out_dir / (s.id + "_pred.png"));
    written.push_back(file);
  }
  return written;
}

Mask tinted_pixels(const fs::path& overlay) {
  const cv::Mat img = cv::imread(overlay.string(), cv::IMREAD_COLOR);
  if (img.empty() || img.cols % 3 != 0) throw UnreadableImage("not an overlay: " + overlay.string());
  const int w = img.cols / 3;
  Mask m(img.rows, w);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto& px = img.at<cv::Vec3b>(r, 2 * w + c);
      m.set(r, c, px[0] == 255 && px[2] < 128);
    }
  }
  return m;
}

}  // namespace irisseg
