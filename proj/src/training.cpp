#include "irisseg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "irisseg/errors.hpp"
#include "irisseg/foundation_adapter.hpp"
#include "irisseg/parallel.hpp"
#include "irisseg/tiny_ref_net.hpp"

namespace fs = std::filesystem;

namespace irisseg {
namespace {

constexpr std::size_t kPreloadBudgetBytes = std::size_t{1} << 30;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

struct StepResult {
  double loss = 0.0;
  nn::FloatBuffer grads;
};

StepResult sample_step(const SegModel& model, const Sample& sample, const BoundingBox& box,
                       const TrainConfig& config, std::uint64_t triplet_seed) {
  const bool triplet = config.loss == LossKind::triplet;
  const auto state = model.forward(sample.image.image, box, triplet);
  StepResult out;
  out.grads.assign(model.parameters().size(), 0.0f);

  std::vector<float> d_logits(state->logits.values.size(), 0.0f);
  std::vector<float> d_embedding;
  if (triplet) {
    const std::vector<double> emb(state->embedding.data.begin(), state->embedding.data.end());
    TripletSpec spec = config.triplet;
    spec.seed = triplet_seed;
    const LossResult r = triplet_loss(emb, sample.mask, spec);
    out.loss = r.value;
    d_embedding.assign(r.grad.begin(), r.grad.end());
  } else {
    const std::vector<double> logits(state->logits.values.begin(), state->logits.values.end());
    const PixelBatch batch{logits, sample.mask.data()};
    LossResult r;
    switch (config.loss) {
      case LossKind::focal: r = focal_loss(batch, config.focal); break;
      case LossKind::ce: r = ce_loss(batch); break;
      case LossKind::dice: r = dice_loss(batch); break;
      case LossKind::triplet: break;
    }
    out.loss = r.value;
    std::transform(r.grad.begin(), r.grad.end(), d_logits.begin(),
                   [](double g) { return static_cast<float>(g); });
  }
  if (!std::isfinite(out.loss)) return out;
  model.backward(*state, d_logits, d_embedding, out.grads);
  return out;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

}  // namespace

double TrainConfig::effective_learning_rate() const {
  if (learning_rate != 0.0) return learning_rate;
  return backbone == "foundation" ? 1e-4 : 1e-2;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw UserError("learning rate must be > 0");
  }
  if (epochs < 1) throw UserError("epochs must be >= 1");
  if (batch_size < 1) throw UserError("batch size must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw UserError("momentum must lie in [0, 1)");
  if (!(focal.alpha > 0.0 && focal.alpha < 1.0)) throw UserError("alpha must lie in (0, 1)");
  if (!(focal.gamma >= 0.0)) throw UserError("gamma must be >= 0");
  if (!(triplet.margin > 0.0)) throw UserError("triplet margin must be > 0");
  if (triplet.samples_per_image < 1) throw UserError("triplet samples per image must be >= 1");
  if (perturb.max_shift < 0 || perturb.max_scale < 0) throw UserError("perturbation must be >= 0");
  if (backbone != "tiny" && backbone != "foundation") {
    throw UserError("unknown backbone '" + backbone + "' (expected tiny or foundation)");
  }
}

Metadata TrainConfig::echo() const {
  return {{"learning_rate", fmt_double(effective_learning_rate())},
          {"epochs", std::to_string(epochs)},
          {"batch_size", std::to_string(batch_size)},
          {"momentum", fmt_double(momentum)},
          {"loss", to_string(loss)},
          {"alpha", fmt_double(focal.alpha)},
          {"gamma", fmt_double(focal.gamma)},
          {"triplet_margin", fmt_double(triplet.margin)},
          {"triplet_samples", std::to_string(triplet.samples_per_image)},
          {"embedding_dim", std::to_string(triplet.embedding_dim)},
          {"perturb_max_shift", std::to_string(perturb.max_shift)},
          {"perturb_max_scale", std::to_string(perturb.max_scale)},
          {"perturb_boxes", perturb_boxes ? "1" : "0"},
          {"seed", std::to_string(seed)},
          {"backbone", backbone},
          {"resolution", std::to_string(resolution)},
          {"foundation_checkpoint", foundation_checkpoint.string()},
          {"checkpoint_interval", std::to_string(checkpoint_interval)}};
}

std::vector<double> TrainLog::losses() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.mean_loss);
  return out;
}

void write_train_log_csv(const TrainLog& log, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + file.string());
  out << "epoch,mean_loss,seconds\n" << std::setprecision(17);
  for (const auto& e : log.epochs) out << e.epoch << ',' << e.mean_loss << ',' << e.seconds << '\n';
}

TrainLog read_train_log_csv(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw MalformedCsv("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,mean_loss", 0) != 0) {
    throw MalformedCsv(file.string() + ": missing 'epoch,mean_loss,seconds' header");
  }
  TrainLog log;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    EpochStat e;
    char c1 = 0, c2 = 0;
    if (!(is >> e.epoch >> c1 >> e.mean_loss >> c2 >> e.seconds) || c1 != ',' || c2 != ',') {
      throw MalformedCsv(file.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    log.epochs.push_back(e);
  }
  return log;
}

std::unique_ptr<SegModel> make_model(const TrainConfig& config) {
  if (config.backbone == "tiny") {
    TinyRefNetConfig cfg;
    if (config.resolution > 0) cfg.resolution = config.resolution;
    cfg.embedding_dim = config.triplet.embedding_dim;
    cfg.init_seed = config.seed;
    return std::make_unique<TinyRefNet>(cfg);
  }
  if (config.backbone == "foundation") {
    if (config.foundation_checkpoint.empty()) {
      throw MissingCheckpoint("the foundation backbone needs --checkpoint");
    }
    FoundationConfig cfg = FoundationConfig::from_directory(config.foundation_checkpoint);
    if (config.resolution > 0) cfg.resolution = config.resolution;
    return std::make_unique<FoundationAdapter>(cfg);
  }
  throw UserError("unknown backbone '" + config.backbone + "'");
}

std::string manifest_digest(const DatasetManifest& manifest) {
  std::ostringstream os;
  os << manifest.name << '\n' << manifest.split_seed << '\n';
  for (const auto& r : manifest.records) {
    os << r.image_path.generic_string() << '\t' << r.mask_path.generic_string() << '\t'
       << r.identity_id << '\t' << to_string(r.split) << '\n';
  }
  const std::string text = os.str();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

TrainLog train_model(SegModel& model, const DatasetManifest& manifest, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  config.validate();
  const auto records = manifest.split(Split::train);
  if (records.empty()) throw EmptyTrainSplit("train split of '" + manifest.name + "' is empty");
  if (config.loss == LossKind::triplet && model.embedding_dim() < 1) {
    throw UserError("triplet loss needs a backbone with an embedding head");
  }
  const Extent extent = model.input_extent();
  const int channels = model.image_channels();

  // Small datasets stay in memory; large ones are read per step.
  const std::size_t sample_bytes =
      static_cast<std::size_t>(channels) * extent.height * extent.width * sizeof(float);
  const bool preload = records.size() * sample_bytes <= kPreloadBudgetBytes;
  std::vector<std::optional<Sample>> cache(records.size());
  std::vector<char> quarantined(records.size(), 0);
  TrainLog log;
  auto quarantine = [&](std::size_t i, const std::string& why) {
    if (quarantined[i]) return;
    quarantined[i] = 1;
    ++log.quarantined;
    spdlog::warn("quarantined {}: {}", records[i].id(), why);
  };
  if (preload) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      try {
        cache[i] = load_sample(manifest, records[i], channels, extent);
      } catch (const Error& e) {
        quarantine(i, e.what());
      }
    }
  }
  if (std::count(quarantined.begin(), quarantined.end(), 0) == 0) {
    throw EmptyTrainSplit("every train record of '" + manifest.name + "' was quarantined");
  }

  log.config = config.echo();
  log.config["manifest_digest"] = manifest_digest(manifest);
  auto params = model.parameters();
  nn::FloatBuffer velocity(config.momentum > 0.0 ? params.size() : 0, 0.0f);
  nn::FloatBuffer grads(params.size());
  const auto lr = static_cast<float>(config.effective_learning_rate());
  const auto momentum = static_cast<float>(config.momentum);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(config.seed + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::erase_if(order, [&](std::size_t i) { return quarantined[i] != 0; });

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::size_t n = stop - start;
      std::vector<std::optional<StepResult>> steps(n);
      std::vector<std::string> load_errors(n);
      parallel_for(n, config.threads, [&](std::size_t k) {
        const std::size_t i = order[start + k];
        std::optional<Sample> fresh;
        const Sample* sample = cache[i] ? &*cache[i] : nullptr;
        if (!sample) {
          try {
            fresh = load_sample(manifest, records[i], channels, extent);
            sample = &*fresh;
          } catch (const Error& e) {
            load_errors[k] = e.what();
            return;
          }
        }
        BoundingBox box = sample->box;
        if (config.perturb_boxes) {
          PerturbSpec spec = config.perturb;
          spec.seed = derive_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1, i);
          box = perturb_bbox(box, spec, extent);
        }
        steps[k] = sample_step(model, *sample, box, config,
                               derive_seed(config.seed ^ 0x7f4a7c15u, static_cast<std::uint64_t>(epoch), i));
      });

      std::fill(grads.begin(), grads.end(), 0.0f);
      std::size_t used = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[start + k];
        if (!steps[k]) {
          quarantine(i, load_errors[k]);
          continue;
        }
        if (!std::isfinite(steps[k]->loss)) {
          throw DivergedLoss("non-finite loss at epoch " + std::to_string(epoch + 1) + " on sample " +
                             records[i].id());
        }
        for (std::size_t p = 0; p < grads.size(); ++p) grads[p] += steps[k]->grads[p];
        loss_sum += steps[k]->loss;
        ++used;
      }
      if (used == 0) continue;
      seen += used;
      const float scale = 1.0f / static_cast<float>(used);
      if (momentum > 0.0f) {
        for (std::size_t p = 0; p < params.size(); ++p) {
          velocity[p] = momentum * velocity[p] + grads[p] * scale;
          params[p] -= lr * velocity[p];
        }
      } else {
        for (std::size_t p = 0; p < params.size(); ++p) params[p] -= lr * grads[p] * scale;
      }
      if (!std::all_of(params.begin(), params.end(), [](float p) { return std::isfinite(p); })) {
        std::string ids;
        for (std::size_t k = 0; k < n; ++k) ids += (k ? "," : "") + records[order[start + k]].id();
        throw DivergedLoss("non-finite parameter at epoch " + std::to_string(epoch + 1) +
                           " after the step on samples " + ids);
      }
    }
    if (seen == 0) throw EmptyTrainSplit("no train sample could be loaded");
    const double mean = loss_sum / static_cast<double>(seen);
    if (!std::isfinite(mean)) {
      throw DivergedLoss("non-finite mean loss at epoch " + std::to_string(epoch + 1));
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    log.epochs.push_back({epoch + 1, mean, seconds});
    if (on_epoch) on_epoch(epoch + 1, mean);

    if (config.checkpoint_interval > 0 && !config.checkpoint_dir.empty() &&
        (epoch + 1) % config.checkpoint_interval == 0 && epoch + 1 < config.epochs) {
      Metadata meta = log.config;
      meta["epoch"] = std::to_string(epoch + 1);
      save_checkpoint(model, config.checkpoint_dir / fmt::format("epoch_{:04d}.ckpt", epoch + 1), meta);
    }
  }
  return log;
}

TrainResult train(const DatasetManifest& manifest, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  TrainResult result;
  result.model = make_model(config);
  result.log = train_model(*result.model, manifest, config, on_epoch);
  if (!config.checkpoint_dir.empty()) {
    Metadata meta = result.log.config;
    meta["epoch"] = std::to_string(config.epochs);
    meta["dataset"] = manifest.name;
    result.log.checkpoint = config.checkpoint_dir / "model.ckpt";
    save_checkpoint(*result.model, result.log.checkpoint, meta);
    write_train_log_csv(result.log, config.checkpoint_dir / "train_log.csv");
  }
  return result;
}

namespace {

std::vector<ArmResult> run_arms(const DatasetManifest& manifest, std::vector<ArmResult> arms,
                                const EvalOptions& eval) {
  for (auto& arm : arms) {
    try {
      TrainResult r = train(manifest, arm.config);
      arm.log = std::move(r.log);
      arm.report = evaluate(*r.model, manifest, eval, arm.log.checkpoint.string());
    } catch (const std::exception& e) {
      arm.error = e.what();
      spdlog::error("arm {} failed: {}", arm.label, e.what());
    }
  }
  return arms;
}

}  // namespace

std::vector<ArmResult> sweep_gamma(const DatasetManifest& manifest, const TrainConfig& base,
                                   const std::vector<double>& gammas, const EvalOptions& eval) {
  if (gammas.empty()) throw UserError("gamma sweep needs at least one value");
  std::vector<ArmResult> arms;
  for (double g : gammas) {
    ArmResult arm;
    arm.label = "gamma=" + fmt_double(g);
    arm.config = base;
    arm.config.loss = LossKind::focal;
    arm.config.focal.gamma = g;
    if (!base.checkpoint_dir.empty()) arm.config.checkpoint_dir = base.checkpoint_dir / ("gamma_" + fmt_double(g));
    arms.push_back(std::move(arm));
  }
  return run_arms(manifest, std::move(arms), eval);
}

std::vector<ArmResult> compare_losses(const DatasetManifest& manifest, const TrainConfig& base,
                                      const std::vector<LossKind>& losses, const EvalOptions& eval) {
  if (losses.empty()) throw UserError("loss comparison needs at least one loss");
  std::vector<ArmResult> arms;
  for (LossKind kind : losses) {
    ArmResult arm;
    arm.label = to_string(kind);
    arm.config = base;
    arm.config.loss = kind;
    if (!base.checkpoint_dir.empty()) arm.config.checkpoint_dir = base.checkpoint_dir / ("loss_" + to_string(kind));
    arms.push_back(std::move(arm));
  }
  return run_arms(manifest, std::move(arms), eval);
}

void write_arms_csv(const std::vector<ArmResult>& arms, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + file.string());
  out << "label,loss,gamma,alpha,mean_iou,std_iou,final_loss,checkpoint,error\n"
      << std::setprecision(17);
  for (const auto& a : arms) {
    std::string err = a.error;
    std::replace(err.begin(), err.end(), ',', ';');
    out << a.label << ',' << to_string(a.config.loss) << ',' << a.config.focal.gamma << ','
        << a.config.focal.alpha << ',';
    if (a.error.empty()) {
      out << a.report.mean_iou << ',' << a.report.std_iou << ','
          << (a.log.epochs.empty() ? 0.0 : a.log.epochs.back().mean_loss) << ','
          << a.log.checkpoint.generic_string() << ",\n";
    } else {
      out << ",,,," << err << '\n';
    }
  }
}

void write_loss_curves_csv(const std::vector<ArmResult>& arms, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + file.string());
  out << "epoch";
  std::size_t rows = 0;
  for (const auto& a : arms) {
    out << ',' << a.label;
    rows = std::max(rows, a.log.epochs.size());
  }
  out << '\n' << std::setprecision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    out << r + 1;
    for (const auto& a : arms) {
      out << ',';
      if (r < a.log.epochs.size()) out << a.log.epochs[r].mean_loss;
    }
    out << '\n';
  }
}

}  // namespace irisseg
