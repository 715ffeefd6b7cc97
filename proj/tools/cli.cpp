#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "irisseg/checkpoint.hpp"
#include "irisseg/errors.hpp"
#include "irisseg/evaluation.hpp"
#include "irisseg/plot.hpp"
#include "irisseg/synth.hpp"
#include "irisseg/training.hpp"

namespace irisseg::cli {
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitRuntime = 2;

std::string join(const std::vector<std::string>& items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

/// Splits "label=path"; a bare path has an empty label.
std::pair<std::string, std::string> split_labeled(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) return {"", s};
  return {s.substr(0, eq), s.substr(eq + 1)};
}

struct Options {
  // shared
  std::string out;
  std::string manifest;
  std::vector<std::string> manifests;
  std::string checkpoint;
  std::vector<std::string> checkpoints;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string prompt_mode = "two-pass";

  // synth
  int count = 64;
  std::string variant = "a";
  int image_size = 128;
  int images_per_identity = 4;
  std::string name;
  double train_fraction = 0.8;

  // prepare
  std::string root;
  std::string layout = "generic";
  std::string identity_regex;
  std::string mask_prefix, mask_suffix;
  std::string image_dir = "images", mask_dir = "masks";
  std::uint64_t split_seed = 0;

  // train
  std::string loss = "focal";
  double alpha = 0.25;
  double gamma = 2.0;
  double triplet_margin = 1.0;
  std::optional<double> lr;  // unset = backbone default
  int epochs = 100;
  int batch_size = 4;
  double momentum = 0.0;
  std::string backbone = "tiny";
  int resolution = 0;
  std::string foundation_dir;
  int max_shift = 10, max_scale = 10;
  bool no_perturb = false;
  int checkpoint_interval = 0;
  std::vector<double> gammas{1, 2, 5};
  std::vector<std::string> losses{"focal", "dice", "triplet"};

  // overlay
  int overlay_count = 8;

  // eval
  std::string report;
  std::string pr_csv;
  double threshold = 0.5;
  bool native = false;

  // plot
  std::vector<std::string> loss_csvs;
  std::vector<std::string> pr_csvs;
  std::string title;

  // rerun
  std::string config;
};

class Cli {
 public:
  Cli();
  int run(const std::vector<std::string>& args);

 private:
  CLI::App* add(const std::string& name, const std::string& about);
  CLI::Option* path_option(CLI::App* sub, const std::string& name, std::string& into,
                           const std::string& about);
  void add_train_flags(CLI::App* sub);
  void write_echo(const CLI::App* sub, const fs::path& file) const;
  TrainConfig train_config() const;
  EvalOptions eval_options() const;
  DatasetManifest manifest() const;
  void default_out(const std::string& command);

  int synth();
  int prepare();
  int train();
  int sweep();
  int compare_losses();
  int eval();
  int cross_eval();
  int overlay();
  int plot();
  int rerun();

  CLI::App app_{"Iris segmentation with bounding-box prompts"};
  Options o_;
  std::set<std::string> path_names_;
};

CLI::App* Cli::add(const std::string& name, const std::string& about) {
  return app_.add_subcommand(name, about);
}

CLI::Option* Cli::path_option(CLI::App* sub, const std::string& name, std::string& into,
                              const std::string& about) {
  path_names_.insert(name);
  return sub->add_option("--" + name, into, about);
}

void Cli::add_train_flags(CLI::App* sub) {
  path_option(sub, "manifest", o_.manifest, "dataset manifest (manifest.tsv)")->required();
  path_option(sub, "out", o_.out, "output directory (default <manifest dir>/runs/<command>)");
  sub->add_option("--loss", o_.loss, "focal, ce, dice or triplet")
      ->check(CLI::IsMember({"focal", "ce", "dice", "triplet"}));
  sub->add_option("--alpha", o_.alpha, "focal class weight for iris pixels");
  sub->add_option("--gamma", o_.gamma, "focal focusing parameter")->check(CLI::NonNegativeNumber);
  sub->add_option("--triplet-margin", o_.triplet_margin, "triplet hinge margin");
  sub->add_option("--lr", o_.lr, "SGD learning rate (default 1e-2 tiny, 1e-4 foundation)")->check(CLI::PositiveNumber);
  sub->add_option("--epochs", o_.epochs, "training epochs")->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", o_.batch_size, "samples per SGD step")->check(CLI::PositiveNumber);
  sub->add_option("--momentum", o_.momentum, "SGD momentum (0 = plain SGD)");
  sub->add_option("--seed", o_.seed, "seed for init, shuffling and box perturbation");
  sub->add_option("--backbone", o_.backbone, "tiny or foundation")
      ->check(CLI::IsMember({"tiny", "foundation"}));
  sub->add_option("--resolution", o_.resolution, "tiny backbone input size (0 = default)");
  path_option(sub, "foundation-dir", o_.foundation_dir,
              "directory holding encoder.onnx and decoder.onnx");
  sub->add_option("--max-shift", o_.max_shift, "box perturbation: max translation in pixels");
  sub->add_option("--max-scale", o_.max_scale, "box perturbation: max per-edge change in pixels");
  sub->add_flag("--no-perturb", o_.no_perturb, "train on exact ground-truth boxes");
  sub->add_option("--checkpoint-interval", o_.checkpoint_interval,
                  "epochs between intermediate checkpoints (0 = final only)");
  sub->add_option("--threads", o_.threads, "worker threads (0 = all cores)");
}

Cli::Cli() {
  app_.name("irisseg");
  app_.require_subcommand(1);
  app_.option_defaults()->always_capture_default();

  auto* synth = add("synth", "generate a synthetic eye dataset");
  synth->add_option("--count", o_.count, "number of images")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", o_.seed, "generator seed");
  synth->add_option("--variant", o_.variant, "appearance variant a, b or c")
      ->check(CLI::IsMember({"a", "b", "c"}));
  synth->add_option("--image-size", o_.image_size, "square image size")->check(CLI::PositiveNumber);
  synth->add_option("--images-per-identity", o_.images_per_identity, "images per identity")
      ->check(CLI::PositiveNumber);
  synth->add_option("--name", o_.name, "dataset name (default synth-<variant>)");
  synth->add_option("--train-fraction", o_.train_fraction, "share of identities in train");
  path_option(synth, "out", o_.out, "output directory")->required();

  auto* prepare = add("prepare", "pair images with masks and split by identity");
  path_option(prepare, "root", o_.root, "dataset root")->required();
  prepare->add_option("--layout", o_.layout, "casia, nd, iitd, synth or generic")
      ->check(CLI::IsMember({"casia", "nd", "iitd", "synth", "generic"}));
  prepare->add_option("--identity-regex", o_.identity_regex,
                      "regex over the image stem; group 1 is the identity");
  prepare->add_option("--mask-prefix", o_.mask_prefix, "mask stem prefix");
  prepare->add_option("--mask-suffix", o_.mask_suffix, "mask stem suffix");
  prepare->add_option("--image-dir", o_.image_dir, "image subdirectory");
  prepare->add_option("--mask-dir", o_.mask_dir, "mask subdirectory");
  prepare->add_option("--split-seed", o_.split_seed, "identity shuffle seed");
  prepare->add_option("--train-fraction", o_.train_fraction, "share of identities in train");
  prepare->add_option("--name", o_.name, "dataset name (default: root folder name)");
  path_option(prepare, "out", o_.out, "output directory for manifest.tsv")->required();

  auto* train = add("train", "fine-tune a model on a manifest's train split");
  add_train_flags(train);

  auto* sweep = add("sweep", "train and evaluate one model per focal gamma");
  add_train_flags(sweep);
  sweep->add_option("--gammas", o_.gammas, "comma-separated gammas")->delimiter(',');
  sweep->add_option("--prompt-mode", o_.prompt_mode, "full, two-pass or gt")
      ->check(CLI::IsMember({"full", "two-pass", "gt"}));

  auto* compare = add("compare-losses", "train and evaluate one model per loss");
  add_train_flags(compare);
  compare->add_option("--losses", o_.losses, "comma-separated losses")
      ->delimiter(',')
      ->check(CLI::IsMember({"focal", "ce", "dice", "triplet"}));
  compare->add_option("--prompt-mode", o_.prompt_mode, "full, two-pass or gt")
      ->check(CLI::IsMember({"full", "two-pass", "gt"}));

  auto* eval = add("eval", "score a checkpoint on a manifest's test split");
  path_option(eval, "manifest", o_.manifest, "dataset manifest")->required();
  path_option(eval, "checkpoint", o_.checkpoint, "checkpoint blob")->required();
  eval->add_option("--prompt-mode", o_.prompt_mode, "full, two-pass or gt")
      ->check(CLI::IsMember({"full", "two-pass", "gt"}));
  eval->add_option("--threshold", o_.threshold, "binarization threshold on probabilities");
  eval->add_flag("--native", o_.native, "score at native image resolution");
  path_option(eval, "report", o_.report, "report JSON path")->required();
  path_option(eval, "pr-csv", o_.pr_csv, "PR curve CSV (default <report stem>_pr.csv)");
  eval->add_option("--threads", o_.threads, "worker threads (0 = all cores)");

  auto* cross = add("cross-eval", "evaluate every checkpoint on every other dataset");
  cross->add_option("--manifests", o_.manifests, "comma-separated manifests")
      ->delimiter(',')
      ->required();
  cross->add_option("--checkpoints", o_.checkpoints,
                    "comma-separated dataset=checkpoint pairs (dataset = manifest name)")
      ->delimiter(',')
      ->required();
  cross->add_option("--prompt-mode", o_.prompt_mode, "full, two-pass or gt")
      ->check(CLI::IsMember({"full", "two-pass", "gt"}));
  cross->add_option("--threads", o_.threads, "worker threads (0 = all cores)");
  path_option(cross, "out", o_.out, "output directory")->required();
  path_names_.insert("manifests");
  path_names_.insert("checkpoints");

  auto* overlay = add("overlay", "write prediction overlays for random test images");
  path_option(overlay, "manifest", o_.manifest, "dataset manifest")->required();
  path_option(overlay, "checkpoint", o_.checkpoint, "checkpoint blob")->required();
  overlay->add_option("--count", o_.overlay_count, "number of overlays")->check(CLI::NonNegativeNumber);
  overlay->add_option("--seed", o_.seed, "image selection seed");
  overlay->add_option("--prompt-mode", o_.prompt_mode, "full, two-pass or gt")
      ->check(CLI::IsMember({"full", "two-pass", "gt"}));
  path_option(overlay, "out", o_.out, "output directory")->required();

  auto* plot = add("plot", "draw loss and precision-recall curves");
  plot->add_option("--loss-csv", o_.loss_csvs, "[label=]train_log.csv or loss_curves.csv")
      ->delimiter(',');
  plot->add_option("--pr-csv", o_.pr_csvs, "[label=]pr.csv")->delimiter(',');
  plot->add_option("--title", o_.title, "title prefix");
  path_option(plot, "out", o_.out, "output directory")->required();
  path_names_.insert("loss-csv");
  path_names_.insert("pr-csv");

  auto* rerun = add("rerun", "repeat a run from its config-echo file");
  rerun->add_option("--config", o_.config, "config-echo file")->required()->check(CLI::ExistingFile);
  rerun->add_option("--out", o_.out, "override the output location");

  for (CLI::App* sub : app_.get_subcommands({})) {
    for (CLI::Option* opt : sub->get_options()) {
      if (opt->get_default_str() == "{}") opt->default_str("");
    }
  }
}

// Absolute paths keep an echo file valid from any working directory.
std::string absolutize(const std::string& value) {
  if (value.empty()) return value;
  std::vector<std::string> parts;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');) {
    auto [label, path] = split_labeled(item);
    const std::string abs = fs::absolute(path).lexically_normal().string();
    parts.push_back(label.empty() ? abs : label + "=" + abs);
  }
  return join(parts);
}

void Cli::write_echo(const CLI::App* sub, const fs::path& file) const {
  Metadata values;
  values["command"] = sub->get_name();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help") continue;
    std::string value;
    if (opt->get_expected_min() == 0) {
      value = opt->count() > 0 ? "true" : "false";
    } else if (opt->count() > 0) {
      value = join(opt->results());
    } else {
      value = opt->get_default_str();
      // Vector defaults are captured as "[a,b]", empty ones as "{}".
      if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
        value = value.substr(1, value.size() - 2);
      }
      if (value == "{}") value.clear();
    }
    if (name == "out" && value.empty()) value = o_.out;  // resolved default
    if (path_names_.count(name)) value = absolutize(value);
    values[name] = value;
  }
  write_key_values(values, file);
}

TrainConfig Cli::train_config() const {
  TrainConfig c;
  c.learning_rate = o_.lr.value_or(0.0);
  c.epochs = o_.epochs;
  c.batch_size = o_.batch_size;
  c.momentum = o_.momentum;
  c.loss = parse_loss_kind(o_.loss);
  c.focal = {o_.alpha, o_.gamma};
  c.triplet.margin = o_.triplet_margin;
  c.triplet.seed = o_.seed;
  c.perturb.max_shift = o_.max_shift;
  c.perturb.max_scale = o_.max_scale;
  c.perturb_boxes = !o_.no_perturb;
  c.seed = o_.seed;
  c.backbone = o_.backbone;
  c.resolution = o_.resolution;
  c.foundation_checkpoint = o_.foundation_dir;
  c.checkpoint_dir = o_.out;
  c.checkpoint_interval = o_.checkpoint_interval;
  c.threads = o_.threads;
  c.validate();
  return c;
}

EvalOptions Cli::eval_options() const {
  EvalOptions e;
  e.prompt_mode = parse_prompt_mode(o_.prompt_mode);
  e.threshold = o_.threshold;
  e.native_resolution = o_.native;
  e.threads = o_.threads;
  return e;
}

DatasetManifest Cli::manifest() const { return load_manifest(o_.manifest); }

void Cli::default_out(const std::string& command) {
  if (o_.out.empty()) o_.out = (fs::path(o_.manifest).parent_path() / "runs" / command).string();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create " + dir.string() + ": " + ec.message());
}

int Cli::synth() {
  SynthSpec spec = SynthSpec::variant(o_.variant);
  spec.count = o_.count;
  spec.seed = o_.seed;
  spec.image_size = o_.image_size;
  spec.images_per_identity = o_.images_per_identity;
  spec.train_fraction = o_.train_fraction;
  spec.name = o_.name.empty() ? "synth-" + o_.variant : o_.name;
  make_dir(o_.out);
  const auto m = generate_synthetic(spec, o_.out);
  write_echo(app_.get_subcommand("synth"), fs::path(o_.out) / "synth.config");
  std::cout << fmt::format("{}: {} images, train {} / test {}\n", m.name, m.records.size(),
                           m.split(Split::train).size(), m.split(Split::test).size());
  return kExitOk;
}

int Cli::prepare() {
  LayoutSpec layout = LayoutSpec::preset(o_.layout);
  if (!o_.identity_regex.empty()) layout.identity_regex = o_.identity_regex;
  if (!o_.mask_prefix.empty()) layout.mask_prefix = o_.mask_prefix;
  if (!o_.mask_suffix.empty()) layout.mask_suffix = o_.mask_suffix;
  layout.image_dir = o_.image_dir;
  layout.mask_dir = o_.mask_dir;
  const std::string name =
      o_.name.empty() ? fs::absolute(o_.root).lexically_normal().filename().string() : o_.name;
  const auto m = build_manifest(o_.root, layout, o_.split_seed, o_.train_fraction, name);
  make_dir(o_.out);
  save_manifest(m, fs::path(o_.out) / "manifest.tsv");
  write_echo(app_.get_subcommand("prepare"), fs::path(o_.out) / "prepare.config");
  for (Split s : {Split::train, Split::test}) {
    std::cout << fmt::format("{}: {} images / {} identities\n", to_string(s), m.split(s).size(),
                             m.identity_count(s));
  }
  return kExitOk;
}

int Cli::train() {
  default_out("train");
  const TrainConfig config = train_config();
  const auto m = manifest();
  make_dir(o_.out);
  write_echo(app_.get_subcommand("train"), fs::path(o_.out) / "train.config");
  const auto result = irisseg::train(m, config, [&](int epoch, double loss) {
    spdlog::info("epoch {}/{} loss {:.6f}", epoch, config.epochs, loss);
  });
  std::cout << fmt::format("checkpoint {}\nfinal loss {:.6f}\n", result.log.checkpoint.string(),
                           result.log.epochs.back().mean_loss);
  return kExitOk;
}

int report_arms(const std::vector<ArmResult>& arms) {
  int code = kExitOk;
  for (const auto& a : arms) {
    if (!a.error.empty()) {
      std::cerr << fmt::format("error: arm {}: {}\n", a.label, a.error);
      code = kExitRuntime;
      continue;
    }
    std::cout << fmt::format("{}: mean IoU {:.4f} +/- {:.4f}, final loss {:.6f}\n", a.label,
                             a.report.mean_iou, a.report.std_iou, a.log.epochs.back().mean_loss);
  }
  return code;
}

int Cli::sweep() {
  default_out("sweep");
  const TrainConfig base = train_config();
  const auto m = manifest();
  make_dir(o_.out);
  write_echo(app_.get_subcommand("sweep"), fs::path(o_.out) / "sweep.config");
  const auto arms = sweep_gamma(m, base, o_.gammas, eval_options());
  write_arms_csv(arms, fs::path(o_.out) / "sweep.csv");
  write_loss_curves_csv(arms, fs::path(o_.out) / "loss_curves.csv");
  return report_arms(arms);
}

int Cli::compare_losses() {
  default_out("compare-losses");
  const TrainConfig base = train_config();
  const auto m = manifest();
  std::vector<LossKind> kinds;
  for (const auto& l : o_.losses) kinds.push_back(parse_loss_kind(l));
  make_dir(o_.out);
  write_echo(app_.get_subcommand("compare-losses"), fs::path(o_.out) / "compare-losses.config");
  const auto arms = irisseg::compare_losses(m, base, kinds, eval_options());
  write_arms_csv(arms, fs::path(o_.out) / "compare.csv");
  write_loss_curves_csv(arms, fs::path(o_.out) / "loss_curves.csv");
  return report_arms(arms);
}

int Cli::eval() {
  const auto m = manifest();
  const auto model = load_checkpoint(o_.checkpoint);
  const fs::path report(o_.report);
  if (report.has_parent_path()) make_dir(report.parent_path());
  write_echo(app_.get_subcommand("eval"), fs::path(report.string() + ".config"));
  const auto r = evaluate(*model, m, eval_options(), fs::path(o_.checkpoint).filename().string());
  write_report(r, report);
  const fs::path pr = o_.pr_csv.empty()
                          ? report.parent_path() / (report.stem().string() + "_pr.csv")
                          : fs::path(o_.pr_csv);
  write_pr_csv(r, pr);
  std::cout << fmt::format("{}: mean IoU {:.4f} +/- {:.4f} over {} images ({} quarantined)\n",
                           r.dataset, r.mean_iou, r.std_iou, r.per_image.size(), r.quarantined);
  return kExitOk;
}

int Cli::cross_eval() {
  std::vector<DatasetManifest> manifests;
  for (const auto& p : o_.manifests) manifests.push_back(load_manifest(p));
  std::vector<TrainedModel> models;
  for (const auto& item : o_.checkpoints) {
    auto [dataset, path] = split_labeled(item);
    if (dataset.empty()) throw UserError("checkpoint '" + item + "' lacks a dataset= prefix");
    models.push_back({dataset, path});
  }
  make_dir(o_.out);
  write_echo(app_.get_subcommand("cross-eval"), fs::path(o_.out) / "cross-eval.config");
  const auto cells = cross_evaluate(models, manifests, eval_options());
  write_matrix_csv(cells, fs::path(o_.out) / "matrix.csv");
  int code = kExitOk;
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      std::cerr << fmt::format("error: {} -> {}: {}\n", c.train_dataset, c.test_dataset, c.error);
      code = kExitRuntime;
      continue;
    }
    write_report(c.report, fs::path(o_.out) / (c.train_dataset + "__" + c.test_dataset + ".json"));
    std::cout << fmt::format("{} -> {}: mean IoU {:.4f} +/- {:.4f}\n", c.train_dataset,
                             c.test_dataset, c.report.mean_iou, c.report.std_iou);
  }
  return code;
}

int Cli::overlay() {
  const auto m = manifest();
  const auto model = load_checkpoint(o_.checkpoint);
  make_dir(o_.out);
  write_echo(app_.get_subcommand("overlay"), fs::path(o_.out) / "overlay.config");
  const auto files =
      emit_overlays(*model, m, o_.out, o_.overlay_count, o_.seed, parse_prompt_mode(o_.prompt_mode));
  std::cout << fmt::format("{} overlays in {}\n", files.size(), o_.out);
  return kExitOk;
}

int Cli::plot() {
  if (o_.loss_csvs.empty() && o_.pr_csvs.empty()) {
    throw UserError("plot needs at least one --loss-csv or --pr-csv");
  }
  make_dir(o_.out);
  write_echo(app_.get_subcommand("plot"), fs::path(o_.out) / "plot.config");
  const std::string prefix = o_.title.empty() ? "" : o_.title + ": ";
  if (!o_.loss_csvs.empty()) {
    Figure f{prefix + "training loss", "epoch", "mean loss", {}, false};
    for (const auto& item : o_.loss_csvs) {
      auto [label, path] = split_labeled(item);
      for (auto& s : read_loss_series(path, label)) f.series.push_back(std::move(s));
    }
    render_figure(f, fs::path(o_.out) / "loss_curves.png");
  }
  if (!o_.pr_csvs.empty()) {
    Figure f{prefix + "precision-recall", "recall", "precision", {}, true};
    for (const auto& item : o_.pr_csvs) {
      auto [label, path] = split_labeled(item);
      f.series.push_back(read_pr_series(path, label));
    }
    render_figure(f, fs::path(o_.out) / "pr_curves.png");
  }
  return kExitOk;
}

int Cli::rerun() {
  Metadata values = read_key_values(o_.config);
  const auto command = values.find("command");
  if (command == values.end()) throw UserError(o_.config + ": no 'command' entry");
  Cli fresh;
  const CLI::App* sub = nullptr;
  try {
    sub = fresh.app_.get_subcommand(command->second);
  } catch (const CLI::OptionNotFound&) {
    throw UserError(o_.config + ": unknown command '" + command->second + "'");
  }
  if (command->second == "rerun") throw UserError("refusing to rerun a rerun");
  if (!o_.out.empty()) {
    // eval keeps its outputs next to the report rather than under --out.
    if (command->second == "eval") {
      values["report"] = (fs::path(o_.out) / fs::path(values["report"]).filename()).string();
      if (!values["pr-csv"].empty()) {
        values["pr-csv"] = (fs::path(o_.out) / fs::path(values["pr-csv"]).filename()).string();
      }
    } else {
      values["out"] = o_.out;
    }
  }
  std::vector<std::string> args{command->second};
  for (const auto& [key, value] : values) {
    if (key == "command") continue;
    const CLI::Option* opt = nullptr;
    for (const CLI::Option* o : sub->get_options()) {
      if (!o->get_lnames().empty() && o->get_lnames().front() == key) opt = o;
    }
    if (!opt) throw UserError(o_.config + ": unknown key '" + key + "'");
    if (opt->get_expected_min() == 0) {
      if (value == "true") args.push_back("--" + key);
    } else if (!value.empty()) {
      args.push_back("--" + key);
      args.push_back(value);
    }
  }
  return fresh.run(args);
}

int Cli::run(const std::vector<std::string>& args) {
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app_.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app_.get_subcommands();
    std::cout << (subs.empty() ? app_.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::Success& e) {
    return app_.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app_.get_subcommands();
    std::cerr << (subs.empty() ? app_.help() : subs.front()->help());
    return kExitUser;
  }

  const std::map<std::string, int (Cli::*)()> handlers{
      {"synth", &Cli::synth},     {"prepare", &Cli::prepare},
      {"train", &Cli::train},     {"sweep", &Cli::sweep},
      {"compare-losses", &Cli::compare_losses},
      {"eval", &Cli::eval},       {"cross-eval", &Cli::cross_eval},
      {"overlay", &Cli::overlay}, {"plot", &Cli::plot},
      {"rerun", &Cli::rerun}};
  try {
    return (this->*handlers.at(app_.get_subcommands().front()->get_name()))();
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  Cli cli;
  return cli.run(args);
}

}  // namespace irisseg::cli
