#include "irisseg/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "irisseg/errors.hpp"

namespace fs = std::filesystem;

namespace irisseg {
namespace {

const std::set<std::string> kImageExtensions = {".png", ".jpg", ".jpeg", ".bmp",
                                                ".tif", ".tiff", ".pgm"};

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kImageExtensions.count(ext) > 0;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

}  // namespace

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw UserError("unknown split '" + name + "'");
}

std::vector<SampleRecord> DatasetManifest::split(Split which) const {
  std::vector<SampleRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [which](const SampleRecord& r) { return r.split == which; });
  return out;
}

std::size_t DatasetManifest::identity_count(Split which) const {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (r.split == which) ids.insert(r.identity_id);
  }
  return ids.size();
}

fs::path DatasetManifest::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : root / p;
}

LayoutSpec LayoutSpec::preset(const std::string& name) {
  LayoutSpec spec;
  if (name == "casia") {
    spec.identity_regex = "^(S\\d{4}[LR])\\d+$";  // S1002R10 -> subject + eye
  } else if (name == "nd") {
    spec.identity_regex = "^(\\d{5})d\\d+$";  // 04267d227 -> subject
  } else if (name == "iitd") {
    spec.identity_regex = "^(\\d{3})_\\d+$";  // 008_07 -> subject
  } else if (name == "synth") {
    spec.identity_regex = "^(id\\d+)_\\d+$";
  } else if (name != "generic") {
    throw UserError("unknown layout preset '" + name + "'");
  }
  return spec;
}

std::vector<std::string> train_identities(std::vector<std::string> identities,
                                          std::uint64_t split_seed, double train_fraction) {
  if (train_fraction <= 0.0 || train_fraction > 1.0) {
    throw UserError("train_fraction must lie in (0, 1]");
  }
  std::sort(identities.begin(), identities.end());
  identities.erase(std::unique(identities.begin(), identities.end()), identities.end());
  if (identities.empty()) return {};
  std::mt19937_64 rng(split_seed);
  std::shuffle(identities.begin(), identities.end(), rng);
  auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(identities.size()) + 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, identities.size());
  identities.resize(n_train);
  return identities;
}

DatasetManifest build_manifest(const fs::path& root, const LayoutSpec& layout,
                               std::uint64_t split_seed, double train_fraction,
                               const std::string& name) {
  if (!fs::is_directory(root)) throw UserError("dataset root does not exist: " + root.string());
  const std::regex identity_re(layout.identity_regex);

  std::map<std::string, fs::path> masks_by_stem;
  for (const auto& m : list_images(root / layout.mask_dir)) {
    std::string stem = m.stem().string();
    if (!layout.mask_prefix.empty()) {
      if (stem.rfind(layout.mask_prefix, 0) != 0) continue;
      stem = stem.substr(layout.mask_prefix.size());
    }
    if (!layout.mask_suffix.empty()) {
      if (stem.size() < layout.mask_suffix.size() ||
          stem.compare(stem.size() - layout.mask_suffix.size(), layout.mask_suffix.size(),
                       layout.mask_suffix) != 0) {
        continue;
      }
      stem.resize(stem.size() - layout.mask_suffix.size());
    }
    if (!masks_by_stem.emplace(stem, m).second) {
      throw DuplicateRecord("two masks for image stem '" + stem + "'");
    }
  }

  DatasetManifest manifest;
  manifest.name = name;
  manifest.root = root;
  manifest.split_seed = split_seed;
  std::set<std::string> seen;
  for (const auto& img : list_images(root / layout.image_dir)) {
    const std::string stem = img.stem().string();
    const auto mask = masks_by_stem.find(stem);
    if (mask == masks_by_stem.end()) continue;
    std::smatch match;
    if (!std::regex_match(stem, match, identity_re) || match.size() < 2) {
      spdlog::warn("{}: no identity in '{}', skipped", name, stem);
      continue;
    }
    if (!seen.insert(stem).second) throw DuplicateRecord("duplicate image stem '" + stem + "'");
    manifest.records.push_back(
        {fs::relative(img, root), fs::relative(mask->second, root), match[1].str(), Split::train});
  }
  if (manifest.records.empty()) {
    throw NoPairsFound("no image/mask pairs found under " + root.string());
  }

  std::vector<std::string> ids;
  for (const auto& r : manifest.records) ids.push_back(r.identity_id);
  const auto train = train_identities(ids, split_seed, train_fraction);
  const std::set<std::string> train_set(train.begin(), train.end());
  for (auto& r : manifest.records) {
    r.split = train_set.count(r.identity_id) ? Split::train : Split::test;
  }
  return manifest;
}

void check_identity_disjoint(const DatasetManifest& manifest) {
  std::map<std::string, Split> owner;
  for (const auto& r : manifest.records) {
    const auto [it, inserted] = owner.emplace(r.identity_id, r.split);
    if (!inserted && it->second != r.split) {
      throw UserError("identity '" + r.identity_id + "' appears in both train and test splits");
    }
  }
}

void save_manifest(const DatasetManifest& manifest, const fs::path& file) {
  const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  fs::create_directories(dir);
  std::error_code ec;
  fs::path root = fs::relative(manifest.root, dir, ec);
  if (ec || root.empty()) root = fs::absolute(manifest.root);

  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoFailure("cannot write manifest " + file.string());
  out << "# name=" << manifest.name << "\troot=" << root.generic_string()
      << "\tsplit_seed=" << manifest.split_seed << '\n';
  for (const auto& r : manifest.records) {
    out << r.image_path.generic_string() << '\t' << r.mask_path.generic_string() << '\t'
        << r.identity_id << '\t' << to_string(r.split) << '\n';
  }
  if (!out) throw IoFailure("cannot write manifest " + file.string());
}

DatasetManifest load_manifest(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw UserError("cannot open manifest " + file.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw UserError("manifest header missing in " + file.string());
  }
  DatasetManifest manifest;
  fs::path root = ".";
  for (const auto& kv : split_tabs(line.substr(2))) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UserError("malformed manifest header field '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    if (key == "name") manifest.name = value;
    else if (key == "root") root = value;
    else if (key == "split_seed") manifest.split_seed = std::stoull(value);
  }
  const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  manifest.root = root.is_absolute() ? root : (dir / root).lexically_normal();

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw UserError(file.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    }
    manifest.records.push_back({fields[0], fields[1], fields[2], parse_split(fields[3])});
  }
  check_identity_disjoint(manifest);
  return manifest;
}

Sample load_sample(const DatasetManifest& manifest, const SampleRecord& record, int channels,
                   Extent model_extent) {
  Sample s;
  s.id = record.id();
  s.image = preprocess(manifest.resolve(record.image_path), channels, model_extent);
  s.mask = resize_mask(read_mask(manifest.resolve(record.mask_path)), model_extent);
  if (s.mask.empty_foreground()) throw EmptyMask("mask of '" + s.id + "' has no foreground");
  s.box = mask_to_bbox(s.mask);
  return s;
}

LoadedSplit load_split(const DatasetManifest& manifest, Split which, int channels,
                       Extent model_extent) {
  LoadedSplit out;
  for (const auto& r : manifest.split(which)) {
    try {
      out.samples.push_back(load_sample(manifest, r, channels, model_extent));
    } catch (const Error& e) {
      spdlog::warn("quarantined {}: {}", r.id(), e.what());
      out.quarantined.push_back({r.id(), e.what()});
    }
  }
  return out;
}

}  // namespace irisseg
