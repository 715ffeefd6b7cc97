#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "irisseg/mask.hpp"
#include "irisseg/preprocess.hpp"

namespace irisseg {

enum class Split { train, test };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct SampleRecord {
  std::filesystem::path image_path;  // relative to the manifest root unless absolute
  std::filesystem::path mask_path;
  std::string identity_id;
  Split split = Split::train;

  /// Image file stem, used as the sample id in reports.
  std::string id() const { return image_path.stem().string(); }
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct DatasetManifest {
  std::string name;
  std::filesystem::path root;
  std::vector<SampleRecord> records;
  std::uint64_t split_seed = 0;

  std::vector<SampleRecord> split(Split which) const;
  std::size_t identity_count(Split which) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// How images pair with masks and where identity ids come from. The first
/// capture group of identity_regex, matched against the image stem, is the
/// identity. Masks live under mask_dir with stem mask_prefix + image stem +
/// mask_suffix and any image extension.
struct LayoutSpec {
  std::string image_dir = "images";
  std::string mask_dir = "masks";
  std::string identity_regex = "^(.+?)_\\d+$";
  std::string mask_prefix;
  std::string mask_suffix;

  /// casia, nd, iitd, synth or generic.
  static LayoutSpec preset(const std::string& name);
};

/// Scans root, pairs images with masks and splits identities: identities are
/// sorted, shuffled with split_seed and the first floor(train_fraction * N)
/// (at least one) go to train. Throws NoPairsFound / DuplicateRecord.
DatasetManifest build_manifest(const std::filesystem::path& root, const LayoutSpec& layout,
                               std::uint64_t split_seed, double train_fraction,
                               const std::string& name = "dataset");

/// Identity-level split of a sorted identity list.
std::vector<std::string> train_identities(std::vector<std::string> identities,
                                          std::uint64_t split_seed, double train_fraction);

/// Tab-separated text: one header line carrying name, root and split_seed,
/// then one `image\tmask\tidentity\tsplit` line per record.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);
/// Throws UserError when the file is malformed or identities leak across
/// splits.
DatasetManifest load_manifest(const std::filesystem::path& file);

/// Throws UserError naming the first identity present in both splits.
void check_identity_disjoint(const DatasetManifest& manifest);

struct Sample {
  std::string id;
  PreprocessedImage image;
  Mask mask;  // at model resolution
  BoundingBox box;
};

/// Preprocesses the image, nearest-resizes the mask to the model grid and
/// boxes it. Propagates UnreadableImage / EmptyMask.
Sample load_sample(const DatasetManifest& manifest, const SampleRecord& record, int channels,
                   Extent model_extent);

struct Quarantined {
  std::string id;
  std::string reason;
};

/// Loads every record of a split, setting aside the ones that fail.
struct LoadedSplit {
  std::vector<Sample> samples;
  std::vector<Quarantined> quarantined;
};

LoadedSplit load_split(const DatasetManifest& manifest, Split which, int channels,
                       Extent model_extent);

}  // namespace irisseg
