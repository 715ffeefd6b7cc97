#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "irisseg/datasets.hpp"

namespace irisseg {

/// Intensity range in 8-bit gray levels.
struct GrayRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Synthetic near-infrared-like eye images: skin, an almond eye opening
/// (sclera), an iris annulus with radial texture, a dark pupil with a
/// specular spot, optional drooping upper eyelid, Gaussian noise.
struct SynthSpec {
  std::string name = "synth";
  int count = 64;
  int images_per_identity = 4;
  int image_size = 128;
  /// Iris radius as a fraction of image_size.
  double iris_radius_min = 0.14;
  double iris_radius_max = 0.22;
  /// Pupil radius as a fraction of the iris radius.
  double pupil_ratio_min = 0.25;
  double pupil_ratio_max = 0.45;
  GrayRange skin{120, 160};
  GrayRange sclera{185, 225};
  GrayRange iris{70, 110};
  GrayRange pupil{10, 35};
  double texture_amplitude = 12.0;
  double eyelid_probability = 0.5;
  double noise_sigma = 6.0;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  /// Named appearance variants for cross-dataset experiments: a (default),
  /// b (dim, low contrast, noisy) and c (bright, heavy eyelids).
  static SynthSpec variant(const std::string& name);
};

struct SynthSample {
  cv::Mat image;  // CV_8UC1
  Mask mask;
};

/// Renders image `index` of the dataset deterministically from `spec`.
SynthSample render_synthetic(const SynthSpec& spec, int index);

/// Writes images/ and masks/ PNGs plus manifest.tsv under out_dir. A zero
/// count returns an empty manifest and writes nothing. Throws IoFailure.
DatasetManifest generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace irisseg
