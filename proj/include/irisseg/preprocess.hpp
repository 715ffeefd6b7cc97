#pragma once

#include <filesystem>

#include <opencv2/core/mat.hpp>

#include "irisseg/mask.hpp"
#include "irisseg/nn.hpp"

namespace irisseg {

/// Records how a native image was stretched onto the model grid so boxes
/// and predictions can be mapped back.
struct ResizeTransform {
  Extent native;
  Extent model;

  bool identity() const { return native == model; }
  BoundingBox to_model(const BoundingBox& box) const;
  BoundingBox to_native(const BoundingBox& box) const;
  /// Bilinear resample of logits onto the native grid.
  Raster logits_to_native(const Raster& logits) const;
};

struct PreprocessedImage {
  nn::Tensor image;  // channels x model height x model width, values in [0, 1]
  ResizeTransform transform;
};

/// Reads a grayscale or color image file. Throws UnreadableImage.
cv::Mat read_image(const std::filesystem::path& path);

/// Converts to `channels` (1 = gray, 3 = RGB), scales to [0, 1] and resizes
/// bilinearly to the model extent.
PreprocessedImage preprocess(const cv::Mat& image, int channels, Extent model_extent);
PreprocessedImage preprocess(const std::filesystem::path& path, int channels, Extent model_extent);

/// Nearest-neighbour resize; the result stays strictly binary.
Mask resize_mask(const Mask& mask, Extent target);

/// 8-bit view of a single-channel tensor, for overlays and debugging.
cv::Mat to_gray8(const nn::Tensor& image);

}  // namespace irisseg
