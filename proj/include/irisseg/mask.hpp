#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace irisseg {

struct Extent {
  int height = 0;
  int width = 0;
  friend bool operator==(const Extent&, const Extent&) = default;
};

/// Binary pixel-membership raster, row-major, true = iris.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool fill = false);
  Mask(int height, int width, std::vector<std::uint8_t> data);

  int height() const { return height_; }
  int width() const { return width_; }
  Extent extent() const { return {height_, width_}; }
  std::size_t size() const { return data_.size(); }

  bool at(int row, int col) const { return data_[index(row, col)] != 0; }
  void set(int row, int col, bool value) { data_[index(row, col)] = value ? 1 : 0; }

  /// 0/1 bytes, row-major.
  std::span<const std::uint8_t> data() const { return data_; }
  std::size_t count() const;
  bool empty_foreground() const { return count() == 0; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Real-valued raster (decoder logits), row-major.
struct Raster {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Raster() = default;
  Raster(int h, int w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  Extent extent() const { return {height, width}; }
  float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
  float& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
};

/// Axis-aligned box with inclusive pixel coordinates.
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min + 1; }
  int height() const { return y_max - y_min + 1; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  bool contains(int x, int y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  bool valid_within(Extent extent) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// "x_min,y_min,x_max,y_max"
std::string to_string(const BoundingBox& box);
BoundingBox parse_bbox(const std::string& text);

struct PerturbSpec {
  int max_shift = 10;
  int max_scale = 10;
  std::uint64_t seed = 0;
};

/// Tightest box containing every foreground pixel. Throws EmptyMask.
BoundingBox mask_to_bbox(const Mask& mask);

/// Per-edge jitter in [-max_scale, max_scale], then a whole-box translation
/// in [-max_shift, max_shift] per axis. The result is clamped to the extent
/// and inverted edges are swapped.
BoundingBox perturb_bbox(const BoundingBox& box, const PerturbSpec& spec, Extent extent);

/// pixel = sigmoid(logit) >= threshold_probability.
Mask binarize(const Raster& logits, double threshold_probability = 0.5);

/// Box covering the whole extent.
BoundingBox full_box(Extent extent);

/// 1 inside the box, 0 outside.
Mask rasterize_box(const BoundingBox& box, Extent extent);

// Mask files: 8-bit single-channel PNG, foreground iff value >= 128,
// written as exactly 0 / 255.
Mask read_mask(const std::filesystem::path& path);
void write_mask(const Mask& mask, const std::filesystem::path& path);

}  // namespace irisseg
