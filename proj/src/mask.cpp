#include "irisseg/mask.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "irisseg/errors.hpp"

namespace irisseg {

Mask::Mask(int height, int width, bool fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) {
    throw ShapeMismatch("mask dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

Mask::Mask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 1 || width < 1 || data_.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeMismatch("mask data does not match its dimensions");
  }
  for (auto& v : data_) v = v ? 1 : 0;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

bool BoundingBox::valid_within(Extent extent) const {
  return 0 <= x_min && x_min <= x_max && x_max < extent.width && 0 <= y_min && y_min <= y_max &&
         y_max < extent.height;
}

std::string to_string(const BoundingBox& box) {
  std::ostringstream os;
  os << box.x_min << ',' << box.y_min << ',' << box.x_max << ',' << box.y_max;
  return os.str();
}

BoundingBox parse_bbox(const std::string& text) {
  BoundingBox box;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream is(text);
  if (!(is >> box.x_min >> c1 >> box.y_min >> c2 >> box.x_max >> c3 >> box.y_max) || c1 != ',' ||
      c2 != ',' || c3 != ',') {
    throw UserError("malformed bounding box: " + text);
  }
  return box;
}

BoundingBox mask_to_bbox(const Mask& mask) {
  int x_min = mask.width(), y_min = mask.height(), x_max = -1, y_max = -1;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      x_min = std::min(x_min, c);
      x_max = std::max(x_max, c);
      y_min = std::min(y_min, r);
      y_max = std::max(y_max, r);
    }
  }
  if (x_max < 0) throw EmptyMask();
  return {x_min, y_min, x_max, y_max};
}

BoundingBox perturb_bbox(const BoundingBox& box, const PerturbSpec& spec, Extent extent) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> edge(-std::max(spec.max_scale, 0), std::max(spec.max_scale, 0));
  std::uniform_int_distribution<int> shift(-std::max(spec.max_shift, 0), std::max(spec.max_shift, 0));

  BoundingBox out = box;
  out.x_min += edge(rng);
  out.y_min += edge(rng);
  out.x_max += edge(rng);
  out.y_max += edge(rng);
  const int dx = shift(rng);
  const int dy = shift(rng);
  out.x_min += dx;
  out.x_max += dx;
  out.y_min += dy;
  out.y_max += dy;

  out.x_min = std::clamp(out.x_min, 0, extent.width - 1);
  out.x_max = std::clamp(out.x_max, 0, extent.width - 1);
  out.y_min = std::clamp(out.y_min, 0, extent.height - 1);
  out.y_max = std::clamp(out.y_max, 0, extent.height - 1);
  if (out.x_min > out.x_max) std::swap(out.x_min, out.x_max);
  if (out.y_min > out.y_max) std::swap(out.y_min, out.y_max);
  return out;
}

Mask binarize(const Raster& logits, double threshold_probability) {
  std::vector<std::uint8_t> data(logits.values.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.values[i])));
    data[i] = p >= threshold_probability ? 1 : 0;
  }
  return Mask(logits.height, logits.width, std::move(data));
}

BoundingBox full_box(Extent extent) { return {0, 0, extent.width - 1, extent.height - 1}; }

Mask rasterize_box(const BoundingBox& box, Extent extent) {
  Mask m(extent.height, extent.width);
  for (int r = std::max(box.y_min, 0); r <= std::min(box.y_max, extent.height - 1); ++r) {
    for (int c = std::max(box.x_min, 0); c <= std::min(box.x_max, extent.width - 1); ++c) {
      m.set(r, c, true);
    }
  }
  return m;
}

Mask read_mask(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw UnreadableImage("cannot read mask " + path.string());
  std::vector<std::uint8_t> data(static_cast<std::size_t>(img.rows) * img.cols);
  for (int r = 0; r < img.rows; ++r) {
    const auto* row = img.ptr<std::uint8_t>(r);
    for (int c = 0; c < img.cols; ++c) data[static_cast<std::size_t>(r) * img.cols + c] = row[c] >= 128;
  }
  return Mask(img.rows, img.cols, std::move(data));
}

void write_mask(const Mask& mask, const std::filesystem::path& path) {
  cv::Mat img(mask.height(), mask.width(), CV_8UC1);
  for (int r = 0; r < mask.height(); ++r) {
    auto* row = img.ptr<std::uint8_t>(r);
    for (int c = 0; c < mask.width(); ++c) row[c] = mask.at(r, c) ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), img)) throw IoFailure("cannot write mask " + path.string());
}

}  // namespace irisseg
