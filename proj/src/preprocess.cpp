#include "irisseg/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "irisseg/errors.hpp"

namespace irisseg {
namespace {

// Pixel-centre mapping between grids of n_from and n_to samples.
int map_coord(int v, int n_from, int n_to) {
  const double scale = static_cast<double>(n_to) / n_from;
  const int mapped = static_cast<int>(std::lround((v + 0.5) * scale - 0.5));
  return std::clamp(mapped, 0, n_to - 1);
}

BoundingBox map_box(const BoundingBox& b, Extent from, Extent to) {
  return {map_coord(b.x_min, from.width, to.width), map_coord(b.y_min, from.height, to.height),
          map_coord(b.x_max, from.width, to.width), map_coord(b.y_max, from.height, to.height)};
}

}  // namespace

BoundingBox ResizeTransform::to_model(const BoundingBox& box) const {
  return map_box(box, native, model);
}

BoundingBox ResizeTransform::to_native(const BoundingBox& box) const {
  return map_box(box, model, native);
}

Raster ResizeTransform::logits_to_native(const Raster& logits) const {
  if (identity()) return logits;
  cv::Mat src(logits.height, logits.width, CV_32FC1, const_cast<float*>(logits.values.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(native.width, native.height), 0, 0, cv::INTER_LINEAR);
  Raster out(native.height, native.width);
  for (int r = 0; r < dst.rows; ++r) {
    std::copy_n(dst.ptr<float>(r), dst.cols, out.values.data() + static_cast<std::size_t>(r) * dst.cols);
  }
  return out;
}

cv::Mat read_image(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw UnreadableImage("cannot read image " + path.string());
  return img;
}

PreprocessedImage preprocess(const cv::Mat& image, int channels, Extent model_extent) {
  if (image.empty()) throw UnreadableImage("empty image");
  if (channels != 1 && channels != 3) throw UserError("channels must be 1 or 3");

  cv::Mat converted;
  const int in_ch = image.channels();
  if (channels == 1) {
    if (in_ch == 1) converted = image;
    else if (in_ch == 3) cv::cvtColor(image, converted, cv::COLOR_BGR2GRAY);
    else if (in_ch == 4) cv::cvtColor(image, converted, cv::COLOR_BGRA2GRAY);
    else throw UnreadableImage("unsupported channel count");
  } else {
    if (in_ch == 1) cv::cvtColor(image, converted, cv::COLOR_GRAY2RGB);
    else if (in_ch == 3) cv::cvtColor(image, converted, cv::COLOR_BGR2RGB);
    else if (in_ch == 4) cv::cvtColor(image, converted, cv::COLOR_BGRA2RGB);
    else throw UnreadableImage("unsupported channel count");
  }
  const double max_value = converted.depth() == CV_16U ? 65535.0 : 255.0;
  cv::Mat as_float;
  converted.convertTo(as_float, CV_32F, 1.0 / max_value);

  cv::Mat resized;
  if (as_float.rows == model_extent.height && as_float.cols == model_extent.width) {
    resized = as_float;
  } else {
    cv::resize(as_float, resized, cv::Size(model_extent.width, model_extent.height), 0, 0,
               cv::INTER_LINEAR);
  }

  PreprocessedImage out;
  out.transform = {{image.rows, image.cols}, model_extent};
  out.image = nn::Tensor(channels, model_extent.height, model_extent.width);
  for (int r = 0; r < resized.rows; ++r) {
    const float* row = resized.ptr<float>(r);
    for (int c = 0; c < resized.cols; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        out.image.channel(ch)[static_cast<std::size_t>(r) * resized.cols + c] =
            std::clamp(row[c * channels + ch], 0.0f, 1.0f);
      }
    }
  }
  return out;
}

PreprocessedImage preprocess(const std::filesystem::path& path, int channels, Extent model_extent) {
  return preprocess(read_image(path), channels, model_extent);
}

Mask resize_mask(const Mask& mask, Extent target) {
  if (mask.extent() == target) return mask;
  cv::Mat src(mask.height(), mask.width(), CV_8UC1, const_cast<std::uint8_t*>(mask.data().data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(target.width, target.height), 0, 0, cv::INTER_NEAREST);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(target.height) * target.width);
  for (int r = 0; r < dst.rows; ++r) {
    std::copy_n(dst.ptr<std::uint8_t>(r), dst.cols, data.data() + static_cast<std::size_t>(r) * dst.cols);
  }
  return Mask(target.height, target.width, std::move(data));
}

cv::Mat to_gray8(const nn::Tensor& image) {
  cv::Mat out(image.height, image.width, CV_8UC1);
  const float* src = image.channel(0);
  for (int r = 0; r < image.height; ++r) {
    auto* row = out.ptr<std::uint8_t>(r);
    for (int c = 0; c < image.width; ++c) {
      row[c] = cv::saturate_cast<std::uint8_t>(src[static_cast<std::size_t>(r) * image.width + c] * 255.0f);
    }
  }
  return out;
}

}  // namespace irisseg
