#include "irisseg/model.hpp"

#include "irisseg/errors.hpp"

namespace irisseg {

Raster predict_mask(const SegModel& model, const nn::Tensor& image, const BoundingBox& box) {
  const Extent extent = model.input_extent();
  if (image.height != extent.height || image.width != extent.width ||
      image.channels != model.image_channels()) {
    throw ShapeMismatch("image does not match the model input resolution");
  }
  auto masks = model.decode_mask(model.encode_image(image), model.encode_prompt(box), false);
  if (masks.size() != 1) throw Error("decoder returned more than one mask in single-mask mode");
  return std::move(masks.front());
}

std::string to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::full: return "full";
    case PromptMode::two_pass: return "two-pass";
    case PromptMode::ground_truth: return "gt";
  }
  return "?";
}

PromptMode parse_prompt_mode(const std::string& name) {
  if (name == "full") return PromptMode::full;
  if (name == "two-pass") return PromptMode::two_pass;
  if (name == "gt") return PromptMode::ground_truth;
  throw UserError("unknown prompt mode '" + name + "' (expected full, two-pass or gt)");
}

BoundingBox infer_box(const SegModel& model, const nn::Tensor& image, PromptMode mode,
                      const Mask* truth) {
  const BoundingBox whole = full_box(model.input_extent());
  switch (mode) {
    case PromptMode::full:
      return whole;
    case PromptMode::ground_truth:
      if (truth == nullptr) throw UserError("ground-truth prompt mode needs a mask");
      return mask_to_bbox(*truth);
    case PromptMode::two_pass: {
      const Mask first = binarize(predict_mask(model, image, whole));
      if (first.empty_foreground()) return whole;
      return mask_to_bbox(first);
    }
  }
  return whole;
}

}  // namespace irisseg
