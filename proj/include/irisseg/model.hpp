#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irisseg/mask.hpp"
#include "irisseg/nn.hpp"

namespace irisseg {

/// Output of the image encoder.
struct ImageFeatures {
  nn::Tensor features;
  nn::Tensor source;  // the preprocessed image, for decoders that refine against it
};

/// Output of the prompt encoder.
struct PromptFeatures {
  nn::Tensor features;
  BoundingBox box;
};

/// Activations kept from a training forward pass. Backbones extend it with
/// whatever their backward pass needs.
struct ForwardState {
  virtual ~ForwardState() = default;
  Raster logits;
  nn::Tensor embedding;  // empty unless requested
};

/// Promptable segmentation model: image encoder, prompt encoder and a mask
/// decoder that returns logit rasters at the preprocessed input resolution.
class SegModel {
 public:
  virtual ~SegModel() = default;

  virtual std::string kind() const = 0;
  virtual Extent input_extent() const = 0;
  virtual int image_channels() const = 0;

  virtual ImageFeatures encode_image(const nn::Tensor& image) const = 0;
  virtual PromptFeatures encode_prompt(const BoundingBox& box) const = 0;
  /// multimask == false yields exactly one raster.
  virtual std::vector<Raster> decode_mask(const ImageFeatures& image, const PromptFeatures& prompt,
                                          bool multimask) const = 0;

  /// Trainable parameters as one flat vector. Frozen components are not
  /// part of it.
  virtual std::span<float> parameters() = 0;
  virtual std::span<const float> parameters() const = 0;

  virtual int embedding_dim() const = 0;
  virtual std::unique_ptr<ForwardState> forward(const nn::Tensor& image, const BoundingBox& box,
                                                bool with_embedding) const = 0;
  /// Accumulates dL/dparams into grads. d_embedding may be empty.
  virtual void backward(const ForwardState& state, std::span<const float> d_logits,
                        std::span<const float> d_embedding, std::span<float> grads) const = 0;
};

/// Single-mask prediction. Throws ShapeMismatch when the image does not
/// match the model input.
Raster predict_mask(const SegModel& model, const nn::Tensor& image, const BoundingBox& box);

enum class PromptMode { full, two_pass, ground_truth };

std::string to_string(PromptMode mode);
PromptMode parse_prompt_mode(const std::string& name);

/// Box used at inference. ground_truth requires truth; two_pass predicts
/// with the full-image box and boxes the binarized result, falling back to
/// the full image when that prediction is empty.
BoundingBox infer_box(const SegModel& model, const nn::Tensor& image, PromptMode mode,
                      const Mask* truth = nullptr);

}  // namespace irisseg
