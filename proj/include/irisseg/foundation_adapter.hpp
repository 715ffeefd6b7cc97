#pragma once

#include <filesystem>
#include <memory>

#include "irisseg/checkpoint.hpp"
#include "irisseg/model.hpp"

namespace irisseg {

/// Location and training scope of an exported foundation checkpoint: an
/// image-encoder graph mapping a normalized 1x3xRxR image to embeddings and a
/// mask-decoder graph with the standard box-prompt signature (image
/// embeddings, point coords/labels, mask input, has-mask flag, image size).
struct FoundationConfig {
  std::filesystem::path encoder_path;
  std::filesystem::path decoder_path;
  int resolution = 1024;
  bool freeze_image_encoder = true;
  bool freeze_prompt_encoder = true;

  /// <dir>/encoder.onnx and <dir>/decoder.onnx.
  static FoundationConfig from_directory(const std::filesystem::path& dir);
  static FoundationConfig from_metadata(const Metadata& meta);
};

/// Runs a frozen exported foundation model through OpenCV's DNN module and
/// fine-tunes a per-pixel refinement of the decoder logits (a 3x3 conv over
/// [decoder logits, gray image], initialized to the identity on the logits).
/// Construction fails with MissingCheckpoint when a graph file is absent;
/// nothing is ever fetched over the network.
class FoundationAdapter final : public SegModel {
 public:
  explicit FoundationAdapter(FoundationConfig config);
  ~FoundationAdapter() override;

  std::string kind() const override { return "foundation"; }
  Extent input_extent() const override { return {config_.resolution, config_.resolution}; }
  int image_channels() const override { return 3; }

  ImageFeatures encode_image(const nn::Tensor& image) const override;
  PromptFeatures encode_prompt(const BoundingBox& box) const override;
  std::vector<Raster> decode_mask(const ImageFeatures& image, const PromptFeatures& prompt,
                                  bool multimask) const override;

  std::span<float> parameters() override { return params_; }
  std::span<const float> parameters() const override { return params_; }
  int embedding_dim() const override { return 0; }

  std::unique_ptr<ForwardState> forward(const nn::Tensor& image, const BoundingBox& box,
                                        bool with_embedding) const override;
  void backward(const ForwardState& state, std::span<const float> d_logits,
                std::span<const float> d_embedding, std::span<float> grads) const override;

  /// Sidecar entries needed to rebuild the adapter.
  Metadata describe() const;

 private:
  struct Graphs;
  std::vector<Raster> raw_decode(const ImageFeatures& image, const PromptFeatures& prompt,
                                 bool multimask) const;
  nn::Tensor refine_input(const Raster& decoder_logits, const nn::Tensor& image) const;

  FoundationConfig config_;
  std::unique_ptr<Graphs> graphs_;
  nn::Conv2d refine_;
  nn::FloatBuffer params_;
};

}  // namespace irisseg
