#pragma once

#include <array>
#include <cstdint>

#include "irisseg/model.hpp"

namespace irisseg {

struct TinyRefNetConfig {
  int resolution = 256;
  int embedding_dim = 8;
  std::uint64_t init_seed = 0;
};

/// Reference backbone: U-shaped conv net over five input channels (the
/// image, then box-relative x, y and radius, then the box raster) with four
/// stride-2 stages (16/32/64/128 channels), nearest upsampling with skip
/// connections, a 1-channel logit head and an auxiliary embedding head.
/// Every hidden conv is followed by group norm and ReLU.
class TinyRefNet final : public SegModel {
 public:
  static constexpr int kStages = 4;
  static constexpr std::array<int, kStages> kChannels{16, 32, 64, 128};
  static constexpr int kInputChannels = 5;
  static constexpr int kPromptChannels = 4;
  static constexpr int kHeadChannels = 16;
  static constexpr int kNormGroups = 8;

  explicit TinyRefNet(TinyRefNetConfig config = {});

  std::string kind() const override { return "tiny"; }
  Extent input_extent() const override { return {config_.resolution, config_.resolution}; }
  int image_channels() const override { return 1; }
  const TinyRefNetConfig& config() const { return config_; }

  ImageFeatures encode_image(const nn::Tensor& image) const override;
  PromptFeatures encode_prompt(const BoundingBox& box) const override;
  std::vector<Raster> decode_mask(const ImageFeatures& image, const PromptFeatures& prompt,
                                  bool multimask) const override;

  std::span<float> parameters() override { return params_; }
  std::span<const float> parameters() const override { return params_; }
  int embedding_dim() const override { return config_.embedding_dim; }

  std::unique_ptr<ForwardState> forward(const nn::Tensor& image, const BoundingBox& box,
                                        bool with_embedding) const override;
  void backward(const ForwardState& state, std::span<const float> d_logits,
                std::span<const float> d_embedding, std::span<float> grads) const override;

 private:
  struct State;
  std::unique_ptr<State> run(nn::Tensor input, bool with_embedding) const;

  TinyRefNetConfig config_;
  std::array<nn::Conv2d, kStages> down_;
  std::array<nn::Conv2d, kStages> refine_;
  std::array<nn::Conv2d, kStages> up_;  // up_[i] produces the level-i decoder output
  std::array<nn::GroupNorm, kStages> down_norm_;
  std::array<nn::GroupNorm, kStages> refine_norm_;
  std::array<nn::GroupNorm, kStages> up_norm_;
  nn::Conv2d logit_head_;
  nn::Conv2d embed_head_;
  nn::FloatBuffer params_;
};

}  // namespace irisseg
