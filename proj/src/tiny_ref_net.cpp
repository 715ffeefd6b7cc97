#include "irisseg/tiny_ref_net.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "irisseg/errors.hpp"

namespace irisseg {

struct TinyRefNet::State : ForwardState {
  nn::Tensor input;
  std::array<nn::Tensor, kStages> down;    // post-ReLU output of down_[i]
  std::array<nn::Tensor, kStages> refined; // post-ReLU output of refine_[i]
  std::array<nn::Tensor, kStages> merged;  // concat(upsampled, skip) fed to up_[j]
  std::array<nn::Tensor, kStages> decoded; // post-ReLU output of up_[j]
  std::array<nn::GroupNorm::Cache, kStages> down_norm, refine_norm, up_norm;
};

namespace {

// Prior probability for the logit bias so early predictions lean background.
constexpr double kForegroundPrior = 0.1;
// Box-relative coordinates saturate a few half-extents away from the box.
constexpr double kCoordClamp = 3.0;
// Hidden convs feed GroupNorm, so their weight scale only sets the effective
// step size (lr / |w|^2). Small weights let plain SGD move quickly.
constexpr float kHiddenInitGain = 0.03f;

}  // namespace

TinyRefNet::TinyRefNet(TinyRefNetConfig config) : config_(config) {
  if (config_.resolution < 16 || config_.resolution % 16 != 0) {
    throw UserError("tiny backbone resolution must be a positive multiple of 16");
  }
  if (config_.embedding_dim < 1) throw UserError("embedding_dim must be >= 1");

  nn::ParamLayout layout;
  int prev = kInputChannels;
  for (int i = 0; i < kStages; ++i) {
    down_[i] = nn::Conv2d(layout, prev, kChannels[i], 3, 2);
    down_norm_[i] = nn::GroupNorm(layout, kChannels[i], kNormGroups);
    refine_[i] = nn::Conv2d(layout, kChannels[i], kChannels[i], 3, 1);
    refine_norm_[i] = nn::GroupNorm(layout, kChannels[i], kNormGroups);
    prev = kChannels[i];
  }
  // Decoder j merges the running features with skip level kStages-2-j; the
  // last one merges with the raw input at full resolution.
  for (int j = 0; j < kStages; ++j) {
    const int skip = j + 1 < kStages ? kChannels[kStages - 2 - j] : kInputChannels;
    const int out = j + 1 < kStages ? kChannels[kStages - 2 - j] : kHeadChannels;
    up_[j] = nn::Conv2d(layout, prev + skip, out, 3, 1);
    up_norm_[j] = nn::GroupNorm(layout, out, kNormGroups);
    prev = out;
  }
  logit_head_ = nn::Conv2d(layout, kHeadChannels, 1, 1, 1);
  embed_head_ = nn::Conv2d(layout, kHeadChannels, config_.embedding_dim, 1, 1);
  params_.assign(layout.size(), 0.0f);

  std::mt19937_64 rng(config_.init_seed);
  for (const auto* group : {&down_, &refine_, &up_}) {
    for (const auto& conv : *group) {
      conv.init(params_, rng);
      for (std::size_t i = 0; i < conv.weight_count(); ++i) params_[conv.weight_offset() + i] *= kHiddenInitGain;
    }
  }
  for (const auto* group : {&down_norm_, &refine_norm_, &up_norm_}) {
    for (const auto& norm : *group) norm.init(params_);
  }
  logit_head_.init(params_, rng);
  embed_head_.init(params_, rng);
  params_[logit_head_.bias_offset()] =
      static_cast<float>(std::log(kForegroundPrior / (1.0 - kForegroundPrior)));
}

ImageFeatures TinyRefNet::encode_image(const nn::Tensor& image) const {
  if (image.channels != 1 || image.height != config_.resolution ||
      image.width != config_.resolution) {
    throw ShapeMismatch("tiny backbone expects a 1x" + std::to_string(config_.resolution) + "x" +
                        std::to_string(config_.resolution) + " image");
  }
  return {image, {}};
}

PromptFeatures TinyRefNet::encode_prompt(const BoundingBox& box) const {
  const Extent extent = input_extent();
  if (!box.valid_within(extent)) throw ShapeMismatch("prompt box outside the model input");
  nn::Tensor prompt(kPromptChannels, extent.height, extent.width);
  const double cx = 0.5 * (box.x_min + box.x_max);
  const double cy = 0.5 * (box.y_min + box.y_max);
  const double half_w = 0.5 * box.width();
  const double half_h = 0.5 * box.height();
  float* u = prompt.channel(0);
  float* v = prompt.channel(1);
  float* radius = prompt.channel(2);
  float* inside = prompt.channel(3);
  std::size_t i = 0;
  for (int r = 0; r < extent.height; ++r) {
    for (int c = 0; c < extent.width; ++c, ++i) {
      const double du = std::clamp((c - cx) / half_w, -kCoordClamp, kCoordClamp);
      const double dv = std::clamp((r - cy) / half_h, -kCoordClamp, kCoordClamp);
      u[i] = static_cast<float>(du);
      v[i] = static_cast<float>(dv);
      radius[i] = static_cast<float>(std::sqrt(du * du + dv * dv));
      inside[i] = box.contains(c, r) ? 1.0f : 0.0f;
    }
  }
  return {std::move(prompt), box};
}

std::vector<Raster> TinyRefNet::decode_mask(const ImageFeatures& image,
                                            const PromptFeatures& prompt, bool /*multimask*/) const {
  // One mask head: the output is a single raster whatever the flag says.
  auto state = run(nn::concat_channels(image.features, prompt.features), false);
  std::vector<Raster> out;
  out.push_back(std::move(state->logits));
  return out;
}

std::unique_ptr<ForwardState> TinyRefNet::forward(const nn::Tensor& image, const BoundingBox& box,
                                                  bool with_embedding) const {
  auto features = encode_image(image);
  auto prompt = encode_prompt(box);
  return run(nn::concat_channels(features.features, prompt.features), with_embedding);
}

std::unique_ptr<TinyRefNet::State> TinyRefNet::run(nn::Tensor input, bool with_embedding) const {
  auto s = std::make_unique<State>();
  s->input = std::move(input);
  const nn::Tensor* prev = &s->input;
  for (int i = 0; i < kStages; ++i) {
    s->down[i] = down_norm_[i].forward(params_, down_[i].forward(params_, *prev), s->down_norm[i]);
    nn::relu_inplace(s->down[i]);
    s->refined[i] = refine_norm_[i].forward(params_, refine_[i].forward(params_, s->down[i]),
                                            s->refine_norm[i]);
    nn::relu_inplace(s->refined[i]);
    prev = &s->refined[i];
  }
  for (int j = 0; j < kStages; ++j) {
    const nn::Tensor& skip = j + 1 < kStages ? s->refined[kStages - 2 - j] : s->input;
    s->merged[j] = nn::concat_channels(nn::upsample2x(*prev), skip);
    s->decoded[j] =
        up_norm_[j].forward(params_, up_[j].forward(params_, s->merged[j]), s->up_norm[j]);
    nn::relu_inplace(s->decoded[j]);
    prev = &s->decoded[j];
  }
  const nn::Tensor logits = logit_head_.forward(params_, *prev);
  s->logits = Raster(logits.height, logits.width);
  s->logits.values.assign(logits.data.begin(), logits.data.end());
  if (with_embedding) s->embedding = embed_head_.forward(params_, *prev);
  return s;
}

void TinyRefNet::backward(const ForwardState& state, std::span<const float> d_logits,
                          std::span<const float> d_embedding, std::span<float> grads) const {
  const auto& s = dynamic_cast<const State&>(state);
  if (grads.size() != params_.size()) throw ShapeMismatch("gradient buffer size mismatch");
  const nn::Tensor& head_in = s.decoded[kStages - 1];
  if (d_logits.size() != head_in.plane()) throw ShapeMismatch("logit gradient size mismatch");

  nn::Tensor g_logits(1, head_in.height, head_in.width);
  std::copy(d_logits.begin(), d_logits.end(), g_logits.data.begin());
  nn::Tensor g = logit_head_.backward(params_, head_in, g_logits, grads);
  if (!d_embedding.empty()) {
    if (s.embedding.data.empty() || d_embedding.size() != s.embedding.data.size()) {
      throw ShapeMismatch("embedding gradient without a matching forward embedding");
    }
    nn::Tensor g_emb(s.embedding.channels, s.embedding.height, s.embedding.width);
    std::copy(d_embedding.begin(), d_embedding.end(), g_emb.data.begin());
    const nn::Tensor ge = embed_head_.backward(params_, head_in, g_emb, grads);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += ge.data[i];
  }

  std::array<nn::Tensor, kStages> g_refined;
  for (int j = kStages - 1; j >= 0; --j) {
    nn::relu_backward_inplace(s.decoded[j], g);
    g = up_norm_[j].backward(params_, s.up_norm[j], g, grads);
    const nn::Tensor g_merged = up_[j].backward(params_, s.merged[j], g, grads);
    const int up_channels = j == 0 ? kChannels[kStages - 1] : s.decoded[j - 1].channels;
    nn::Tensor g_up, g_skip;
    nn::split_channels(g_merged, up_channels, g_up, g_skip);
    if (j + 1 < kStages) g_refined[kStages - 2 - j] = std::move(g_skip);
    g = nn::upsample2x_backward(g_up);
  }
  // g now holds the gradient w.r.t. the deepest encoder output.
  g_refined[kStages - 1] = std::move(g);

  for (int i = kStages - 1; i >= 0; --i) {
    nn::Tensor& gr = g_refined[i];
    nn::relu_backward_inplace(s.refined[i], gr);
    gr = refine_norm_[i].backward(params_, s.refine_norm[i], gr, grads);
    nn::Tensor g_down = refine_[i].backward(params_, s.down[i], gr, grads);
    nn::relu_backward_inplace(s.down[i], g_down);
    g_down = down_norm_[i].backward(params_, s.down_norm[i], g_down, grads);
    const nn::Tensor& in = i == 0 ? s.input : s.refined[i - 1];
    nn::Tensor g_in = down_[i].backward(params_, in, g_down, grads, i > 0);
    if (i > 0) {
      for (std::size_t k = 0; k < g_in.data.size(); ++k) g_refined[i - 1].data[k] += g_in.data[k];
    }
  }
}

}  // namespace irisseg
