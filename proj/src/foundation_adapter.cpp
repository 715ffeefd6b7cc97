#include "irisseg/foundation_adapter.hpp"

#include <mutex>

#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include "irisseg/errors.hpp"

namespace fs = std::filesystem;

namespace irisseg {
namespace {

// Pixel statistics the exported encoder expects (0-255 scale, RGB).
constexpr float kPixelMean[3] = {123.675f, 116.28f, 103.53f};
constexpr float kPixelStd[3] = {58.395f, 57.12f, 57.375f};
constexpr int kLowResMask = 256;

bool flag(const Metadata& m, const std::string& key, bool fallback) {
  const auto it = m.find(key);
  return it == m.end() ? fallback : it->second == "1" || it->second == "true";
}

struct AdapterState : ForwardState {
  nn::Tensor refine_in;
};

}  // namespace

struct FoundationAdapter::Graphs {
  // cv::dnn::Net::forward mutates internal buffers.
  mutable std::mutex lock;
  mutable cv::dnn::Net encoder;
  mutable cv::dnn::Net decoder;
};

FoundationConfig FoundationConfig::from_directory(const fs::path& dir) {
  FoundationConfig cfg;
  cfg.encoder_path = dir / "encoder.onnx";
  cfg.decoder_path = dir / "decoder.onnx";
  return cfg;
}

FoundationConfig FoundationConfig::from_metadata(const Metadata& meta) {
  FoundationConfig cfg;
  const auto enc = meta.find("foundation.encoder");
  const auto dec = meta.find("foundation.decoder");
  if (enc == meta.end() || dec == meta.end()) {
    throw UserError("foundation checkpoint metadata lacks encoder/decoder paths");
  }
  cfg.encoder_path = enc->second;
  cfg.decoder_path = dec->second;
  if (meta.count("input_resolution")) cfg.resolution = std::stoi(meta.at("input_resolution"));
  cfg.freeze_image_encoder = flag(meta, "foundation.freeze_image_encoder", true);
  cfg.freeze_prompt_encoder = flag(meta, "foundation.freeze_prompt_encoder", true);
  return cfg;
}

FoundationAdapter::FoundationAdapter(FoundationConfig config) : config_(std::move(config)) {
  for (const auto* p : {&config_.encoder_path, &config_.decoder_path}) {
    if (p->empty() || !fs::is_regular_file(*p)) {
      throw MissingCheckpoint("foundation checkpoint file not found: " + p->string());
    }
  }
  if (!config_.freeze_image_encoder || !config_.freeze_prompt_encoder) {
    throw UserError("exported encoder graphs are inference-only; they cannot be unfrozen");
  }
  if (config_.resolution < 16 || config_.resolution % 16 != 0) {
    throw UserError("foundation resolution must be a multiple of 16");
  }
  graphs_ = std::make_unique<Graphs>();
  try {
    graphs_->encoder = cv::dnn::readNetFromONNX(config_.encoder_path.string());
    graphs_->decoder = cv::dnn::readNetFromONNX(config_.decoder_path.string());
  } catch (const cv::Exception& e) {
    throw UserError(std::string("cannot load foundation graphs: ") + e.what());
  }

  nn::ParamLayout layout;
  refine_ = nn::Conv2d(layout, 2, 1, 3, 1);
  params_.assign(layout.size(), 0.0f);
  // Identity on the decoder-logit channel (centre tap of input channel 0).
  params_[refine_.weight_offset() + 4] = 1.0f;
}

FoundationAdapter::~FoundationAdapter() = default;

Metadata FoundationAdapter::describe() const {
  return {{"foundation.encoder", fs::absolute(config_.encoder_path).string()},
          {"foundation.decoder", fs::absolute(config_.decoder_path).string()},
          {"foundation.freeze_image_encoder", config_.freeze_image_encoder ? "1" : "0"},
          {"foundation.freeze_prompt_encoder", config_.freeze_prompt_encoder ? "1" : "0"},
          {"foundation.trainable", "mask_decoder_refinement"}};
}

ImageFeatures FoundationAdapter::encode_image(const nn::Tensor& image) const {
  const int n = config_.resolution;
  if (image.channels != 3 || image.height != n || image.width != n) {
    throw ShapeMismatch("foundation backbone expects a 3x" + std::to_string(n) + "x" +
                        std::to_string(n) + " image");
  }
  const int dims[4] = {1, 3, n, n};
  cv::Mat blob(4, dims, CV_32F);
  auto* dst = blob.ptr<float>();
  for (int c = 0; c < 3; ++c) {
    const float* src = image.channel(c);
    for (std::size_t i = 0; i < image.plane(); ++i) {
      dst[c * image.plane() + i] = (src[i] * 255.0f - kPixelMean[c]) / kPixelStd[c];
    }
  }
  cv::Mat out;
  {
    std::lock_guard guard(graphs_->lock);
    graphs_->encoder.setInput(blob);
    out = graphs_->encoder.forward().clone();
  }
  if (out.dims != 4) throw Error("encoder output is not a 4-d tensor");
  ImageFeatures f;
  f.features = nn::Tensor(out.size[1], out.size[2], out.size[3]);
  std::copy_n(out.ptr<float>(), f.features.data.size(), f.features.data.begin());
  f.source = image;
  return f;
}

PromptFeatures FoundationAdapter::encode_prompt(const BoundingBox& box) const {
  if (!box.valid_within(input_extent())) throw ShapeMismatch("prompt box outside the model input");
  // Box corners as the two labelled points (labels 2 and 3) of the decoder
  // signature; the encoding itself happens inside the decoder graph.
  PromptFeatures p;
  p.box = box;
  p.features = nn::Tensor(1, 2, 2);
  p.features.data = {static_cast<float>(box.x_min), static_cast<float>(box.y_min),
                     static_cast<float>(box.x_max), static_cast<float>(box.y_max)};
  return p;
}

std::vector<Raster> FoundationAdapter::raw_decode(const ImageFeatures& image,
                                                  const PromptFeatures& prompt,
                                                  bool multimask) const {
  const int n = config_.resolution;
  const auto& emb = image.features;
  const int emb_dims[4] = {1, emb.channels, emb.height, emb.width};
  cv::Mat embeddings(4, emb_dims, CV_32F, const_cast<float*>(emb.data.data()));
  const int coord_dims[3] = {1, 2, 2};
  cv::Mat coords(3, coord_dims, CV_32F, const_cast<float*>(prompt.features.data.data()));
  const int label_dims[2] = {1, 2};
  cv::Mat labels(2, label_dims, CV_32F);
  labels.ptr<float>()[0] = 2.0f;
  labels.ptr<float>()[1] = 3.0f;
  const int mask_dims[4] = {1, 1, kLowResMask, kLowResMask};
  cv::Mat mask_input(4, mask_dims, CV_32F, cv::Scalar(0));
  const int one[1] = {1};
  cv::Mat has_mask(1, one, CV_32F, cv::Scalar(0));
  const int two[1] = {2};
  cv::Mat size(1, two, CV_32F);
  size.ptr<float>()[0] = static_cast<float>(n);
  size.ptr<float>()[1] = static_cast<float>(n);

  cv::Mat masks;
  {
    std::lock_guard guard(graphs_->lock);
    auto& net = graphs_->decoder;
    net.setInput(embeddings, "image_embeddings");
    net.setInput(coords, "point_coords");
    net.setInput(labels, "point_labels");
    net.setInput(mask_input, "mask_input");
    net.setInput(has_mask, "has_mask_input");
    net.setInput(size, "orig_im_size");
    masks = net.forward("masks").clone();
  }
  if (masks.dims != 4) throw Error("decoder output is not a 4-d tensor");
  const int count = multimask ? masks.size[1] : 1;
  std::vector<Raster> out;
  for (int m = 0; m < count; ++m) {
    cv::Mat plane(masks.size[2], masks.size[3], CV_32F, masks.ptr<float>(0, m));
    cv::Mat resized = plane;
    if (plane.rows != n || plane.cols != n) cv::resize(plane, resized, cv::Size(n, n));
    Raster r(n, n);
    for (int row = 0; row < n; ++row) {
      std::copy_n(resized.ptr<float>(row), n, r.values.data() + static_cast<std::size_t>(row) * n);
    }
    out.push_back(std::move(r));
  }
  return out;
}

nn::Tensor FoundationAdapter::refine_input(const Raster& decoder_logits, const nn::Tensor& image) const {
  nn::Tensor in(2, decoder_logits.height, decoder_logits.width);
  std::copy(decoder_logits.values.begin(), decoder_logits.values.end(), in.channel(0));
  // Luma of the RGB input.
  for (std::size_t i = 0; i < in.plane(); ++i) {
    in.channel(1)[i] = 0.299f * image.channel(0)[i] + 0.587f * image.channel(1)[i] +
                       0.114f * image.channel(2)[i];
  }
  return in;
}

std::vector<Raster> FoundationAdapter::decode_mask(const ImageFeatures& image,
                                                   const PromptFeatures& prompt,
                                                   bool multimask) const {
  auto masks = raw_decode(image, prompt, multimask);
  for (auto& m : masks) {
    const nn::Tensor out = refine_.forward(params_, refine_input(m, image.source));
    m.values.assign(out.data.begin(), out.data.end());
  }
  return masks;
}

std::unique_ptr<ForwardState> FoundationAdapter::forward(const nn::Tensor& image,
                                                         const BoundingBox& box,
                                                         bool with_embedding) const {
  if (with_embedding) throw UserError("the foundation adapter has no embedding head");
  const ImageFeatures features = encode_image(image);
  auto decoded = raw_decode(features, encode_prompt(box), false);
  auto state = std::make_unique<AdapterState>();
  state->refine_in = refine_input(decoded.front(), image);
  const nn::Tensor out = refine_.forward(params_, state->refine_in);
  state->logits = Raster(out.height, out.width);
  state->logits.values.assign(out.data.begin(), out.data.end());
  return state;
}

void FoundationAdapter::backward(const ForwardState& state, std::span<const float> d_logits,
                                 std::span<const float> d_embedding, std::span<float> grads) const {
  if (!d_embedding.empty()) throw UserError("the foundation adapter has no embedding head");
  const auto& s = dynamic_cast<const AdapterState&>(state);
  nn::Tensor g(1, s.refine_in.height, s.refine_in.width);
  std::copy(d_logits.begin(), d_logits.end(), g.data.begin());
  refine_.backward(params_, s.refine_in, g, grads, false);
}

}  // namespace irisseg
