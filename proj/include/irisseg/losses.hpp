#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "irisseg/mask.hpp"

namespace irisseg {

/// Pixel logits with their binary labels (1 = iris). Views only.
struct PixelBatch {
  std::span<const double> logits;
  std::span<const std::uint8_t> labels;
};

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // d value / d input, same layout as the input
};

enum class LossKind { focal, ce, dice, triplet };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

/// Mean binary cross-entropy over sigmoid(logit).
LossResult ce_loss(const PixelBatch& batch);

/// alpha * (1 - p_t)^gamma per pixel, p_t = p for iris and 1 - p otherwise.
std::vector<double> focal_weights(const PixelBatch& batch, const FocalParams& params);

/// Mean focal loss. Iris pixels contribute -alpha (1-p)^gamma log p and
/// background pixels -(1-alpha) p^gamma log(1-p), with p = sigmoid(logit).
/// The modulating factor is differentiated through.
LossResult focal_loss(const PixelBatch& batch, const FocalParams& params);

inline constexpr double kDiceSmoothing = 1.0;

/// 1 - (2 sum(p y) + eps) / (sum p + sum y + eps).
LossResult dice_loss(const PixelBatch& batch);

struct TripletSpec {
  double margin = 1.0;
  int samples_per_image = 256;
  int embedding_dim = 8;
  std::uint64_t seed = 0;
};

/// Pixel indices of one (anchor, positive, negative) triplet.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

/// Seeded draw: anchor and positive are distinct iris pixels, negative is a
/// background pixel. Throws InsufficientPixels when a pool is too small.
std::vector<Triplet> sample_triplets(const Mask& labels, const TripletSpec& spec);

/// Per-pixel embeddings laid out channel-major: embeddings[d * pixels + i].
/// Returns the mean hinge max(0, |a-p| - |a-n| + margin) over sampled
/// triplets and its gradient in the same layout.
LossResult triplet_loss(std::span<const double> embeddings, const Mask& labels,
                        const TripletSpec& spec);

}  // namespace irisseg
