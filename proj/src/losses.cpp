#include "irisseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "irisseg/errors.hpp"

namespace irisseg {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check(const PixelBatch& batch) {
  if (batch.logits.empty()) throw EmptyBatch();
  if (batch.logits.size() != batch.labels.size()) {
    throw ShapeMismatch("logits and labels differ in length");
  }
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::focal: return "focal";
    case LossKind::ce: return "ce";
    case LossKind::dice: return "dice";
    case LossKind::triplet: return "triplet";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "focal") return LossKind::focal;
  if (name == "ce") return LossKind::ce;
  if (name == "dice") return LossKind::dice;
  if (name == "triplet") return LossKind::triplet;
  throw UserError("unknown loss '" + name + "' (expected focal, ce, dice or triplet)");
}

LossResult ce_loss(const PixelBatch& batch) {
  check(batch);
  const auto n = static_cast<double>(batch.logits.size());
  LossResult out;
  out.grad.resize(batch.logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.logits.size(); ++i) {
    const double z = batch.logits[i];
    const bool y = batch.labels[i] != 0;
    // -log(sigmoid(z)) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    total += y ? softplus(-z) : softplus(z);
    out.grad[i] = (sigmoid(z) - (y ? 1.0 : 0.0)) / n;
  }
  out.value = total / n;
  return out;
}

std::vector<double> focal_weights(const PixelBatch& batch, const FocalParams& params) {
  check(batch);
  std::vector<double> w(batch.logits.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double p = sigmoid(batch.logits[i]);
    const double p_t = batch.labels[i] ? p : 1.0 - p;
    w[i] = params.alpha * std::pow(1.0 - p_t, params.gamma);
  }
  return w;
}

LossResult focal_loss(const PixelBatch& batch, const FocalParams& params) {
  check(batch);
  const double a = params.alpha;
  const double g = params.gamma;
  const auto n = static_cast<double>(batch.logits.size());
  LossResult out;
  out.grad.resize(batch.logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.logits.size(); ++i) {
    const double z = batch.logits[i];
    const double p = sigmoid(z);
    const double q = sigmoid(-z);  // 1 - p without cancellation
    if (batch.labels[i]) {
      const double log_p = -softplus(-z);
      const double mod = std::pow(q, g);
      total += -a * mod * log_p;
      out.grad[i] = a * mod * (g * p * log_p - q) / n;
    } else {
      const double log_q = -softplus(z);
      const double mod = std::pow(p, g);
      total += -(1.0 - a) * mod * log_q;
      out.grad[i] = (1.0 - a) * mod * (p - g * q * log_q) / n;
    }
  }
  out.value = total / n;
  return out;
}

LossResult dice_loss(const PixelBatch& batch) {
  check(batch);
  std::vector<double> p(batch.logits.size());
  double inter = 0.0, sum_p = 0.0, sum_y = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = sigmoid(batch.logits[i]);
    const double y = batch.labels[i] ? 1.0 : 0.0;
    inter += p[i] * y;
    sum_p += p[i];
    sum_y += y;
  }
  const double num = 2.0 * inter + kDiceSmoothing;
  const double den = sum_p + sum_y + kDiceSmoothing;
  LossResult out;
  out.value = 1.0 - num / den;
  out.grad.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double y = batch.labels[i] ? 1.0 : 0.0;
    const double d_loss_d_p = -(2.0 * y * den - num) / (den * den);
    out.grad[i] = d_loss_d_p * p[i] * (1.0 - p[i]);
  }
  return out;
}

std::vector<Triplet> sample_triplets(const Mask& labels, const TripletSpec& spec) {
  if (spec.samples_per_image < 1) throw UserError("triplet samples_per_image must be >= 1");
  std::vector<std::size_t> iris, background;
  const auto data = labels.data();
  for (std::size_t i = 0; i < data.size(); ++i) (data[i] ? iris : background).push_back(i);
  if (iris.size() < 2 || background.empty()) {
    throw InsufficientPixels("triplet sampling needs >= 2 iris and >= 1 background pixels");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick_iris(0, iris.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_other(0, iris.size() - 2);
  std::uniform_int_distribution<std::size_t> pick_bg(0, background.size() - 1);
  std::vector<Triplet> out(static_cast<std::size_t>(spec.samples_per_image));
  for (auto& t : out) {
    const std::size_t a = pick_iris(rng);
    std::size_t p = pick_other(rng);
    if (p >= a) ++p;
    t = {iris[a], iris[p], background[pick_bg(rng)]};
  }
  return out;
}

LossResult triplet_loss(std::span<const double> embeddings, const Mask& labels,
                        const TripletSpec& spec) {
  const std::size_t pixels = labels.size();
  const auto dim = static_cast<std::size_t>(spec.embedding_dim);
  if (dim == 0 || embeddings.size() != dim * pixels) {
    throw ShapeMismatch("embedding raster does not match labels x embedding_dim");
  }
  const auto triplets = sample_triplets(labels, spec);

  LossResult out;
  out.grad.assign(embeddings.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(triplets.size());
  std::vector<double> ap(dim), an(dim);
  double total = 0.0;
  for (const auto& t : triplets) {
    double d_ap = 0.0, d_an = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double a = embeddings[d * pixels + t.anchor];
      ap[d] = a - embeddings[d * pixels + t.positive];
      an[d] = a - embeddings[d * pixels + t.negative];
      d_ap += ap[d] * ap[d];
      d_an += an[d] * an[d];
    }
    d_ap = std::sqrt(d_ap);
    d_an = std::sqrt(d_an);
    const double hinge = d_ap - d_an + spec.margin;
    if (hinge <= 0.0) continue;
    total += hinge;
    // The norm has no gradient at zero distance; take the zero subgradient.
    for (std::size_t d = 0; d < dim; ++d) {
      const double g_ap = d_ap > 0.0 ? ap[d] / d_ap * scale : 0.0;
      const double g_an = d_an > 0.0 ? an[d] / d_an * scale : 0.0;
      out.grad[d * pixels + t.anchor] += g_ap - g_an;
      out.grad[d * pixels + t.positive] -= g_ap;
      out.grad[d * pixels + t.negative] += g_an;
    }
  }
  out.value = total * scale;
  return out;
}

}  // namespace irisseg
