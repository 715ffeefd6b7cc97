#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "irisseg/errors.hpp"
#include "irisseg/nn.hpp"
#include "irisseg/tiny_ref_net.hpp"

using namespace irisseg;
using nn::Tensor;

namespace {

Tensor random_tensor(std::mt19937_64& rng, int c, int h, int w) {
  std::normal_distribution<float> z(0.0f, 1.0f);
  Tensor t(c, h, w);
  for (auto& v : t.data) v = z(rng);
  return t;
}

std::vector<float> random_params(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<float> z(0.0f, 0.5f);
  std::vector<float> p(n);
  for (auto& v : p) v = z(rng);
  return p;
}

// Direct nested-loop convolution with zero padding k/2.
Tensor naive_conv(const std::vector<float>& p, std::size_t w_off, std::size_t b_off, int in,
                  int out, int k, int stride, const Tensor& x) {
  const int pad = k / 2;
  const int oh = (x.height + 2 * pad - k) / stride + 1;
  const int ow = (x.width + 2 * pad - k) / stride + 1;
  Tensor y(out, oh, ow);
  for (int o = 0; o < out; ++o)
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        double acc = p[b_off + o];
        for (int i = 0; i < in; ++i)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = r * stride - pad + ky, ix = c * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= x.height || ix >= x.width) continue;
              acc += p[w_off + ((static_cast<std::size_t>(o) * in + i) * k + ky) * k + kx] *
                     x.data[(static_cast<std::size_t>(i) * x.height + iy) * x.width + ix];
            }
        y.data[(static_cast<std::size_t>(o) * oh + r) * ow + c] = static_cast<float>(acc);
      }
  return y;
}

double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += static_cast<double>(y.data[i]) * w.data[i];
  return s;
}

}  // namespace

struct ConvCase {
  int in, out, k, stride, h, w;
};

class ConvTest : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvTest, ForwardMatchesNaive) {
  const auto cc = GetParam();
  std::mt19937_64 rng(1);
  nn::ParamLayout layout;
  nn::Conv2d conv(layout, cc.in, cc.out, cc.k, cc.stride);
  const auto p = random_params(rng, layout.size());
  const Tensor x = random_tensor(rng, cc.in, cc.h, cc.w);
  const Tensor y = conv.forward(p, x);
  const Tensor ref = naive_conv(p, conv.weight_offset(), conv.bias_offset(), cc.in, cc.out, cc.k,
                                cc.stride, x);
  ASSERT_TRUE(y.same_shape(ref));
  for (std::size_t i = 0; i < y.data.size(); ++i) EXPECT_NEAR(y.data[i], ref.data[i], 1e-4);
}

TEST_P(ConvTest, BackwardIsAdjointOfForward) {
  const auto cc = GetParam();
  std::mt19937_64 rng(2);
  nn::ParamLayout layout;
  nn::Conv2d conv(layout, cc.in, cc.out, cc.k, cc.stride);
  auto p = random_params(rng, layout.size());
  const Tensor x = random_tensor(rng, cc.in, cc.h, cc.w);
  const Tensor y = conv.forward(p, x);
  const Tensor gy = random_tensor(rng, y.channels, y.height, y.width);
  std::vector<float> grads(p.size(), 0.0f);
  const Tensor gx = conv.backward(p, x, gy, grads);

  // L = <conv(x), gy> is linear in x and in the parameters, so finite
  // differences in double-rounded float are checked at a loose tolerance.
  const double h = 1e-3;
  std::uniform_int_distribution<std::size_t> pick_x(0, x.data.size() - 1);
  for (int t = 0; t < 10; ++t) {
    const std::size_t i = pick_x(rng);
    Tensor xp = x, xm = x;
    xp.data[i] += static_cast<float>(h);
    xm.data[i] -= static_cast<float>(h);
    const double fd =
        (weighted_sum(conv.forward(p, xp), gy) - weighted_sum(conv.forward(p, xm), gy)) / (2 * h);
    EXPECT_NEAR(gx.data[i], fd, 2e-3 * std::max(1.0, std::abs(fd)));
  }
  std::uniform_int_distribution<std::size_t> pick_p(0, p.size() - 1);
  for (int t = 0; t < 10; ++t) {
    const std::size_t i = pick_p(rng);
    const float keep = p[i];
    p[i] = keep + static_cast<float>(h);
    const double up = weighted_sum(conv.forward(p, x), gy);
    p[i] = keep - static_cast<float>(h);
    const double dn = weighted_sum(conv.forward(p, x), gy);
    p[i] = keep;
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(grads[i], fd, 2e-3 * std::max(1.0, std::abs(fd)));
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvTest,
                         ::testing::Values(ConvCase{2, 3, 3, 1, 7, 5}, ConvCase{3, 4, 3, 2, 8, 8},
                                           ConvCase{4, 2, 1, 1, 6, 6}, ConvCase{1, 5, 3, 2, 9, 7},
                                           ConvCase{5, 1, 1, 1, 1, 1}));

TEST(GroupNorm, NormalizesEachGroup) {
  std::mt19937_64 rng(3);
  nn::ParamLayout layout;
  nn::GroupNorm gn(layout, 8, 4);
  std::vector<float> p(layout.size());
  gn.init(p);
  Tensor x = random_tensor(rng, 8, 5, 6);
  for (auto& v : x.data) v = 3.0f * v + 7.0f;
  nn::GroupNorm::Cache cache;
  const Tensor y = gn.forward(p, x, cache);
  const std::size_t count = 2 * y.plane();
  for (int g = 0; g < 4; ++g) {
    double s = 0, sq = 0;
    for (std::size_t i = 0; i < count; ++i) s += y.channel(2 * g)[i];
    const double mean = s / count;
    for (std::size_t i = 0; i < count; ++i) sq += std::pow(y.channel(2 * g)[i] - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(sq / count, 1.0, 1e-3);
  }
}

TEST(GroupNorm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  nn::ParamLayout layout;
  nn::GroupNorm gn(layout, 6, 3);
  auto p = random_params(rng, layout.size());
  const Tensor x = random_tensor(rng, 6, 4, 4);
  nn::GroupNorm::Cache cache;
  const Tensor y = gn.forward(p, x, cache);
  const Tensor gy = random_tensor(rng, y.channels, y.height, y.width);
  std::vector<float> grads(p.size(), 0.0f);
  const Tensor gx = gn.backward(p, cache, gy, grads);

  auto loss = [&](const std::vector<float>& pp, const Tensor& xx) {
    nn::GroupNorm::Cache c;
    return weighted_sum(gn.forward(pp, xx, c), gy);
  };
  const double h = 1e-3;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    Tensor xp = x, xm = x;
    xp.data[i] += static_cast<float>(h);
    xm.data[i] -= static_cast<float>(h);
    const double fd = (loss(p, xp) - loss(p, xm)) / (2 * h);
    EXPECT_NEAR(gx.data[i], fd, 5e-3 * std::max(1.0, std::abs(fd)));
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto pp = p, pm = p;
    pp[i] += static_cast<float>(h);
    pm[i] -= static_cast<float>(h);
    const double fd = (loss(pp, x) - loss(pm, x)) / (2 * h);
    EXPECT_NEAR(grads[i], fd, 5e-3 * std::max(1.0, std::abs(fd)));
  }
}

TEST(GroupNorm, RejectsIndivisibleChannels) {
  nn::ParamLayout layout;
  EXPECT_THROW(nn::GroupNorm(layout, 6, 4), ShapeMismatch);
}

TEST(Upsample, BackwardIsAdjoint) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor(rng, 3, 4, 5);
  const Tensor y = nn::upsample2x(x);
  ASSERT_EQ(y.height, 8);
  ASSERT_EQ(y.width, 10);
  EXPECT_EQ(y.data[0], x.data[0]);
  EXPECT_EQ(y.data[11], x.data[0]);  // (1,1) copies (0,0)
  const Tensor gy = random_tensor(rng, 3, 8, 10);
  const Tensor gx = nn::upsample2x_backward(gy);
  EXPECT_NEAR(weighted_sum(y, gy), weighted_sum(x, gx), 1e-3);
}

TEST(Concat, SplitInvertsConcat) {
  std::mt19937_64 rng(6);
  const Tensor a = random_tensor(rng, 2, 3, 3), b = random_tensor(rng, 4, 3, 3);
  const Tensor ab = nn::concat_channels(a, b);
  EXPECT_EQ(ab.channels, 6);
  Tensor ga, gb;
  nn::split_channels(ab, 2, ga, gb);
  EXPECT_EQ(ga.data, a.data);
  EXPECT_EQ(gb.data, b.data);
}

TEST(Relu, BackwardMasksInactive) {
  Tensor x(1, 1, 4);
  x.data = {-1.0f, 0.0f, 2.0f, 3.0f};
  nn::relu_inplace(x);
  EXPECT_EQ(x.data, (nn::FloatBuffer{0.0f, 0.0f, 2.0f, 3.0f}));
  Tensor g(1, 1, 4, 1.0f);
  nn::relu_backward_inplace(x, g);
  EXPECT_EQ(g.data, (nn::FloatBuffer{0.0f, 0.0f, 1.0f, 1.0f}));
}

TEST(TinyRefNet, ParameterGradientMatchesFiniteDifferences) {
  TinyRefNetConfig cfg;
  cfg.resolution = 16;
  cfg.embedding_dim = 2;
  cfg.init_seed = 9;
  TinyRefNet net(cfg);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor image(1, 16, 16);
  for (auto& v : image.data) v = u(rng);
  const BoundingBox box{3, 4, 11, 12};
  // The small default init puts GroupNorm inputs near zero, where curvature
  // swamps a finite difference. Any point checks backward.
  std::normal_distribution<float> w(0.0f, 0.2f);
  for (auto& p : net.parameters()) p = w(rng);

  auto state = net.forward(image, box, true);
  const Tensor g_logit_w = random_tensor(rng, 1, 16, 16);
  const Tensor g_emb_w = random_tensor(rng, 2, 16, 16);
  auto objective = [&](const TinyRefNet& m) {
    auto s = m.forward(image, box, true);
    double v = 0;
    for (std::size_t i = 0; i < s->logits.values.size(); ++i)
      v += static_cast<double>(s->logits.values[i]) * g_logit_w.data[i];
    return v + weighted_sum(s->embedding, g_emb_w);
  };
  std::vector<float> grads(net.parameters().size(), 0.0f);
  net.backward(*state, g_logit_w.data, g_emb_w.data, grads);

  // Directional derivatives over the whole parameter vector average out
  // float rounding and the odd ReLU kink better than single coordinates.
  const std::vector<float> base(net.parameters().begin(), net.parameters().end());
  std::normal_distribution<double> z(0.0, 1.0);
  for (int t = 0; t < 6; ++t) {
    std::vector<double> v(base.size());
    if (t == 0) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = grads[i];
    } else {
      for (auto& x : v) x = z(rng);
    }
    double norm = 0, analytic = 0;
    for (std::size_t i = 0; i < v.size(); ++i) norm += v[i] * v[i];
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] /= norm;
      analytic += v[i] * grads[i];
    }
    const double h = 1e-3;
    auto shifted = [&](double step) {
      auto params = net.parameters();
      for (std::size_t i = 0; i < v.size(); ++i) params[i] = static_cast<float>(base[i] + step * v[i]);
      return objective(net);
    };
    const double fd = (shifted(h) - shifted(-h)) / (2 * h);
    std::copy(base.begin(), base.end(), net.parameters().begin());
    EXPECT_NEAR(analytic, fd, 0.02 * std::max(1.0, std::abs(fd))) << "direction " << t;
  }
}

TEST(TinyRefNet, RejectsBadResolutionAndShapes) {
  TinyRefNetConfig cfg;
  cfg.resolution = 24;
  EXPECT_THROW(TinyRefNet{cfg}, UserError);
  cfg.resolution = 32;
  TinyRefNet net(cfg);
  EXPECT_THROW(net.encode_image(Tensor(1, 16, 16)), ShapeMismatch);
  EXPECT_THROW(net.encode_image(Tensor(3, 32, 32)), ShapeMismatch);
  EXPECT_THROW(net.encode_prompt(BoundingBox{0, 0, 40, 10}), ShapeMismatch);
}
