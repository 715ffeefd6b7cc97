#include "irisseg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

#include "irisseg/errors.hpp"

namespace irisseg::nn {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

}  // namespace

Conv2d::Conv2d(ParamLayout& layout, int in_channels, int out_channels, int kernel, int stride)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(kernel / 2) {
  w_off_ = layout.allocate(weight_count());
  b_off_ = layout.allocate(static_cast<std::size_t>(out_));
}

void Conv2d::im2col(const Tensor& x, int out_h, int out_w, FloatBuffer& col) const {
  const std::size_t cols = static_cast<std::size_t>(out_h) * out_w;
  col.assign(static_cast<std::size_t>(in_) * k_ * k_ * cols, 0.0f);
  for (int c = 0; c < in_; ++c) {
    const float* src = x.channel(c);
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        float* dst = col.data() + ((static_cast<std::size_t>(c) * k_ + ky) * k_ + kx) * cols;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= x.height) continue;
          const float* row = src + static_cast<std::size_t>(iy) * x.width;
          float* out = dst + static_cast<std::size_t>(oy) * out_w;
          if (stride_ == 1) {
            const int ox_lo = std::max(0, pad_ - kx);
            const int ox_hi = std::min(out_w, x.width + pad_ - kx);
            if (ox_hi > ox_lo) {
              std::memcpy(out + ox_lo, row + ox_lo - pad_ + kx,
                          sizeof(float) * static_cast<std::size_t>(ox_hi - ox_lo));
            }
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < x.width) out[ox] = row[ix];
            }
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const FloatBuffer& col, int out_h, int out_w, Tensor& dx) const {
  const std::size_t cols = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < in_; ++c) {
    float* dst = dx.channel(c);
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const float* src = col.data() + ((static_cast<std::size_t>(c) * k_ + ky) * k_ + kx) * cols;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= dx.height) continue;
          float* row = dst + static_cast<std::size_t>(iy) * dx.width;
          const float* in = src + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < dx.width) row[ix] += in[ox];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(std::span<const float> params, const Tensor& x) const {
  if (x.channels != in_) throw ShapeMismatch("conv input channel count mismatch");
  const int oh = output_size(x.height);
  const int ow = output_size(x.width);
  const auto cols = static_cast<Eigen::Index>(oh) * ow;
  const auto depth = static_cast<Eigen::Index>(in_) * k_ * k_;
  Tensor y(out_, oh, ow);
  ConstMatMap w(params.data() + w_off_, out_, depth);
  MatMap out(y.data.data(), out_, cols);
  if (k_ == 1 && stride_ == 1) {
    out.noalias() = w * ConstMatMap(x.data.data(), depth, cols);
  } else {
    FloatBuffer col;
    im2col(x, oh, ow, col);
    out.noalias() = w * ConstMatMap(col.data(), depth, cols);
  }
  for (int o = 0; o < out_; ++o) out.row(o).array() += params[b_off_ + o];
  return y;
}

Tensor Conv2d::backward(std::span<const float> params, const Tensor& x, const Tensor& grad_out,
                        std::span<float> grads, bool need_input_grad) const {
  const int oh = grad_out.height;
  const int ow = grad_out.width;
  const auto cols = static_cast<Eigen::Index>(oh) * ow;
  const auto depth = static_cast<Eigen::Index>(in_) * k_ * k_;
  ConstMatMap dy(grad_out.data.data(), out_, cols);
  ConstMatMap w(params.data() + w_off_, out_, depth);
  MatMap dw(grads.data() + w_off_, out_, depth);
  for (int o = 0; o < out_; ++o) {
    const float* row = grad_out.channel(o);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < cols; ++i) sum += row[i];
    grads[b_off_ + o] += static_cast<float>(sum);
  }

  const bool direct = k_ == 1 && stride_ == 1;
  FloatBuffer col;
  if (direct) {
    dw.noalias() += dy * ConstMatMap(x.data.data(), depth, cols).transpose();
  } else {
    im2col(x, oh, ow, col);
    dw.noalias() += dy * ConstMatMap(col.data(), depth, cols).transpose();
  }
  if (!need_input_grad) return {};

  Tensor dx(in_, x.height, x.width);
  if (direct) {
    MatMap(dx.data.data(), depth, cols).noalias() = w.transpose() * dy;
  } else {
    col.resize(static_cast<std::size_t>(depth * cols));
    MatMap(col.data(), depth, cols).noalias() = w.transpose() * dy;
    col2im(col, oh, ow, dx);
  }
  return dx;
}

namespace {
constexpr double kNormEpsilon = 1e-5;
}

GroupNorm::GroupNorm(ParamLayout& layout, int channels, int groups)
    : channels_(channels), groups_(groups) {
  if (groups < 1 || channels % groups != 0) throw ShapeMismatch("channels not divisible by groups");
  scale_off_ = layout.allocate(static_cast<std::size_t>(channels));
  shift_off_ = layout.allocate(static_cast<std::size_t>(channels));
}

void GroupNorm::init(std::span<float> params) const {
  for (int c = 0; c < channels_; ++c) {
    params[scale_off_ + c] = 1.0f;
    params[shift_off_ + c] = 0.0f;
  }
}

Tensor GroupNorm::forward(std::span<const float> params, const Tensor& x, Cache& cache) const {
  if (x.channels != channels_) throw ShapeMismatch("group norm channel count mismatch");
  const int per_group = channels_ / groups_;
  const std::size_t plane = x.plane();
  const std::size_t count = plane * per_group;
  cache.normalized = Tensor(x.channels, x.height, x.width);
  cache.inv_std.assign(groups_, 0.0f);
  Tensor y(x.channels, x.height, x.width);
  for (int g = 0; g < groups_; ++g) {
    const float* src = x.channel(g * per_group);
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < count; ++i) sum += src[i];
    const double mean = sum / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) sq += (src[i] - mean) * (src[i] - mean);
    const double inv_std = 1.0 / std::sqrt(sq / static_cast<double>(count) + kNormEpsilon);
    cache.inv_std[g] = static_cast<float>(inv_std);
    float* xhat = cache.normalized.channel(g * per_group);
    float* out = y.channel(g * per_group);
    for (int c = 0; c < per_group; ++c) {
      const float scale = params[scale_off_ + g * per_group + c];
      const float shift = params[shift_off_ + g * per_group + c];
      for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
        xhat[i] = static_cast<float>((src[i] - mean) * inv_std);
        out[i] = scale * xhat[i] + shift;
      }
    }
  }
  return y;
}

Tensor GroupNorm::backward(std::span<const float> params, const Cache& cache, const Tensor& grad_out,
                           std::span<float> grads) const {
  const int per_group = channels_ / groups_;
  const std::size_t plane = grad_out.plane();
  const std::size_t count = plane * per_group;
  Tensor dx(grad_out.channels, grad_out.height, grad_out.width);
  std::vector<float> dxhat(count);
  for (int g = 0; g < groups_; ++g) {
    const float* dy = grad_out.channel(g * per_group);
    const float* xhat = cache.normalized.channel(g * per_group);
    double sum_d = 0.0, sum_dx = 0.0;
    for (int c = 0; c < per_group; ++c) {
      const int ch = g * per_group + c;
      const float scale = params[scale_off_ + ch];
      double d_scale = 0.0, d_shift = 0.0;
      for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
        d_scale += static_cast<double>(dy[i]) * xhat[i];
        d_shift += dy[i];
        dxhat[i] = dy[i] * scale;
        sum_d += dxhat[i];
        sum_dx += static_cast<double>(dxhat[i]) * xhat[i];
      }
      grads[scale_off_ + ch] += static_cast<float>(d_scale);
      grads[shift_off_ + ch] += static_cast<float>(d_shift);
    }
    const double n = static_cast<double>(count);
    const double inv_std = cache.inv_std[g];
    float* out = dx.channel(g * per_group);
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = static_cast<float>(inv_std * (dxhat[i] - sum_d / n - xhat[i] * sum_dx / n));
    }
  }
  return dx;
}

void relu_inplace(Tensor& x) {
  for (auto& v : x.data) v = v > 0.0f ? v : 0.0f;
}

void relu_backward_inplace(const Tensor& activated, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(activated.data[i] > 0.0f)) grad.data[i] = 0.0f;
  }
}

Tensor upsample2x(const Tensor& x) {
  Tensor y(x.channels, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels; ++c) {
    const float* src = x.channel(c);
    float* dst = y.channel(c);
    for (int r = 0; r < y.height; ++r) {
      const float* srow = src + static_cast<std::size_t>(r / 2) * x.width;
      float* drow = dst + static_cast<std::size_t>(r) * y.width;
      for (int col = 0; col < y.width; ++col) drow[col] = srow[col / 2];
    }
  }
  return y;
}

Tensor upsample2x_backward(const Tensor& grad_out) {
  Tensor g(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
  for (int c = 0; c < g.channels; ++c) {
    const float* src = grad_out.channel(c);
    float* dst = g.channel(c);
    for (int r = 0; r < grad_out.height; ++r) {
      const float* srow = src + static_cast<std::size_t>(r) * grad_out.width;
      float* drow = dst + static_cast<std::size_t>(r / 2) * g.width;
      for (int col = 0; col < grad_out.width; ++col) drow[col / 2] += srow[col];
    }
  }
  return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeMismatch("concat spatial mismatch");
  Tensor y(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return y;
}

void split_channels(const Tensor& grad, int first_channels, Tensor& grad_a, Tensor& grad_b) {
  grad_a = Tensor(first_channels, grad.height, grad.width);
  grad_b = Tensor(grad.channels - first_channels, grad.height, grad.width);
  const auto split = static_cast<std::ptrdiff_t>(grad_a.data.size());
  std::copy(grad.data.begin(), grad.data.begin() + split, grad_a.data.begin());
  std::copy(grad.data.begin() + split, grad.data.end(), grad_b.data.begin());
}

}  // namespace irisseg::nn
