#pragma once

// Minimal CPU building blocks for the reference backbone: a CHW tensor and
// layers with hand-written backward passes over a flat parameter vector.

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <vector>

namespace irisseg::nn {

/// Over-aligned allocator. Vectorized kernels peel loops according to
/// buffer alignment, so a fixed alignment keeps float results independent
/// of where the heap happens to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

/// Single-sample activation, channel-major (CHW).
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  FloatBuffer data;

  Tensor() = default;
  Tensor(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float* channel(int c) { return data.data() + c * plane(); }
  const float* channel(int c) const { return data.data() + c * plane(); }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// Appends parameter blocks to one flat vector; layers keep offsets.
class ParamLayout {
 public:
  std::size_t allocate(std::size_t count) {
    const std::size_t off = size_;
    size_ += count;
    return off;
  }
  std::size_t size() const { return size_; }

 private:
  std::size_t size_ = 0;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamLayout& layout, int in_channels, int out_channels, int kernel, int stride);

  Tensor forward(std::span<const float> params, const Tensor& x) const;

  /// Accumulates weight/bias gradients into grads; returns dL/dx when
  /// need_input_grad is set (an empty tensor otherwise).
  Tensor backward(std::span<const float> params, const Tensor& x, const Tensor& grad_out,
                  std::span<float> grads, bool need_input_grad = true) const;

  /// He-normal weights, zero bias.
  template <class Rng>
  void init(std::span<float> params, Rng& rng) const;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  std::size_t weight_offset() const { return w_off_; }
  std::size_t bias_offset() const { return b_off_; }
  std::size_t weight_count() const { return static_cast<std::size_t>(out_) * in_ * k_ * k_; }
  int output_size(int input) const { return (input + 2 * pad_ - k_) / stride_ + 1; }

 private:
  void im2col(const Tensor& x, int out_h, int out_w, FloatBuffer& col) const;
  void col2im(const FloatBuffer& col, int out_h, int out_w, Tensor& dx) const;

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  std::size_t w_off_ = 0, b_off_ = 0;
};

/// Group normalization with a per-channel affine transform.
class GroupNorm {
 public:
  struct Cache {
    Tensor normalized;           // x-hat
    std::vector<float> inv_std;  // one per group
  };

  GroupNorm() = default;
  GroupNorm(ParamLayout& layout, int channels, int groups);

  Tensor forward(std::span<const float> params, const Tensor& x, Cache& cache) const;
  Tensor backward(std::span<const float> params, const Cache& cache, const Tensor& grad_out,
                  std::span<float> grads) const;
  /// Unit scale, zero shift.
  void init(std::span<float> params) const;

  int channels() const { return channels_; }
  int groups() const { return groups_; }
  std::size_t scale_offset() const { return scale_off_; }
  std::size_t shift_offset() const { return shift_off_; }

 private:
  int channels_ = 0, groups_ = 1;
  std::size_t scale_off_ = 0, shift_off_ = 0;
};

void relu_inplace(Tensor& x);
/// Zeroes grad where the (post-activation) output was not positive.
void relu_backward_inplace(const Tensor& activated, Tensor& grad);

Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits a gradient of concat(a, b) into the part for a and the part for b.
void split_channels(const Tensor& grad, int first_channels, Tensor& grad_a, Tensor& grad_b);

}  // namespace irisseg::nn

#include <cmath>
#include <random>

namespace irisseg::nn {

template <class Rng>
void Conv2d::init(std::span<float> params, Rng& rng) const {
  const double fan_in = static_cast<double>(in_) * k_ * k_;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (std::size_t i = 0; i < weight_count(); ++i) params[w_off_ + i] = static_cast<float>(dist(rng));
  for (int o = 0; o < out_; ++o) params[b_off_ + o] = 0.0f;
}

}  // namespace irisseg::nn
