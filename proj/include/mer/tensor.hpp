#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "mer/util.hpp"

namespace mer {

// Dense H x W x C tensor, channels-last (NHWC without the batch axis).
// Images hold values in [0, 1]; intermediate loss/gradient tensors may not.
// Training runs in float; the double instantiation exists for the
// finite-difference checks.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int h, int w, int c) : h_(h), w_(w), c_(c), v_(static_cast<size_t>(h) * w * c, T(0)) {
    require(h > 0 && w > 0 && c > 0, "tensor dimensions must be positive");
  }

  static Tensor full(int h, int w, int c, T value) {
    Tensor t(h, w, c);
    std::fill(t.v_.begin(), t.v_.end(), value);
    return t;
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  T& at(int y, int x, int ch) { return v_[(static_cast<size_t>(y) * w_ + x) * c_ + ch]; }
  const T& at(int y, int x, int ch) const { return v_[(static_cast<size_t>(y) * w_ + x) * c_ + ch]; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  T* row(int y) { return v_.data() + static_cast<size_t>(y) * w_ * c_; }
  const T* row(int y) const { return v_.data() + static_cast<size_t>(y) * w_ * c_; }

  bool same_shape(const Tensor& o) const { return h_ == o.h_ && w_ == o.w_ && c_ == o.c_; }

  void fill(T value) { std::fill(v_.begin(), v_.end(), value); }

  void clamp(T lo, T hi) {
    for (auto& x : v_) x = std::min(hi, std::max(lo, x));
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(h_, w_, c_);
    for (size_t i = 0; i < v_.size(); ++i) out.data()[i] = static_cast<U>(v_[i]);
    return out;
  }

 private:
  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<T> v_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Reflectance (H x W x 3) plus illumination (H x W x 1), both in [0, 1].
template <typename T>
struct DecompositionT {
  Tensor<T> reflectance;
  Tensor<T> illumination;
};

using Decomposition = DecompositionT<float>;

}  // namespace mer
