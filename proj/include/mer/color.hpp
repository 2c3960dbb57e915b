#pragma once

#include "mer/tensor.hpp"

namespace mer {

// Per-pixel maximum over the RGB channels.
template <typename T>
Tensor<T> max_channel(const Tensor<T>& img) {
  require(img.channels() == 3, "max_channel: input must have 3 channels");
  Tensor<T> out(img.height(), img.width(), 1);
  const T* src = img.data();
  T* dst = out.data();
  size_t n = out.size();
  for (size_t i = 0; i < n; ++i) {
    const T* p = src + 3 * i;
    dst[i] = std::max(p[0], std::max(p[1], p[2]));
  }
  return out;
}

// BT.601 luma. Clamped to [0,1] so rounding never pushes a valid image out of range.
template <typename T>
Tensor<T> to_gray(const Tensor<T>& img) {
  require(img.channels() == 3, "to_gray: input must have 3 channels");
  Tensor<T> out(img.height(), img.width(), 1);
  const T* src = img.data();
  T* dst = out.data();
  size_t n = out.size();
  for (size_t i = 0; i < n; ++i) {
    const T* p = src + 3 * i;
    T v = T(0.299) * p[0] + T(0.587) * p[1] + T(0.114) * p[2];
    dst[i] = std::min(T(1), std::max(T(0), v));
  }
  return out;
}

}  // namespace mer
