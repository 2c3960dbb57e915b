#pragma once

#include <array>
#include <cmath>

#include "mer/tensor.hpp"

namespace mer {

// Forward-difference gradients with replicate padding: the difference at the
// trailing row/column is exactly zero, so shapes match the input.
template <typename T>
struct GradientPairT {
  Tensor<T> horizontal;
  Tensor<T> vertical;
};

using GradientPair = GradientPairT<float>;

template <typename T>
GradientPairT<T> grad(const Tensor<T>& img) {
  const int h = img.height(), w = img.width(), c = img.channels();
  GradientPairT<T> g{Tensor<T>(h, w, c), Tensor<T>(h, w, c)};
  for (int y = 0; y < h; ++y) {
    const T* row = img.row(y);
    const T* below = img.row(y + 1 < h ? y + 1 : y);
    T* gh = g.horizontal.row(y);
    T* gv = g.vertical.row(y);
    for (int x = 0; x < w; ++x) {
      int xr = x + 1 < w ? x + 1 : x;
      for (int ch = 0; ch < c; ++ch) {
        gh[x * c + ch] = row[xr * c + ch] - row[x * c + ch];
        gv[x * c + ch] = below[x * c + ch] - row[x * c + ch];
      }
    }
  }
  return g;
}

// Mean over all pixels/channels of |horizontal| + |vertical|.
template <typename T>
T tv_l1(const Tensor<T>& img) {
  GradientPairT<T> g = grad(img);
  double acc = 0.0;
  const T* gh = g.horizontal.data();
  const T* gv = g.vertical.data();
  for (size_t i = 0; i < img.size(); ++i) acc += std::abs(double(gh[i])) + std::abs(double(gv[i]));
  return T(acc / double(img.size()));
}

// Histogram equalization over 256 bins with the usual cdf_min normalization.
// A single-occupied-bin (constant) image maps to all zeros. The mapping is a
// fixed monotone lookup; nothing differentiates through it.
template <typename T>
std::array<T, 256> hist_equalize_lut(const Tensor<T>& channel) {
  require(!channel.empty(), "hist_equalize: empty image");
  require(channel.channels() == 1, "hist_equalize: expects a single channel");
  std::array<int64_t, 256> hist{};
  const T* p = channel.data();
  const size_t n = channel.size();
  for (size_t i = 0; i < n; ++i) {
    int b = static_cast<int>(std::lround(double(p[i]) * 255.0));
    b = std::min(255, std::max(0, b));
    ++hist[b];
  }
  std::array<T, 256> lut{};
  int64_t cdf = 0, cdf_min = 0;
  for (int b = 0; b < 256; ++b) {
    if (hist[b] != 0) {
      cdf_min = hist[b];
      break;
    }
  }
  const int64_t denom = static_cast<int64_t>(n) - cdf_min;
  for (int b = 0; b < 256; ++b) {
    cdf += hist[b];
    lut[b] = denom > 0 ? T(double(cdf - cdf_min) / double(denom)) : T(0);
    if (lut[b] < T(0)) lut[b] = T(0);
  }
  return lut;
}

template <typename T>
Tensor<T> hist_equalize(const Tensor<T>& channel) {
  std::array<T, 256> lut = hist_equalize_lut(channel);
  Tensor<T> out(channel.height(), channel.width(), 1);
  const T* p = channel.data();
  T* q = out.data();
  for (size_t i = 0; i < channel.size(); ++i) {
    int b = static_cast<int>(std::lround(double(p[i]) * 255.0));
    q[i] = lut[std::min(255, std::max(0, b))];
  }
  return out;
}

// Edge-stopping weight for the illumination smoothness term: per direction,
// collapse the RGB gradient to mean |.| and map through exp(-lambda3 * x).
// Output is single-channel per direction.
template <typename T>
GradientPairT<T> structure_weight(const GradientPairT<T>& reflectance_grad, T lambda3) {
  const Tensor<T>& gh = reflectance_grad.horizontal;
  require(gh.channels() == 3, "structure_weight: expects 3-channel gradients");
  const int h = gh.height(), w = gh.width();
  GradientPairT<T> out{Tensor<T>(h, w, 1), Tensor<T>(h, w, 1)};
  const Tensor<T>* src[2] = {&reflectance_grad.horizontal, &reflectance_grad.vertical};
  Tensor<T>* dst[2] = {&out.horizontal, &out.vertical};
  for (int d = 0; d < 2; ++d) {
    const T* g = src[d]->data();
    T* o = dst[d]->data();
    const size_t n = dst[d]->size();
    for (size_t i = 0; i < n; ++i) {
      T collapsed = (std::abs(g[3 * i]) + std::abs(g[3 * i + 1]) + std::abs(g[3 * i + 2])) / T(3);
      o[i] = std::exp(-lambda3 * collapsed);
    }
  }
  return out;
}

}  // namespace mer
