#pragma once

// Reference convolution kernels. Written for clarity, not speed: the SIMD
// variants are validated against these, and the double instantiation backs the
// finite-difference gradient checks.

#include <algorithm>

#include "mer/kernels.hpp"

namespace mer::kernels::ref {

template <typename T>
void conv_fwd(const T* in, const T* w, const T* bias, const ConvShape& s, bool relu, T* out) {
  for (int oy = 0; oy < s.oh; ++oy) {
    for (int ox = 0; ox < s.ow; ++ox) {
      T* o = out + (static_cast<size_t>(oy) * s.ow + ox) * s.oc;
      for (int c = 0; c < s.oc; ++c) o[c] = bias[c];
      for (int ky = 0; ky < s.k; ++ky) {
        for (int kx = 0; kx < s.k; ++kx) {
          const T* irow =
              in + (static_cast<size_t>(oy * s.stride + ky) * s.pw + ox * s.stride + kx) * s.ic;
          const T* wrow = w + static_cast<size_t>((ky * s.k + kx)) * s.ic * s.oc;
          for (int i = 0; i < s.ic; ++i) {
            T v = irow[i];
            const T* wr = wrow + static_cast<size_t>(i) * s.oc;
            for (int c = 0; c < s.oc; ++c) o[c] += v * wr[c];
          }
        }
      }
      if (relu)
        for (int c = 0; c < s.oc; ++c) o[c] = std::max(T(0), o[c]);
    }
  }
}

template <typename T>
void conv_bwd_input(const T* dout, const T* w, const ConvShape& s, T* din) {
  for (int oy = 0; oy < s.oh; ++oy) {
    for (int ox = 0; ox < s.ow; ++ox) {
      const T* dy = dout + (static_cast<size_t>(oy) * s.ow + ox) * s.oc;
      for (int ky = 0; ky < s.k; ++ky) {
        for (int kx = 0; kx < s.k; ++kx) {
          T* drow =
              din + (static_cast<size_t>(oy * s.stride + ky) * s.pw + ox * s.stride + kx) * s.ic;
          const T* wrow = w + static_cast<size_t>((ky * s.k + kx)) * s.ic * s.oc;
          for (int i = 0; i < s.ic; ++i) {
            const T* wr = wrow + static_cast<size_t>(i) * s.oc;
            T acc = 0;
            for (int c = 0; c < s.oc; ++c) acc += dy[c] * wr[c];
            drow[i] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
void conv_bwd_weights(const T* in, const T* dout, const ConvShape& s, T* dw, T* db) {
  for (int oy = 0; oy < s.oh; ++oy) {
    for (int ox = 0; ox < s.ow; ++ox) {
      const T* dy = dout + (static_cast<size_t>(oy) * s.ow + ox) * s.oc;
      for (int c = 0; c < s.oc; ++c) db[c] += dy[c];
      for (int ky = 0; ky < s.k; ++ky) {
        for (int kx = 0; kx < s.k; ++kx) {
          const T* irow =
              in + (static_cast<size_t>(oy * s.stride + ky) * s.pw + ox * s.stride + kx) * s.ic;
          T* wrow = dw + static_cast<size_t>((ky * s.k + kx)) * s.ic * s.oc;
          for (int i = 0; i < s.ic; ++i) {
            T v = irow[i];
            T* wr = wrow + static_cast<size_t>(i) * s.oc;
            for (int c = 0; c < s.oc; ++c) wr[c] += v * dy[c];
          }
        }
      }
    }
  }
}

}  // namespace mer::kernels::ref
