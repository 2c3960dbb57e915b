#pragma once

#include <string>

#include "mer/tensor.hpp"

namespace mer::kernels {

// All convolutions are "valid" over an input the caller has already padded:
// ph == (oh-1)*stride + k and pw == (ow-1)*stride + k. Tensors are channels-last,
// weights are HWIO: w[((ky*k + kx)*ic + i)*oc + o], one bias per output channel.
struct ConvShape {
  int ph, pw, ic;  // padded input
  int oh, ow, oc;  // output
  int k, stride;
};

// One implementation family. The scalar table is the portable reference; the
// AVX2/AVX-512 tables must agree with it to floating-point reassociation error
// (covered by the equivalence tests).
struct KernelTable {
  void (*conv_fwd)(const float* in, const float* w, const float* bias, const ConvShape& s,
                   bool relu, float* out);
  // accumulates the adjoint into din (caller zero-fills)
  void (*conv_bwd_input)(const float* dout, const float* w, const ConvShape& s, float* din);
  // accumulates into dw and db
  void (*conv_bwd_weights)(const float* in, const float* dout, const ConvShape& s, float* dw,
                           float* db);
  const char* name;
};

enum class Variant { scalar, avx2, avx512 };

bool variant_available(Variant v);
const KernelTable& table(Variant v);

// Best available variant, chosen once per process. MER_KERNELS=scalar|avx2|avx512
// overrides the choice (used by the equivalence and determinism tests).
const KernelTable& active();
std::string active_name();

// Double-precision reference path for finite-difference checks.
void conv_fwd_f64(const double* in, const double* w, const double* bias, const ConvShape& s,
                  bool relu, double* out);
void conv_bwd_input_f64(const double* dout, const double* w, const ConvShape& s, double* din);
void conv_bwd_weights_f64(const double* in, const double* dout, const ConvShape& s, double* dw,
                          double* db);

// Replicate-pad by p pixels on every side. `out` is resized as needed.
template <typename T>
void pad_replicate(const Tensor<T>& in, int p, Tensor<T>& out) {
  const int h = in.height(), w = in.width(), c = in.channels();
  if (out.height() != h + 2 * p || out.width() != w + 2 * p || out.channels() != c)
    out = Tensor<T>(h + 2 * p, w + 2 * p, c);
  for (int y = 0; y < h + 2 * p; ++y) {
    int sy = std::min(h - 1, std::max(0, y - p));
    const T* src = in.row(sy);
    T* dst = out.row(y);
    for (int x = 0; x < p; ++x)
      for (int ch = 0; ch < c; ++ch) dst[x * c + ch] = src[ch];
    std::copy(src, src + static_cast<size_t>(w) * c, dst + static_cast<size_t>(p) * c);
    const T* last = src + static_cast<size_t>(w - 1) * c;
    for (int x = w + p; x < w + 2 * p; ++x)
      for (int ch = 0; ch < c; ++ch) dst[x * c + ch] = last[ch];
  }
}

// Adjoint of pad_replicate: border gradients fold back onto the edge pixels.
template <typename T>
void pad_replicate_backward(const Tensor<T>& dpad, int p, Tensor<T>& din) {
  const int h = dpad.height() - 2 * p, w = dpad.width() - 2 * p, c = dpad.channels();
  if (din.height() != h || din.width() != w || din.channels() != c) din = Tensor<T>(h, w, c);
  din.fill(T(0));
  for (int y = 0; y < h + 2 * p; ++y) {
    int sy = std::min(h - 1, std::max(0, y - p));
    const T* src = dpad.row(y);
    T* dst = din.row(sy);
    for (int x = 0; x < w + 2 * p; ++x) {
      int sx = std::min(w - 1, std::max(0, x - p));
      for (int ch = 0; ch < c; ++ch) dst[sx * c + ch] += src[x * c + ch];
    }
  }
}

}  // namespace mer::kernels
