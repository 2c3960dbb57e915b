// AVX2+FMA convolution kernels, same structure as the AVX-512 set with 8-lane
// vectors and scalar channel tails (no mask registers).

#include <immintrin.h>

#include <vector>

#include "mer/kernels.hpp"

namespace mer::kernels {
namespace {

constexpr int kLanes = 8;

template <int MR, int OCT>
inline void fwd_tile(const float* in, const float* w, const float* bias, const ConvShape& s,
                     bool relu, float* out, int oy, int ox, int oc0) {
  __m256 acc[MR][OCT];
  for (int m = 0; m < MR; ++m)
    for (int j = 0; j < OCT; ++j) acc[m][j] = _mm256_loadu_ps(bias + oc0 + kLanes * j);
  const int st = s.stride;
  for (int ky = 0; ky < s.k; ++ky) {
    for (int kx = 0; kx < s.k; ++kx) {
      const float* ibase =
          in + (static_cast<size_t>(oy * st + ky) * s.pw + static_cast<size_t>(ox) * st + kx) * s.ic;
      const float* wrow = w + static_cast<size_t>(ky * s.k + kx) * s.ic * s.oc + oc0;
      for (int i = 0; i < s.ic; ++i) {
        __m256 wv[OCT];
        for (int j = 0; j < OCT; ++j) wv[j] = _mm256_loadu_ps(wrow + static_cast<size_t>(i) * s.oc + kLanes * j);
        for (int m = 0; m < MR; ++m) {
          __m256 b = _mm256_set1_ps(ibase[static_cast<size_t>(m) * st * s.ic + i]);
          for (int j = 0; j < OCT; ++j) acc[m][j] = _mm256_fmadd_ps(b, wv[j], acc[m][j]);
        }
      }
    }
  }
  const __m256 zero = _mm256_setzero_ps();
  for (int m = 0; m < MR; ++m) {
    float* o = out + (static_cast<size_t>(oy) * s.ow + ox + m) * s.oc + oc0;
    for (int j = 0; j < OCT; ++j) {
      __m256 v = acc[m][j];
      if (relu) v = _mm256_max_ps(v, zero);
      _mm256_storeu_ps(o + kLanes * j, v);
    }
  }
}

// Scalar fallback for the trailing oc % 8 channels.
inline void fwd_scalar_tail(const float* in, const float* w, const float* bias, const ConvShape& s,
                            bool relu, float* out, int oy, int ox, int mr, int oc0) {
  const int st = s.stride;
  for (int m = 0; m < mr; ++m) {
    float* o = out + (static_cast<size_t>(oy) * s.ow + ox + m) * s.oc;
    for (int c = oc0; c < s.oc; ++c) o[c] = bias[c];
    for (int ky = 0; ky < s.k; ++ky)
      for (int kx = 0; kx < s.k; ++kx) {
        const float* irow = in + (static_cast<size_t>(oy * st + ky) * s.pw +
                                  static_cast<size_t>(ox + m) * st + kx) * s.ic;
        const float* wrow = w + static_cast<size_t>(ky * s.k + kx) * s.ic * s.oc;
        for (int i = 0; i < s.ic; ++i) {
          float v = irow[i];
          const float* wr = wrow + static_cast<size_t>(i) * s.oc;
          for (int c = oc0; c < s.oc; ++c) o[c] += v * wr[c];
        }
      }
    if (relu)
      for (int c = oc0; c < s.oc; ++c) o[c] = std::max(0.0f, o[c]);
  }
}

template <int MR>
inline void fwd_cols(const float* in, const float* w, const float* bias, const ConvShape& s,
                     bool relu, float* out, int oy, int ox) {
  int oc0 = 0;
  for (; oc0 + 2 * kLanes <= s.oc; oc0 += 2 * kLanes)
    fwd_tile<MR, 2>(in, w, bias, s, relu, out, oy, ox, oc0);
  if (oc0 + kLanes <= s.oc) {
    fwd_tile<MR, 1>(in, w, bias, s, relu, out, oy, ox, oc0);
    oc0 += kLanes;
  }
  if (oc0 < s.oc) fwd_scalar_tail(in, w, bias, s, relu, out, oy, ox, MR, oc0);
}

void fwd(const float* in, const float* w, const float* bias, const ConvShape& s, bool relu,
         float* out) {
  for (int oy = 0; oy < s.oh; ++oy) {
    int ox = 0;
    for (; ox + 4 <= s.ow; ox += 4) fwd_cols<4>(in, w, bias, s, relu, out, oy, ox);
    switch (s.ow - ox) {
      case 3: fwd_cols<3>(in, w, bias, s, relu, out, oy, ox); break;
      case 2: fwd_cols<2>(in, w, bias, s, relu, out, oy, ox); break;
      case 1: fwd_cols<1>(in, w, bias, s, relu, out, oy, ox); break;
      default: break;
    }
  }
}

thread_local std::vector<float> g_wt;

void transpose_weights(const float* w, const ConvShape& s) {
  g_wt.resize(static_cast<size_t>(s.k) * s.k * s.ic * s.oc);
  for (int t = 0; t < s.k * s.k; ++t) {
    const float* src = w + static_cast<size_t>(t) * s.ic * s.oc;
    float* dst = g_wt.data() + static_cast<size_t>(t) * s.ic * s.oc;
    for (int i = 0; i < s.ic; ++i)
      for (int c = 0; c < s.oc; ++c) dst[static_cast<size_t>(c) * s.ic + i] = src[static_cast<size_t>(i) * s.oc + c];
  }
}

template <int ICT>
inline void bwd_in_tile(const float* dy, const float* wt, int ic, int oc, float* dr, int i0) {
  __m256 acc[ICT];
  for (int j = 0; j < ICT; ++j) acc[j] = _mm256_setzero_ps();
  for (int c = 0; c < oc; ++c) {
    __m256 b = _mm256_set1_ps(dy[c]);
    const float* wrow = wt + static_cast<size_t>(c) * ic + i0;
    for (int j = 0; j < ICT; ++j) acc[j] = _mm256_fmadd_ps(b, _mm256_loadu_ps(wrow + kLanes * j), acc[j]);
  }
  for (int j = 0; j < ICT; ++j) {
    float* d = dr + i0 + kLanes * j;
    _mm256_storeu_ps(d, _mm256_add_ps(_mm256_loadu_ps(d), acc[j]));
  }
}

void bwd_in(const float* dout, const float* w, const ConvShape& s, float* din) {
  transpose_weights(w, s);
  const int st = s.stride;
  for (int oy = 0; oy < s.oh; ++oy) {
    for (int ox = 0; ox < s.ow; ++ox) {
      const float* dy = dout + (static_cast<size_t>(oy) * s.ow + ox) * s.oc;
      for (int ky = 0; ky < s.k; ++ky) {
        for (int kx = 0; kx < s.k; ++kx) {
          float* dr = din + (static_cast<size_t>(oy * st + ky) * s.pw +
                             static_cast<size_t>(ox) * st + kx) * s.ic;
          const float* wt = g_wt.data() + static_cast<size_t>(ky * s.k + kx) * s.ic * s.oc;
          int i0 = 0;
          for (; i0 + 4 * kLanes <= s.ic; i0 += 4 * kLanes) bwd_in_tile<4>(dy, wt, s.ic, s.oc, dr, i0);
          for (; i0 + kLanes <= s.ic; i0 += kLanes) bwd_in_tile<1>(dy, wt, s.ic, s.oc, dr, i0);
          for (; i0 < s.ic; ++i0) {
            float acc = 0.0f;
            const float* wrow = wt + i0;
            for (int c = 0; c < s.oc; ++c) acc += dy[c] * wrow[static_cast<size_t>(c) * s.ic];
            dr[i0] += acc;
          }
        }
      }
    }
  }
}

template <int OCT>
inline void bwd_w_row(const float* in, const float* dout, const ConvShape& s, float* dw, int ky,
                      int kx, int oy, int i0, int dmax, int oc0) {
  __m256 acc[4][OCT];
  for (int d = 0; d < dmax; ++d)
    for (int j = 0; j < OCT; ++j) acc[d][j] = _mm256_setzero_ps();
  const int st = s.stride;
  const float* irow = in + (static_cast<size_t>(oy * st + ky) * s.pw + kx) * s.ic + i0;
  const float* dyrow = dout + static_cast<size_t>(oy) * s.ow * s.oc + oc0;
  for (int ox = 0; ox < s.ow; ++ox) {
    __m256 dyv[OCT];
    for (int j = 0; j < OCT; ++j) dyv[j] = _mm256_loadu_ps(dyrow + static_cast<size_t>(ox) * s.oc + kLanes * j);
    const float* iv = irow + static_cast<size_t>(ox) * st * s.ic;
    for (int d = 0; d < dmax; ++d) {
      __m256 b = _mm256_set1_ps(iv[d]);
      for (int j = 0; j < OCT; ++j) acc[d][j] = _mm256_fmadd_ps(b, dyv[j], acc[d][j]);
    }
  }
  for (int d = 0; d < dmax; ++d) {
    float* wrow = dw + (static_cast<size_t>(ky * s.k + kx) * s.ic + i0 + d) * s.oc + oc0;
    for (int j = 0; j < OCT; ++j) {
      float* p = wrow + kLanes * j;
      _mm256_storeu_ps(p, _mm256_add_ps(_mm256_loadu_ps(p), acc[d][j]));
    }
  }
}

inline void bwd_w_scalar_tail(const float* in, const float* dout, const ConvShape& s, float* dw,
                              int ky, int kx, int oy, int i0, int dmax, int oc0) {
  const int st = s.stride;
  for (int d = 0; d < dmax; ++d) {
    const float* irow = in + (static_cast<size_t>(oy * st + ky) * s.pw + kx) * s.ic + i0 + d;
    float* wrow = dw + (static_cast<size_t>(ky * s.k + kx) * s.ic + i0 + d) * s.oc;
    for (int ox = 0; ox < s.ow; ++ox) {
      float v = irow[static_cast<size_t>(ox) * st * s.ic];
      const float* dy = dout + (static_cast<size_t>(oy) * s.ow + ox) * s.oc;
      for (int c = oc0; c < s.oc; ++c) wrow[c] += v * dy[c];
    }
  }
}

void bwd_w(const float* in, const float* dout, const ConvShape& s, float* dw, float* db) {
  for (int oy = 0; oy < s.oh; ++oy) {
    const float* dyrow = dout + static_cast<size_t>(oy) * s.ow * s.oc;
    for (int ox = 0; ox < s.ow; ++ox) {
      const float* dy = dyrow + static_cast<size_t>(ox) * s.oc;
      int c = 0;
      for (; c + kLanes <= s.oc; c += kLanes)
        _mm256_storeu_ps(db + c, _mm256_add_ps(_mm256_loadu_ps(db + c), _mm256_loadu_ps(dy + c)));
      for (; c < s.oc; ++c) db[c] += dy[c];
    }
  }
  for (int ky = 0; ky < s.k; ++ky) {
    for (int kx = 0; kx < s.k; ++kx) {
      for (int oy = 0; oy < s.oh; ++oy) {
        for (int i0 = 0; i0 < s.ic; i0 += 4) {
          int dmax = std::min(4, s.ic - i0);
          int oc0 = 0;
          for (; oc0 + 4 * kLanes <= s.oc; oc0 += 4 * kLanes)
            bwd_w_row<4>(in, dout, s, dw, ky, kx, oy, i0, dmax, oc0);
          for (; oc0 + kLanes <= s.oc; oc0 += kLanes)
            bwd_w_row<1>(in, dout, s, dw, ky, kx, oy, i0, dmax, oc0);
          if (oc0 < s.oc) bwd_w_scalar_tail(in, dout, s, dw, ky, kx, oy, i0, dmax, oc0);
        }
      }
    }
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{fwd, bwd_in, bwd_w, "avx2"};
  return t;
}

}  // namespace mer::kernels
