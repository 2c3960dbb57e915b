// AVX-512 convolution kernels. Compiled with -mavx512f -mavx512bw; only invoked
// when the dispatcher has verified CPU support.
//
// Layout contract matches the reference kernels: NHWC activations, HWIO weights.
// Hot tiles keep their accumulators in individually named variables: GCC will
// not scalarize a __m512 array of this size, and a spilled accumulator tile is
// a several-fold slowdown. Edge/tail tiles use small generic templates.

#include <immintrin.h>

#include <vector>

#include "mer/kernels.hpp"

namespace mer::kernels {
namespace {

constexpr int kLanes = 16;

// ---- forward ---------------------------------------------------------------

// 8 output pixels x 32 output channels
void fwd_tile_8x32(const float* in, const float* w, const float* bias, const ConvShape& s,
                   bool relu, float* out, int oy, int ox, int oc0) {
  const int st = s.stride, ic = s.ic, oc = s.oc;
  const size_t stic = static_cast<size_t>(st) * ic;
  const __m512 bv0 = _mm512_loadu_ps(bias + oc0);
  const __m512 bv1 = _mm512_loadu_ps(bias + oc0 + kLanes);
  __m512 a00 = bv0, a01 = bv1, a10 = bv0, a11 = bv1, a20 = bv0, a21 = bv1, a30 = bv0, a31 = bv1;
  __m512 a40 = bv0, a41 = bv1, a50 = bv0, a51 = bv1, a60 = bv0, a61 = bv1, a70 = bv0, a71 = bv1;

  for (int ky = 0; ky < s.k; ++ky) {
    for (int kx = 0; kx < s.k; ++kx) {
      const float* ib =
          in + (static_cast<size_t>(oy * st + ky) * s.pw + static_cast<size_t>(ox) * st + kx) * ic;
      const float* wr = w + static_cast<size_t>(ky * s.k + kx) * ic * oc + oc0;
      for (int i = 0; i < ic; ++i, wr += oc) {
        const __m512 w0 = _mm512_loadu_ps(wr);
        const __m512 w1 = _mm512_loadu_ps(wr + kLanes);
        __m512 t;
        t = _mm512_set1_ps(ib[i]);
        a00 = _mm512_fmadd_ps(t, w0, a00);
        a01 = _mm512_fmadd_ps(t, w1, a01);
        t = _mm512_set1_ps(ib[stic + i]);
        a10 = _mm512_fmadd_ps(t, w0, a10);
        a11 = _mm512_fmadd_ps(t, w1, a11);
        t = _mm512_set1_ps(ib[2 * stic + i]);
        a20 = _mm512_fmadd_ps(t, w0, a20);
        a21 = _mm512_fmadd_ps(t, w1, a21);
        t = _mm512_set1_ps(ib[3 * stic + i]);
        a30 = _mm512_fmadd_ps(t, w0, a30);
        a31 = _mm512_fmadd_ps(t, w1, a31);
        t = _mm512_set1_ps(ib[4 * stic + i]);
        a40 = _mm512_fmadd_ps(t, w0, a40);
        a41 = _mm512_fmadd_ps(t, w1, a41);
        t = _mm512_set1_ps(ib[5 * stic + i]);
        a50 = _mm512_fmadd_ps(t, w0, a50);
        a51 = _mm512_fmadd_ps(t, w1, a51);
        t = _mm512_set1_ps(ib[6 * stic + i]);
        a60 = _mm512_fmadd_ps(t, w0, a60);
        a61 = _mm512_fmadd_ps(t, w1, a61);
        t = _mm512_set1_ps(ib[7 * stic + i]);
        a70 = _mm512_fmadd_ps(t, w0, a70);
        a71 = _mm512_fmadd_ps(t, w1, a71);
      }
    }
  }
  const __m512 zero = _mm512_setzero_ps();
  float* o = out + (static_cast<size_t>(oy) * s.ow + ox) * oc + oc0;
  auto emit = [&](__m512 v0, __m512 v1) {
    if (relu) {
      v0 = _mm512_max_ps(v0, zero);
      v1 = _mm512_max_ps(v1, zero);
    }
    _mm512_storeu_ps(o, v0);
    _mm512_storeu_ps(o + kLanes, v1);
    o += oc;
  };
  emit(a00, a01);
  emit(a10, a11);
  emit(a20, a21);
  emit(a30, a31);
  emit(a40, a41);
  emit(a50, a51);
  emit(a60, a61);
  emit(a70, a71);
}

// generic edge tile: MR in [1,8), one (possibly masked) 16-channel slab
template <int MR>
void fwd_tile_small(const float* in, const float* w, const float* bias, const ConvShape& s,
                    bool relu, float* out, int oy, int ox, int oc0, __mmask16 mask) {
  const int st = s.stride, ic = s.ic, oc = s.oc;
  const size_t stic = static_cast<size_t>(st) * ic;
  const __m512 bv = _mm512_maskz_loadu_ps(mask, bias + oc0);
  __m512 a0 = bv, a1 = bv, a2 = bv, a3 = bv, a4 = bv, a5 = bv, a6 = bv;
  for (int ky = 0; ky < s.k; ++ky) {
    for (int kx = 0; kx < s.k; ++kx) {
      const float* ib =
          in + (static_cast<size_t>(oy * st + ky) * s.pw + static_cast<size_t>(ox) * st + kx) * ic;
      const float* wr = w + static_cast<size_t>(ky * s.k + kx) * ic * oc + oc0;
      for (int i = 0; i < ic; ++i, wr += oc) {
        const __m512 wv = _mm512_maskz_loadu_ps(mask, wr);
        a0 = _mm512_fmadd_ps(_mm512_set1_ps(ib[i]), wv, a0);
        if (MR > 1) a1 = _mm512_fmadd_ps(_mm512_set1_ps(ib[stic + i]), wv, a1);
        if (MR > 2) a2 = _mm512_fmadd_ps(_mm512_set1_ps(ib[2 * stic + i]), wv, a2);
        if (MR > 3) a3 = _mm512_fmadd_ps(_mm512_set1_ps(ib[3 * stic + i]), wv, a3);
        if (MR > 4) a4 = _mm512_fmadd_ps(_mm512_set1_ps(ib[4 * stic + i]), wv, a4);
        if (MR > 5) a5 = _mm512_fmadd_ps(_mm512_set1_ps(ib[5 * stic + i]), wv, a5);
        if (MR > 6) a6 = _mm512_fmadd_ps(_mm512_set1_ps(ib[6 * stic + i]), wv, a6);
      }
    }
  }
  const __m512 zero = _mm512_setzero_ps();
  float* o = out + (static_cast<size_t>(oy) * s.ow + ox) * oc + oc0;
  auto emit = [&](__m512 v) {
    if (relu) v = _mm512_max_ps(v, zero);
    _mm512_mask_storeu_ps(o, mask, v);
    o += oc;
  };
  emit(a0);
  if (MR > 1) emit(a1);
  if (MR > 2) emit(a2);
  if (MR > 3) emit(a3);
  if (MR > 4) emit(a4);
  if (MR > 5) emit(a5);
  if (MR > 6) emit(a6);
}

void fwd_cols_small(const float* in, const float* w, const float* bias, const ConvShape& s,
                    bool relu, float* out, int oy, int ox, int mr) {
  for (int oc0 = 0; oc0 < s.oc; oc0 += kLanes) {
    int rem = s.oc - oc0;
    __mmask16 mask = rem >= kLanes ? static_cast<__mmask16>(0xffff)
                                   : static_cast<__mmask16>((1u << rem) - 1);
    switch (mr) {
      case 1: fwd_tile_small<1>(in, w, bias, s, relu, out, oy, ox, oc0, mask); break;
      case 2: fwd_tile_small<2>(in, w, bias, s, relu, out, oy, ox, oc0, mask); break;
      case 3: fwd_tile_small<3>(in, w, bias, s, relu, out, oy, ox, oc0, mask); break;
      case 4: fwd_tile_small<4>(in, w, bias, s, relu, out, oy, ox, oc0, mask); break;
      case 5: fwd_tile_small<5>(in, w, bias, s, relu, out, oy, ox, oc0, mask); break;
      case 6: fwd_tile_small<6>(in, w, bias, s, relu, out, oy, ox, oc0, mask); break;
      default: fwd_tile_small<7>(in, w, bias, s, relu, out, oy, ox, oc0, mask); break;
    }
  }
}

void fwd(const float* in, const float* w, const float* bias, const ConvShape& s, bool relu,
         float* out) {
  const int full_slabs = s.oc / (2 * kLanes);
  for (int oy = 0; oy < s.oh; ++oy) {
    int ox = 0;
    for (; ox + 8 <= s.ow; ox += 8) {
      int oc0 = 0;
      for (int sl = 0; sl < full_slabs; ++sl, oc0 += 2 * kLanes)
        fwd_tile_8x32(in, w, bias, s, relu, out, oy, ox, oc0);
      if (oc0 < s.oc) {
        for (int m = 0; m < 8; m += 4) fwd_cols_small(in, w, bias, s, relu, out, oy, ox + m, 4);
      }
    }
    if (ox < s.ow) fwd_cols_small(in, w, bias, s, relu, out, oy, ox, s.ow - ox);
  }
}

// ---- backward: input gradient ----------------------------------------------
//
// The adjoint of a strided valid convolution is itself a stride-1 valid
// convolution of the zero-dilated output gradient with the spatially flipped,
// channel-transposed weights. Routing it through the forward microkernel keeps
// it on the fast path.

thread_local std::vector<float> g_wf, g_dilated, g_tmp, g_zbias;

void flip_transpose_weights(const float* w, const ConvShape& s) {
  g_wf.resize(static_cast<size_t>(s.k) * s.k * s.ic * s.oc);
  for (int ky = 0; ky < s.k; ++ky)
    for (int kx = 0; kx < s.k; ++kx) {
      const float* src = w + static_cast<size_t>((s.k - 1 - ky) * s.k + (s.k - 1 - kx)) * s.ic * s.oc;
      float* dst = g_wf.data() + static_cast<size_t>(ky * s.k + kx) * s.ic * s.oc;
      for (int i = 0; i < s.ic; ++i)
        for (int c = 0; c < s.oc; ++c)
          dst[static_cast<size_t>(c) * s.ic + i] = src[static_cast<size_t>(i) * s.oc + c];
    }
}

void bwd_in(const float* dout, const float* w, const ConvShape& s, float* din) {
  flip_transpose_weights(w, s);
  const int zh = s.ph + s.k - 1, zw = s.pw + s.k - 1;
  g_dilated.assign(static_cast<size_t>(zh) * zw * s.oc, 0.0f);
  const int lead = s.k - 1;
  if (s.stride == 1) {
    for (int oy = 0; oy < s.oh; ++oy)
      std::copy(dout + static_cast<size_t>(oy) * s.ow * s.oc,
                dout + static_cast<size_t>(oy + 1) * s.ow * s.oc,
                g_dilated.data() + (static_cast<size_t>(oy + lead) * zw + lead) * s.oc);
  } else {
    for (int oy = 0; oy < s.oh; ++oy)
      for (int ox = 0; ox < s.ow; ++ox)
        std::copy(dout + (static_cast<size_t>(oy) * s.ow + ox) * s.oc,
                  dout + (static_cast<size_t>(oy) * s.ow + ox + 1) * s.oc,
                  g_dilated.data() +
                      (static_cast<size_t>(s.stride * oy + lead) * zw + s.stride * ox + lead) * s.oc);
  }
  g_tmp.resize(static_cast<size_t>(s.ph) * s.pw * s.ic);
  g_zbias.assign(s.ic, 0.0f);
  ConvShape adj{zh, zw, s.oc, s.ph, s.pw, s.ic, s.k, 1};
  fwd(g_dilated.data(), g_wf.data(), g_zbias.data(), adj, false, g_tmp.data());
  const size_t n = g_tmp.size();
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm512_storeu_ps(din + i, _mm512_add_ps(_mm512_loadu_ps(din + i), _mm512_loadu_ps(&g_tmp[i])));
  for (; i < n; ++i) din[i] += g_tmp[i];
}

// ---- backward: weight gradient -----------------------------------------------

// 4 input channels x 64 output channels accumulated along one output row;
// dw is touched once per row
void bwd_w_row_4x64(const float* in, const float* dout, const ConvShape& s, float* dw, int ky,
                    int kx, int oy, int i0, int oc0) {
  const int st = s.stride, ic = s.ic, oc = s.oc;
  __m512 a00 = _mm512_setzero_ps(), a01 = a00, a02 = a00, a03 = a00;
  __m512 a10 = a00, a11 = a00, a12 = a00, a13 = a00;
  __m512 a20 = a00, a21 = a00, a22 = a00, a23 = a00;
  __m512 a30 = a00, a31 = a00, a32 = a00, a33 = a00;
  const float* irow = in + (static_cast<size_t>(oy * st + ky) * s.pw + kx) * ic + i0;
  const float* dyrow = dout + static_cast<size_t>(oy) * s.ow * oc + oc0;
  const size_t stic = static_cast<size_t>(st) * ic;
  for (int ox = 0; ox < s.ow; ++ox) {
    const float* dy = dyrow + static_cast<size_t>(ox) * oc;
    const __m512 d0 = _mm512_loadu_ps(dy);
    const __m512 d1 = _mm512_loadu_ps(dy + kLanes);
    const __m512 d2 = _mm512_loadu_ps(dy + 2 * kLanes);
    const __m512 d3 = _mm512_loadu_ps(dy + 3 * kLanes);
    const float* iv = irow + static_cast<size_t>(ox) * stic;
    __m512 t;
    t = _mm512_set1_ps(iv[0]);
    a00 = _mm512_fmadd_ps(t, d0, a00);
    a01 = _mm512_fmadd_ps(t, d1, a01);
    a02 = _mm512_fmadd_ps(t, d2, a02);
    a03 = _mm512_fmadd_ps(t, d3, a03);
    t = _mm512_set1_ps(iv[1]);
    a10 = _mm512_fmadd_ps(t, d0, a10);
    a11 = _mm512_fmadd_ps(t, d1, a11);
    a12 = _mm512_fmadd_ps(t, d2, a12);
    a13 = _mm512_fmadd_ps(t, d3, a13);
    t = _mm512_set1_ps(iv[2]);
    a20 = _mm512_fmadd_ps(t, d0, a20);
    a21 = _mm512_fmadd_ps(t, d1, a21);
    a22 = _mm512_fmadd_ps(t, d2, a22);
    a23 = _mm512_fmadd_ps(t, d3, a23);
    t = _mm512_set1_ps(iv[3]);
    a30 = _mm512_fmadd_ps(t, d0, a30);
    a31 = _mm512_fmadd_ps(t, d1, a31);
    a32 = _mm512_fmadd_ps(t, d2, a32);
    a33 = _mm512_fmadd_ps(t, d3, a33);
  }
  float* base = dw + (static_cast<size_t>(ky * s.k + kx) * ic + i0) * oc + oc0;
  auto fold = [&](float* p, __m512 v0, __m512 v1, __m512 v2, __m512 v3) {
    _mm512_storeu_ps(p, _mm512_add_ps(_mm512_loadu_ps(p), v0));
    _mm512_storeu_ps(p + kLanes, _mm512_add_ps(_mm512_loadu_ps(p + kLanes), v1));
    _mm512_storeu_ps(p + 2 * kLanes, _mm512_add_ps(_mm512_loadu_ps(p + 2 * kLanes), v2));
    _mm512_storeu_ps(p + 3 * kLanes, _mm512_add_ps(_mm512_loadu_ps(p + 3 * kLanes), v3));
  };
  fold(base, a00, a01, a02, a03);
  fold(base + oc, a10, a11, a12, a13);
  fold(base + 2 * static_cast<size_t>(oc), a20, a21, a22, a23);
  fold(base + 3 * static_cast<size_t>(oc), a30, a31, a32, a33);
}

// generic row tile: dmax input channels x one masked 16-channel slab
void bwd_w_row_small(const float* in, const float* dout, const ConvShape& s, float* dw, int ky,
                     int kx, int oy, int i0, int dmax, int oc0, __mmask16 mask) {
  const int st = s.stride, ic = s.ic, oc = s.oc;
  __m512 a0 = _mm512_setzero_ps(), a1 = a0, a2 = a0, a3 = a0;
  const float* irow = in + (static_cast<size_t>(oy * st + ky) * s.pw + kx) * ic + i0;
  const float* dyrow = dout + static_cast<size_t>(oy) * s.ow * oc + oc0;
  const size_t stic = static_cast<size_t>(st) * ic;
  for (int ox = 0; ox < s.ow; ++ox) {
    const __m512 dv = _mm512_maskz_loadu_ps(mask, dyrow + static_cast<size_t>(ox) * oc);
    const float* iv = irow + static_cast<size_t>(ox) * stic;
    a0 = _mm512_fmadd_ps(_mm512_set1_ps(iv[0]), dv, a0);
    if (dmax > 1) a1 = _mm512_fmadd_ps(_mm512_set1_ps(iv[1]), dv, a1);
    if (dmax > 2) a2 = _mm512_fmadd_ps(_mm512_set1_ps(iv[2]), dv, a2);
    if (dmax > 3) a3 = _mm512_fmadd_ps(_mm512_set1_ps(iv[3]), dv, a3);
  }
  float* base = dw + (static_cast<size_t>(ky * s.k + kx) * ic + i0) * oc + oc0;
  auto fold = [&](float* p, __m512 v) {
    _mm512_mask_storeu_ps(p, mask, _mm512_add_ps(_mm512_maskz_loadu_ps(mask, p), v));
  };
  fold(base, a0);
  if (dmax > 1) fold(base + oc, a1);
  if (dmax > 2) fold(base + 2 * static_cast<size_t>(oc), a2);
  if (dmax > 3) fold(base + 3 * static_cast<size_t>(oc), a3);
}

void bwd_w(const float* in, const float* dout, const ConvShape& s, float* dw, float* db) {
  for (int oy = 0; oy < s.oh; ++oy) {
    const float* dyrow = dout + static_cast<size_t>(oy) * s.ow * s.oc;
    for (int ox = 0; ox < s.ow; ++ox) {
      const float* dy = dyrow + static_cast<size_t>(ox) * s.oc;
      int c = 0;
      for (; c + kLanes <= s.oc; c += kLanes)
        _mm512_storeu_ps(db + c, _mm512_add_ps(_mm512_loadu_ps(db + c), _mm512_loadu_ps(dy + c)));
      for (; c < s.oc; ++c) db[c] += dy[c];
    }
  }
  for (int ky = 0; ky < s.k; ++ky) {
    for (int kx = 0; kx < s.k; ++kx) {
      for (int oy = 0; oy < s.oh; ++oy) {
        for (int i0 = 0; i0 < s.ic; i0 += 4) {
          int dmax = std::min(4, s.ic - i0);
          int oc0 = 0;
          if (dmax == 4)
            for (; oc0 + 4 * kLanes <= s.oc; oc0 += 4 * kLanes)
              bwd_w_row_4x64(in, dout, s, dw, ky, kx, oy, i0, oc0);
          for (; oc0 < s.oc; oc0 += kLanes) {
            int rem = s.oc - oc0;
            __mmask16 mask = rem >= kLanes ? static_cast<__mmask16>(0xffff)
                                           : static_cast<__mmask16>((1u << rem) - 1);
            bwd_w_row_small(in, dout, s, dw, ky, kx, oy, i0, dmax, oc0, mask);
          }
        }
      }
    }
  }
}

}  // namespace

const KernelTable& avx512_table() {
  static const KernelTable t{fwd, bwd_in, bwd_w, "avx512"};
  return t;
}

}  // namespace mer::kernels
