#pragma once

#include "mer/color.hpp"
#include "mer/ops.hpp"
#include "mer/tensor.hpp"

namespace mer {

struct LossWeights {
  double lambda1 = 0.1;   // reflectance term
  double lambda2 = 0.1;   // illumination term
  double lambda3 = 10.0;  // structure-awareness sharpness
  double lambda4 = 0.01;  // reflectance TV
};

template <typename T>
struct LossBreakdownT {
  T reconstruction{};
  T reflectance{};
  T illumination{};
  T reflectance_tv{};
  T total{};
};

using LossBreakdown = LossBreakdownT<float>;

namespace detail {
template <typename T>
inline T sgn(T x) {
  return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
}
// The one place the weighted sum is spelled out; everything that reports or
// tests `total` relies on this exact evaluation order.
template <typename T>
inline T combine(const LossWeights& w, T recon, T refl, T ill, T tv) {
  return ((recon + T(w.lambda1) * refl) + T(w.lambda2) * ill) + T(w.lambda4) * tv;
}
}  // namespace detail

// Mean |S - R o I|, illumination broadcast over RGB.
template <typename T>
T recon_loss(const Tensor<T>& S, const Tensor<T>& R, const Tensor<T>& I) {
  require(S.channels() == 3 && R.same_shape(S), "recon_loss: S and R must be HxWx3");
  require(I.channels() == 1 && I.height() == S.height() && I.width() == S.width(),
          "recon_loss: I must be HxWx1 matching S");
  double acc = 0.0;
  const T* s = S.data();
  const T* r = R.data();
  const T* il = I.data();
  const size_t n = I.size();
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) acc += std::abs(double(s[3 * i + c]) - double(r[3 * i + c]) * double(il[i]));
  return T(acc / double(S.size()));
}

// Mean |max_channel(R) - target| against a precomputed equalization target.
template <typename T>
T reflectance_loss_target(const Tensor<T>& R, const Tensor<T>& target) {
  require(R.channels() == 3, "reflectance_loss: R must be HxWx3");
  require(target.channels() == 1 && target.height() == R.height() && target.width() == R.width(),
          "reflectance_loss: target must be HxWx1 matching R");
  double acc = 0.0;
  const T* r = R.data();
  const T* t = target.data();
  const size_t n = target.size();
  for (size_t i = 0; i < n; ++i) {
    T m = std::max(r[3 * i], std::max(r[3 * i + 1], r[3 * i + 2]));
    acc += std::abs(double(m) - double(t[i]));
  }
  return T(acc / double(n));
}

// Entropy term only (the TV part of the reflectance constraint is reported
// separately). The target is the equalized max channel of S.
template <typename T>
T reflectance_loss(const Tensor<T>& R, const Tensor<T>& S) {
  require(S.same_shape(R), "reflectance_loss: R and S must match");
  Tensor<T> target = hist_equalize(max_channel(S));
  return reflectance_loss_target(R, target);
}

// Mean over pixels of |grad I| edge-weighted by exp(-lambda3 * mean_c |grad R|),
// both directions summed per pixel (so a constant R reduces it to tv_l1(I)).
template <typename T>
T illumination_loss(const Tensor<T>& I, const Tensor<T>& R, T lambda3) {
  require(I.channels() == 1 && R.channels() == 3 && I.height() == R.height() && I.width() == R.width(),
          "illumination_loss: I must be HxWx1, R HxWx3, same extent");
  GradientPairT<T> gi = grad(I);
  GradientPairT<T> wgt = structure_weight(grad(R), lambda3);
  double acc = 0.0;
  const size_t n = I.size();
  const T* gh = gi.horizontal.data();
  const T* gv = gi.vertical.data();
  const T* wh = wgt.horizontal.data();
  const T* wv = wgt.vertical.data();
  for (size_t i = 0; i < n; ++i)
    acc += std::abs(double(gh[i])) * double(wh[i]) + std::abs(double(gv[i])) * double(wv[i]);
  return T(acc / double(n));
}

template <typename T>
LossBreakdownT<T> total_loss_target(const Tensor<T>& S, const Tensor<T>& R, const Tensor<T>& I,
                                    const Tensor<T>& target, const LossWeights& w) {
  LossBreakdownT<T> b;
  b.reconstruction = recon_loss(S, R, I);
  b.reflectance = reflectance_loss_target(R, target);
  b.illumination = illumination_loss(I, R, T(w.lambda3));
  b.reflectance_tv = tv_l1(R);
  b.total = detail::combine(w, b.reconstruction, b.reflectance, b.illumination, b.reflectance_tv);
  return b;
}

template <typename T>
LossBreakdownT<T> total_loss(const Tensor<T>& S, const Tensor<T>& R, const Tensor<T>& I,
                             const LossWeights& w) {
  Tensor<T> target = hist_equalize(max_channel(S));
  return total_loss_target(S, R, I, target, w);
}

// Analytic gradients of total_loss w.r.t. R and I. S and the equalization
// target are constants. Subgradient of |x| at 0 is 0, and the max over
// channels routes onto the first maximal channel.
template <typename T>
LossBreakdownT<T> total_loss_backward(const Tensor<T>& S, const Tensor<T>& R, const Tensor<T>& I,
                                      const Tensor<T>& target, const LossWeights& w, Tensor<T>& dR,
                                      Tensor<T>& dI) {
  using detail::sgn;
  const int h = S.height(), wd = S.width();
  require(S.channels() == 3 && R.same_shape(S), "total_loss_backward: S/R shape");
  require(I.channels() == 1 && I.height() == h && I.width() == wd, "total_loss_backward: I shape");
  if (!dR.same_shape(R)) dR = Tensor<T>(h, wd, 3);
  if (!dI.same_shape(I)) dI = Tensor<T>(h, wd, 1);
  dR.fill(T(0));
  dI.fill(T(0));

  const size_t npx = static_cast<size_t>(h) * wd;
  const T inv_n1 = T(1) / T(npx * 3);  // reconstruction mean
  const T inv_n2 = T(1) / T(npx);      // reflectance mean
  const T inv_n3 = T(1) / T(npx);      // illumination mean
  const T inv_n4 = T(1) / T(npx * 3);  // TV mean

  LossBreakdownT<T> b;
  double acc_recon = 0.0, acc_refl = 0.0, acc_ill = 0.0, acc_tv = 0.0;

  const T* s = S.data();
  const T* r = R.data();
  const T* il = I.data();
  const T* tg = target.data();
  T* dr = dR.data();
  T* di = dI.data();

  for (size_t i = 0; i < npx; ++i) {
    for (int c = 0; c < 3; ++c) {
      T e = s[3 * i + c] - r[3 * i + c] * il[i];
      acc_recon += std::abs(double(e));
      T sg = sgn(e) * inv_n1;
      dr[3 * i + c] -= sg * il[i];
      di[i] -= sg * r[3 * i + c];
    }
    int a = 0;
    if (r[3 * i + 1] > r[3 * i + a]) a = 1;
    if (r[3 * i + 2] > r[3 * i + a]) a = 2;
    T res = r[3 * i + a] - tg[i];
    acc_refl += std::abs(double(res));
    dr[3 * i + a] += T(w.lambda1) * sgn(res) * inv_n2;
  }

  GradientPairT<T> gR = grad(R);
  GradientPairT<T> gI = grad(I);
  const T lambda3 = T(w.lambda3);

  for (int d = 0; d < 2; ++d) {
    const Tensor<T>& gr = d == 0 ? gR.horizontal : gR.vertical;
    const Tensor<T>& gi = d == 0 ? gI.horizontal : gI.vertical;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        // neighbor the forward difference reaches in this direction
        int ny = d == 0 ? y : y + 1;
        int nx = d == 0 ? x + 1 : x;
        bool interior = ny < h && nx < wd;

        const T* grc = &gr.at(y, x, 0);
        T collapsed = (std::abs(grc[0]) + std::abs(grc[1]) + std::abs(grc[2])) / T(3);
        T wexp = std::exp(-lambda3 * collapsed);
        T gval = gi.at(y, x, 0);
        acc_ill += std::abs(double(gval)) * double(wexp);

        // TV of R (and the shared sign terms for the illumination weight)
        for (int c = 0; c < 3; ++c) {
          acc_tv += std::abs(double(grc[c]));
          if (!interior) continue;
          T tv_term = T(w.lambda4) * sgn(grc[c]) * inv_n4;
          T wgt_term = T(w.lambda2) * std::abs(gval) * (-lambda3) * wexp * sgn(grc[c]) / T(3) * inv_n3;
          T push = tv_term + wgt_term;
          dR.at(ny, nx, c) += push;
          dR.at(y, x, c) -= push;
        }
        if (interior) {
          T t_i = T(w.lambda2) * sgn(gval) * wexp * inv_n3;
          dI.at(ny, nx, 0) += t_i;
          dI.at(y, x, 0) -= t_i;
        }
      }
    }
  }
  // acc_tv accumulated |gh| and |gv| across both direction passes already
  b.reconstruction = T(acc_recon / double(npx * 3));
  b.reflectance = T(acc_refl / double(npx));
  b.illumination = T(acc_ill / double(npx));
  b.reflectance_tv = T(acc_tv / double(npx * 3));
  b.total = detail::combine(w, b.reconstruction, b.reflectance, b.illumination, b.reflectance_tv);
  return b;
}

}  // namespace mer
