#include "ref_impl.hpp"

namespace mer::kernels {

namespace {

void fwd(const float* in, const float* w, const float* bias, const ConvShape& s, bool relu,
         float* out) {
  ref::conv_fwd<float>(in, w, bias, s, relu, out);
}
void bwd_in(const float* dout, const float* w, const ConvShape& s, float* din) {
  ref::conv_bwd_input<float>(dout, w, s, din);
}
void bwd_w(const float* in, const float* dout, const ConvShape& s, float* dw, float* db) {
  ref::conv_bwd_weights<float>(in, dout, s, dw, db);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{fwd, bwd_in, bwd_w, "scalar"};
  return t;
}

void conv_fwd_f64(const double* in, const double* w, const double* bias, const ConvShape& s,
                  bool relu, double* out) {
  ref::conv_fwd<double>(in, w, bias, s, relu, out);
}
void conv_bwd_input_f64(const double* dout, const double* w, const ConvShape& s, double* din) {
  ref::conv_bwd_input<double>(dout, w, s, din);
}
void conv_bwd_weights_f64(const double* in, const double* dout, const ConvShape& s, double* dw,
                          double* db) {
  ref::conv_bwd_weights<double>(in, dout, s, dw, db);
}

}  // namespace mer::kernels
